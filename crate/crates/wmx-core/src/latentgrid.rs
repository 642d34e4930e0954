//! Region-wise latent perturbation and the decoded latent grid.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nets::Vae;
use crate::rgae::SingularBasis;
use crate::scalar::Real;
use crate::store::{ClassFrame, FrameDataset, Palette, RgbImage};

/// Width of the separators between montage tiles, in pixels.
pub const SEPARATOR: usize = 2;
const SEPARATOR_RGB: [u8; 3] = [255, 255, 255];

/// Anything that maps a latent vector back to frame space.
pub trait LatentDecoder<T: Real>: Sync {
    fn latent_dim(&self) -> usize;

    /// `(channels, height, width)` of [`LatentDecoder::decode_dense`].
    fn dense_shape(&self) -> (usize, usize, usize);

    /// Real-valued decoder output: class probabilities for a VAE, the
    /// reconstructed frame vector for a linear basis.
    fn decode_dense(&self, z: &[T]) -> Result<Vec<T>>;

    fn decode_frame(&self, z: &[T]) -> Result<ClassFrame>;
}

/// Anything that maps a frame to a latent vector.
pub trait LatentEncoder<T: Real>: Sync {
    fn encode_frame(&self, frame: &ClassFrame) -> Result<Vec<T>>;
}

impl<T: Real> LatentDecoder<T> for Vae<T> {
    fn latent_dim(&self) -> usize {
        Vae::latent_dim(self)
    }

    fn dense_shape(&self) -> (usize, usize, usize) {
        let f = self.frame_shape();
        (f.channels, f.height, f.width)
    }

    fn decode_dense(&self, z: &[T]) -> Result<Vec<T>> {
        Ok(self.decode(z)?.probs)
    }

    fn decode_frame(&self, z: &[T]) -> Result<ClassFrame> {
        Ok(self.decode(z)?.frame)
    }
}

impl<T: Real> LatentEncoder<T> for Vae<T> {
    fn encode_frame(&self, frame: &ClassFrame) -> Result<Vec<T>> {
        self.encode(frame)
    }
}

impl<T: Real> LatentDecoder<T> for SingularBasis<T> {
    fn latent_dim(&self) -> usize {
        self.k()
    }

    fn dense_shape(&self) -> (usize, usize, usize) {
        let m = self.meta();
        (m.vectorization.channels(m.class_count), m.height, m.width)
    }

    fn decode_dense(&self, z: &[T]) -> Result<Vec<T>> {
        self.decode(z)
    }

    fn decode_frame(&self, z: &[T]) -> Result<ClassFrame> {
        self.render(&self.decode(z)?)
    }
}

impl<T: Real> LatentEncoder<T> for SingularBasis<T> {
    fn encode_frame(&self, frame: &ClassFrame) -> Result<Vec<T>> {
        self.encode(&self.vectorize(frame)?)
    }
}

/// Grid parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub region_size: usize,
    /// One grid row per increment.
    pub increments: Vec<f64>,
    /// Appends a row with increment 0, which must reproduce `decode(z)`.
    pub debug_zero_row: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            region_size: 10,
            increments: vec![1.0, 2.0, 3.0],
            debug_zero_row: false,
        }
    }
}

/// Adds `delta` to every entry of region `region`.
pub fn perturb_region<T: Real>(z: &[T], region: usize, region_size: usize, delta: T) -> Result<Vec<T>> {
    if region_size == 0 {
        return Err(Error::invalid("region size must be positive"));
    }
    let regions = z.len() / region_size;
    if region >= regions {
        return Err(Error::invalid(format!(
            "region {region} out of range (latent has {regions} regions)"
        )));
    }
    let mut out = z.to_vec();
    out[region * region_size..(region + 1) * region_size]
        .iter_mut()
        .for_each(|v| *v += delta);
    Ok(out)
}

/// Decoded perturbations: row `r` uses `increments[r]`, column `c` perturbs region `c`.
#[derive(Debug, Clone)]
pub struct LatentGrid<T> {
    pub source: Vec<T>,
    pub region_size: usize,
    pub increments: Vec<f64>,
    pub frames: Vec<Vec<ClassFrame>>,
    pub dense: Vec<Vec<Vec<T>>>,
    /// Decoder invocations spent building the grid.
    pub decode_calls: usize,
}

impl<T: Real> LatentGrid<T> {
    pub fn rows(&self) -> usize {
        self.frames.len()
    }

    pub fn cols(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    /// Perturbed latent vector behind cell `(row, col)`.
    pub fn cell_latent(&self, row: usize, col: usize) -> Result<Vec<T>> {
        let delta = *self
            .increments
            .get(row)
            .ok_or_else(|| Error::invalid(format!("row {row} out of range")))?;
        perturb_region(&self.source, col, self.region_size, T::lit(delta))
    }

    /// Cells in row-major order.
    pub fn to_dataset(&self) -> Result<FrameDataset> {
        let all: Vec<ClassFrame> = self.frames.iter().flatten().cloned().collect();
        FrameDataset::from_frames(&all)
    }
}

/// Decodes every region perturbation of `z`.
pub fn build_grid<T: Real, D: LatentDecoder<T> + ?Sized>(
    decoder: &D,
    z: &[T],
    config: &GridConfig,
) -> Result<LatentGrid<T>> {
    if z.len() != decoder.latent_dim() {
        return Err(Error::shape(format!(
            "latent has {} entries, decoder expects {}",
            z.len(),
            decoder.latent_dim()
        )));
    }
    if config.region_size == 0 || !z.len().is_multiple_of(config.region_size) {
        return Err(Error::invalid(format!(
            "latent dimension {} is not divisible by region size {}",
            z.len(),
            config.region_size
        )));
    }
    let mut increments = config.increments.clone();
    if config.debug_zero_row {
        increments.push(0.0);
    }
    if increments.is_empty() {
        return Err(Error::invalid("no increments"));
    }
    let cols = z.len() / config.region_size;
    let calls = AtomicUsize::new(0);
    let cells: Vec<(ClassFrame, Vec<T>)> = (0..increments.len() * cols)
        .into_par_iter()
        .map(|idx| {
            let (r, c) = (idx / cols, idx % cols);
            let zp = perturb_region(z, c, config.region_size, T::lit(increments[r]))?;
            let dense = decoder.decode_dense(&zp)?;
            let frame = decoder.decode_frame(&zp)?;
            calls.fetch_add(1, Ordering::Relaxed);
            Ok((frame, dense))
        })
        .collect::<Result<_>>()?;
    let mut frames = Vec::with_capacity(increments.len());
    let mut dense = Vec::with_capacity(increments.len());
    let mut it = cells.into_iter();
    for _ in 0..increments.len() {
        let (f, d): (Vec<_>, Vec<_>) = it.by_ref().take(cols).unzip();
        frames.push(f);
        dense.push(d);
    }
    Ok(LatentGrid {
        source: z.to_vec(),
        region_size: config.region_size,
        increments,
        frames,
        dense,
        decode_calls: calls.into_inner(),
    })
}

/// Tiles frames row-major with separators between tiles.
pub fn tile_frames(rows: &[Vec<ClassFrame>], palette: &Palette) -> Result<RgbImage> {
    let first = rows
        .first()
        .and_then(|r| r.first())
        .ok_or_else(|| Error::invalid("nothing to tile"))?;
    let (h, w) = (first.height(), first.width());
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) || rows.iter().flatten().any(|f| f.height() != h || f.width() != w) {
        return Err(Error::shape("ragged tile layout"));
    }
    let nrows = rows.len();
    let mut img = RgbImage::new(ncols * w + (ncols - 1) * SEPARATOR, nrows * h + (nrows - 1) * SEPARATOR);
    for y in 0..img.height {
        for x in 0..img.width {
            img.set_pixel(y, x, SEPARATOR_RGB);
        }
    }
    for (r, row) in rows.iter().enumerate() {
        for (c, frame) in row.iter().enumerate() {
            img.blit(&frame.render(palette), r * (h + SEPARATOR), c * (w + SEPARATOR));
        }
    }
    Ok(img)
}

pub fn grid_montage<T: Real>(grid: &LatentGrid<T>, palette: &Palette) -> Result<RgbImage> {
    tile_frames(&grid.frames, palette)
}

//! Mapping latent relevance to pixels and comparing heatmaps with attention.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::latentgrid::LatentDecoder;
use crate::numerics::{nss, pearson};
use crate::scalar::Real;
use crate::store::{ClassFrame, RgbImage};

/// Perturbation settings for [`relevance_to_pixels`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelMapConfig {
    pub delta: f64,
    /// Keep only the top `q` fraction of each latent's sensitivity map;
    /// `None` keeps the full maps.
    pub top_q: Option<f64>,
}

impl Default for PixelMapConfig {
    fn default() -> Self {
        Self {
            delta: 1.0,
            top_q: Some(0.10),
        }
    }
}

/// Non-negative `height × width` relevance map.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceHeatmap<T> {
    pub height: usize,
    pub width: usize,
    /// Normalized to max 1 unless all zero.
    pub values: Vec<T>,
    /// Maximum before normalization.
    pub scale: T,
}

impl<T: Real> RelevanceHeatmap<T> {
    /// Unnormalized map.
    pub fn raw(&self) -> Vec<T> {
        self.values.iter().map(|&v| v * self.scale).collect()
    }

    pub fn to_image(&self) -> RgbImage {
        let gray: Vec<u8> = self
            .values
            .iter()
            .map(|&v| (v * T::lit(255.0)).round().to_u8().unwrap_or(0))
            .collect();
        RgbImage::from_gray(self.width, self.height, &gray)
    }

    /// Quantized to a 256-level grayscale frame for storage in a frame file.
    pub fn to_frame(&self) -> Result<ClassFrame> {
        let data = self
            .values
            .iter()
            .map(|&v| (v * T::lit(254.0)).round().to_u8().unwrap_or(0))
            .collect();
        ClassFrame::new(self.height, self.width, 255, data)
    }
}

/// Per-pixel L1 distance across channels of two dense decoder outputs.
fn channel_l1<T: Real>(a: &[T], b: &[T], channels: usize, plane: usize) -> Vec<T> {
    (0..plane)
        .map(|p| (0..channels).map(|c| (a[c * plane + p] - b[c * plane + p]).abs()).sum())
        .collect()
}

/// Zeroes everything below the `(1 − q)` quantile of `d`.
fn keep_top<T: Real>(d: &mut [T], q: f64) {
    let keep = ((d.len() as f64) * q).ceil() as usize;
    if keep >= d.len() {
        return;
    }
    if keep == 0 {
        d.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let mut sorted = d.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let threshold = sorted[keep - 1];
    d.iter_mut().filter(|v| **v < threshold).for_each(|v| *v = T::zero());
}

/// Sensitivity map of latent `i`: per-pixel L1 change of the decoder output
/// when `z_i` grows by `delta`.
pub fn latent_sensitivity<T: Real, D: LatentDecoder<T> + ?Sized>(
    decoder: &D,
    z: &[T],
    base: &[T],
    i: usize,
    delta: T,
) -> Result<Vec<T>> {
    let (channels, h, w) = decoder.dense_shape();
    let mut zp = z.to_vec();
    zp[i] += delta;
    let out = decoder.decode_dense(&zp)?;
    Ok(channel_l1(&out, base, channels, h * w))
}

/// `Σ_i |R_i| · D_i`, normalized by its maximum.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail the check
pub fn relevance_to_pixels<T: Real, D: LatentDecoder<T> + ?Sized>(
    decoder: &D,
    z: &[T],
    r_z: &[T],
    config: &PixelMapConfig,
) -> Result<RelevanceHeatmap<T>> {
    if z.len() != decoder.latent_dim() || r_z.len() != z.len() {
        return Err(Error::shape(format!(
            "latent {} and relevance {} must both have {} entries",
            z.len(),
            r_z.len(),
            decoder.latent_dim()
        )));
    }
    if !(config.delta > 0.0) {
        return Err(Error::invalid("perturbation δ must be positive"));
    }
    if let Some(q) = config.top_q {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::invalid("top-q fraction must lie in (0, 1]"));
        }
    }
    let (_, h, w) = decoder.dense_shape();
    let base = decoder.decode_dense(z)?;
    let delta = T::lit(config.delta);
    let parts: Vec<Option<Vec<T>>> = (0..z.len())
        .into_par_iter()
        .map(|i| {
            if r_z[i] == T::zero() {
                return Ok(None);
            }
            let mut d = latent_sensitivity(decoder, z, &base, i, delta)?;
            if let Some(q) = config.top_q {
                keep_top(&mut d, q);
            }
            let weight = r_z[i].abs();
            d.iter_mut().for_each(|v| *v *= weight);
            Ok(Some(d))
        })
        .collect::<Result<_>>()?;
    let mut raw = vec![T::zero(); h * w];
    for d in parts.into_iter().flatten() {
        raw.iter_mut().zip(d).for_each(|(a, b)| *a += b);
    }
    let scale = raw.iter().copied().fold(T::zero(), T::max);
    let values = if scale > T::zero() {
        raw.iter().map(|&v| v / scale).collect()
    } else {
        raw
    };
    Ok(RelevanceHeatmap {
        height: h,
        width: w,
        values,
        scale,
    })
}

/// NSS and Pearson correlation of one heatmap against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaliencyScores<T> {
    pub nss: T,
    pub pearson: T,
}

pub fn compare_saliency<T: Real>(heatmap: &[T], attention: &[T], fixations: &[bool]) -> Result<SaliencyScores<T>> {
    if heatmap.len() != attention.len() || heatmap.len() != fixations.len() {
        return Err(Error::shape("heatmap, attention map and fixation mask differ in size"));
    }
    Ok(SaliencyScores {
        nss: nss(heatmap, fixations)?,
        pearson: pearson(heatmap, attention)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_quantile_keeps_largest() {
        let mut d = vec![0.1f64, 0.9, 0.5, 0.3, 0.7, 0.2, 0.0, 0.4, 0.8, 0.6];
        keep_top(&mut d, 0.2);
        assert_eq!(d.iter().filter(|&&v| v > 0.0).count(), 2);
        assert_eq!(d[1], 0.9);
        assert_eq!(d[8], 0.8);
    }

    #[test]
    fn self_comparison() {
        let a = [0.1f64, 0.4, 0.9, 0.3];
        let s = compare_saliency(&a, &a, &[false, false, true, false]).unwrap();
        assert!((s.pearson - 1.0).abs() < 1e-12);
        assert!(s.nss > 0.0);
        assert!(compare_saliency(&a, &a[..3], &[true; 4]).is_err());
    }
}

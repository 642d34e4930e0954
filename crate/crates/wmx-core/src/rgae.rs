//! Transparent linear autoencoder built from low-pass filtered singular
//! vectors of a frame sample.
//!
//! Frames become real vectors, the top singular directions of the sample
//! matrix are coarse-grained by discarding all but the lowest spatial
//! frequencies, and the result `α` encodes with `z = αᵀx` and decodes with
//! `x̂ = αz`.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{
    fft2, fftshift, fix_sign, kl_divergence, low_pass, minmax_normalize, norm2, ranked_bins, svd, Matrix, Svd,
    KL_EPSILON,
};
use crate::scalar::Real;
use crate::store::{
    write_ppm, BasisMeta, ClassFrame, ModelKind, ModelManifest, RgbImage, Tensor, TensorMap, TensorRecord,
    Vectorization,
};

const ALPHA: &str = "alpha";
const SINGULAR_VALUES: &str = "singular_values";
const MEAN: &str = "mean";

/// Hyperparameters of [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitConfig {
    /// Number of singular vectors kept.
    pub k: usize,
    /// Frequency bins kept per vector; `None` disables filtering.
    pub cutoff: Option<usize>,
    /// Subtract the sample mean before the decomposition.
    pub center: bool,
    /// Re-orthonormalize the filtered vectors.
    pub reorthonormalize: bool,
    pub vectorization: Vectorization,
}

impl FitConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            cutoff: None,
            center: false,
            reorthonormalize: false,
            vectorization: Vectorization::Intensity,
        }
    }

    pub fn with_cutoff(mut self, cutoff: Option<usize>) -> Self {
        self.cutoff = cutoff;
        self
    }
}

/// The fitted basis `α` (`D × k`) and its provenance.
#[derive(Debug, Clone)]
pub struct SingularBasis<T> {
    alpha: Matrix<T>,
    singular_values: Vec<T>,
    mean: Option<Vec<T>>,
    meta: BasisMeta,
}

/// A sample matrix and its decomposition, reusable across cutoffs.
#[derive(Debug, Clone)]
pub struct SampleDecomposition<T> {
    pub svd: Svd<T>,
    pub mean: Option<Vec<T>>,
    pub vectorization: Vectorization,
    pub height: usize,
    pub width: usize,
    pub class_count: u8,
}

/// Stacks frames as rows of an `N × D` matrix.
pub fn data_matrix<T: Real>(frames: &[ClassFrame], mode: Vectorization) -> Result<Matrix<T>> {
    let first = frames.first().ok_or_else(|| Error::invalid("no frames"))?;
    if frames
        .iter()
        .any(|f| f.height() != first.height() || f.width() != first.width() || f.class_count() != first.class_count())
    {
        return Err(Error::shape("frames differ in shape or class count"));
    }
    let rows: Vec<Vec<T>> = frames.par_iter().map(|f| f.to_vector(mode)).collect();
    Matrix::from_rows(&rows)
}

/// Vectorizes the sample and decomposes it.
pub fn decompose<T: Real>(frames: &[ClassFrame], center: bool, mode: Vectorization) -> Result<SampleDecomposition<T>> {
    let mut x = data_matrix::<T>(frames, mode)?;
    let mean = if center {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![T::zero(); d];
        for r in 0..n {
            for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        let inv = T::one() / T::from_usize_lossy(n);
        mean.iter_mut().for_each(|m| *m *= inv);
        for r in 0..n {
            for (v, &m) in x.row_mut(r).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        Some(mean)
    } else {
        None
    };
    let first = &frames[0];
    Ok(SampleDecomposition {
        svd: svd(&x)?,
        mean,
        vectorization: mode,
        height: first.height(),
        width: first.width(),
        class_count: first.class_count(),
    })
}

/// Fits a basis to a frame sample.
pub fn fit<T: Real>(frames: &[ClassFrame], config: &FitConfig) -> Result<SingularBasis<T>> {
    if frames.len() < config.k {
        return Err(Error::invalid(format!(
            "sample of {} frames cannot supply k = {}",
            frames.len(),
            config.k
        )));
    }
    let dec = decompose(frames, config.center, config.vectorization)?;
    from_decomposition(&dec, config.k, config.cutoff, config.reorthonormalize)
}

/// Builds a basis from a precomputed decomposition.
pub fn from_decomposition<T: Real>(
    dec: &SampleDecomposition<T>,
    k: usize,
    cutoff: Option<usize>,
    reorthonormalize: bool,
) -> Result<SingularBasis<T>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let rank = dec.svd.rank();
    if k > rank {
        return Err(Error::invalid(format!("k = {k} exceeds the sample rank {rank}")));
    }
    let (h, w) = (dec.height, dec.width);
    let channels = dec.vectorization.channels(dec.class_count);
    if let Some(c) = cutoff {
        if c == 0 || c > h * w {
            return Err(Error::invalid(format!("cutoff {c} outside 1..={}", h * w)));
        }
    }
    let columns: Vec<Vec<T>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut v = dec.svd.vt.row(i).to_vec();
            fix_sign(&mut v);
            match cutoff {
                None => Ok(v),
                Some(c) => {
                    let mut out = Vec::with_capacity(v.len());
                    for plane in v.chunks(h * w) {
                        let img = Matrix::from_vec(h, w, plane.to_vec())?;
                        out.extend_from_slice(low_pass(&img, c)?.as_slice());
                    }
                    Ok(out)
                }
            }
        })
        .collect::<Result<_>>()?;
    debug_assert!(columns.iter().all(|c| c.len() == channels * h * w));
    let columns = if reorthonormalize {
        orthonormalize(columns)?
    } else {
        columns
    };
    let d = channels * h * w;
    let mut alpha = Matrix::zeros(d, k);
    for (j, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            alpha[(r, j)] = v;
        }
    }
    if !alpha.is_finite() {
        return Err(Error::NonFinite("filtered basis"));
    }
    Ok(SingularBasis {
        alpha,
        singular_values: dec.svd.s[..k].to_vec(),
        mean: dec.mean.clone(),
        meta: BasisMeta {
            cutoff,
            centered: dec.mean.is_some(),
            reorthonormalized: reorthonormalize,
            vectorization: dec.vectorization,
            height: h,
            width: w,
            class_count: dec.class_count,
        },
    })
}

/// Modified Gram–Schmidt with one re-orthogonalization pass.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail the check
fn orthonormalize<T: Real>(mut cols: Vec<Vec<T>>) -> Result<Vec<Vec<T>>> {
    for j in 0..cols.len() {
        let (done, rest) = cols.split_at_mut(j);
        let v = &mut rest[0];
        let scale = norm2(v);
        for _ in 0..2 {
            for q in done.iter() {
                let p: T = q.iter().zip(v.iter()).map(|(&a, &b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(x, &qi)| *x -= p * qi);
            }
        }
        let n = norm2(v);
        if !(n > scale * T::lit(1e-10)) || n == T::zero() {
            return Err(Error::Undefined(format!(
                "filtered vector {j} is linearly dependent on earlier ones"
            )));
        }
        v.iter_mut().for_each(|x| *x /= n);
    }
    Ok(cols)
}

impl<T: Real> SingularBasis<T> {
    pub fn alpha(&self) -> &Matrix<T> {
        &self.alpha
    }

    pub fn singular_values(&self) -> &[T] {
        &self.singular_values
    }

    pub fn mean(&self) -> Option<&[T]> {
        self.mean.as_deref()
    }

    pub fn meta(&self) -> &BasisMeta {
        &self.meta
    }

    pub fn k(&self) -> usize {
        self.alpha.cols()
    }

    /// Length of a frame vector.
    pub fn dim(&self) -> usize {
        self.alpha.rows()
    }

    pub fn vectorize(&self, frame: &ClassFrame) -> Result<Vec<T>> {
        let m = &self.meta;
        if frame.height() != m.height || frame.width() != m.width || frame.class_count() != m.class_count {
            return Err(Error::shape(format!(
                "frame {}x{} ({} classes) does not match basis {}x{} ({} classes)",
                frame.height(),
                frame.width(),
                frame.class_count(),
                m.height,
                m.width,
                m.class_count
            )));
        }
        Ok(frame.to_vector(m.vectorization))
    }

    /// `z = αᵀ(x − mean)`.
    pub fn encode(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!(
                "frame vector has {} entries, basis expects {}",
                x.len(),
                self.dim()
            )));
        }
        match &self.mean {
            None => self.alpha.tr_matvec(x),
            Some(mean) => {
                let centered: Vec<T> = x.iter().zip(mean).map(|(&a, &b)| a - b).collect();
                self.alpha.tr_matvec(&centered)
            }
        }
    }

    /// `x̂ = αz + mean`.
    pub fn decode(&self, z: &[T]) -> Result<Vec<T>> {
        if z.len() != self.k() {
            return Err(Error::shape(format!(
                "latent has {} entries, basis has k = {}",
                z.len(),
                self.k()
            )));
        }
        let mut x = self.alpha.matvec(z)?;
        if let Some(mean) = &self.mean {
            x.iter_mut().zip(mean).for_each(|(v, &m)| *v += m);
        }
        Ok(x)
    }

    /// Quantizes a decoded vector to the nearest class.
    pub fn render(&self, x: &[T]) -> Result<ClassFrame> {
        let m = &self.meta;
        ClassFrame::from_vector(x, m.vectorization, m.height, m.width, m.class_count)
    }

    pub fn reconstruct(&self, frame: &ClassFrame) -> Result<Vec<T>> {
        self.decode(&self.encode(&self.vectorize(frame)?)?)
    }

    /// KL between the normalized frame vector and the clipped, normalized
    /// reconstruction.
    pub fn reconstruction_kl(&self, frame: &ClassFrame) -> Result<T> {
        let x = self.vectorize(frame)?;
        let xh: Vec<T> = self
            .decode(&self.encode(&x)?)?
            .into_iter()
            .map(|v| v.max(T::zero()).min(T::one()))
            .collect();
        kl_divergence(&x, &xh, T::lit(KL_EPSILON))
    }

    /// Mean reconstruction KL over a test set.
    pub fn evaluate(&self, frames: &[ClassFrame]) -> Result<T> {
        if frames.is_empty() {
            return Err(Error::invalid("empty test set"));
        }
        let errs: Vec<T> = frames
            .par_iter()
            .map(|f| self.reconstruction_kl(f))
            .collect::<Result<_>>()?;
        Ok(errs.into_iter().sum::<T>() / T::from_usize_lossy(frames.len()))
    }

    /// Frobenius norm of `X − X̂` over a frame set (rows reconstructed
    /// without clipping).
    pub fn frobenius_error(&self, frames: &[ClassFrame]) -> Result<T> {
        let sq: Vec<T> = frames
            .par_iter()
            .map(|f| {
                let x = self.vectorize(f)?;
                let xh = self.decode(&self.encode(&x)?)?;
                Ok(x.iter().zip(&xh).map(|(&a, &b)| (a - b) * (a - b)).sum())
            })
            .collect::<Result<_>>()?;
        Ok(sq.into_iter().sum::<T>().sqrt())
    }

    /// Column `i` as a `height × width` image; one-hot bases collapse
    /// channels by per-pixel L2 norm.
    pub fn column_image(&self, i: usize) -> Result<Matrix<T>> {
        if i >= self.k() {
            return Err(Error::invalid(format!("column {i} of a k = {} basis", self.k())));
        }
        let (h, w) = (self.meta.height, self.meta.width);
        let col = self.alpha.col(i);
        let img = match self.meta.vectorization {
            Vectorization::Intensity => col,
            Vectorization::OneHot => {
                let plane = h * w;
                (0..plane)
                    .map(|p| col.iter().skip(p).step_by(plane).map(|&v| v * v).sum::<T>().sqrt())
                    .collect()
            }
        };
        Matrix::from_vec(h, w, img)
    }

    pub fn to_parts(&self) -> Result<(ModelManifest, TensorMap)> {
        let mut manifest = ModelManifest::new(ModelKind::Basis, self.k());
        manifest.basis = Some(self.meta.clone());
        let mut tensors = TensorMap::new();
        tensors.insert(
            ALPHA.into(),
            Tensor::from_real(vec![self.dim(), self.k()], self.alpha.as_slice())?,
        );
        tensors.insert(
            SINGULAR_VALUES.into(),
            Tensor::from_real(vec![self.k()], &self.singular_values)?,
        );
        if let Some(mean) = &self.mean {
            tensors.insert(MEAN.into(), Tensor::from_real(vec![mean.len()], mean)?);
        }
        manifest.tensors = tensors
            .iter()
            .map(|(k, t)| TensorRecord::new(k.clone(), t.shape.clone()))
            .collect();
        Ok((manifest, tensors))
    }

    pub fn from_parts(manifest: &ModelManifest, tensors: &TensorMap) -> Result<Self> {
        if manifest.model_kind != ModelKind::Basis {
            return Err(Error::shape("manifest does not describe a singular basis"));
        }
        let meta = manifest
            .basis
            .clone()
            .ok_or_else(|| Error::shape("basis manifest lacks basis metadata"))?;
        let k = manifest.latent_dim;
        let d = meta.vectorization.dim(meta.height, meta.width, meta.class_count);
        let get = |name: &str, shape: &[usize]| -> Result<Vec<T>> {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
            if t.shape != shape {
                return Err(Error::shape(format!(
                    "tensor `{name}` has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            Ok(t.to_real())
        };
        let mean = if meta.centered { Some(get(MEAN, &[d])?) } else { None };
        Ok(Self {
            alpha: Matrix::from_vec(d, k, get(ALPHA, &[d, k])?)?,
            singular_values: get(SINGULAR_VALUES, &[k])?,
            mean,
            meta,
        })
    }
}

/// Grayscale rendering of a real image after min-max normalization.
pub fn gray_image<T: Real>(img: &Matrix<T>) -> RgbImage {
    let gray: Vec<u8> = minmax_normalize(img.as_slice())
        .into_iter()
        .map(|v| (v * T::lit(255.0)).round().to_u8().unwrap_or(0))
        .collect();
    RgbImage::from_gray(img.cols(), img.rows(), &gray)
}

/// Centered log-magnitude spectrum of an image, for display.
pub fn spectrum_image<T: Real>(img: &Matrix<T>) -> Result<RgbImage> {
    let mags = fft2(img).magnitudes();
    let logm: Vec<T> = mags.as_slice().iter().map(|&m| m.ln_1p()).collect();
    let shifted = fftshift(&logm, img.rows(), img.cols());
    Ok(gray_image(&Matrix::from_vec(img.rows(), img.cols(), shifted)?))
}

/// Share of spectral energy carried by the lowest `fraction` of frequency bins.
pub fn low_frequency_energy<T: Real>(img: &Matrix<T>, fraction: f64) -> T {
    let (h, w) = (img.rows(), img.cols());
    let spectrum = fft2(img);
    let total = spectrum.energy();
    if total == T::zero() {
        return T::zero();
    }
    let keep = ((h * w) as f64 * fraction).ceil() as usize;
    let low: T = ranked_bins(h, w)
        .into_iter()
        .take(keep)
        .map(|i| spectrum.data[i].norm_sqr())
        .sum();
    low / total
}

/// Writes `alpha_<i>.ppm` and `alpha_<i>_fft.ppm` for the first `top_k`
/// columns and returns the written file names.
pub fn visualize_basis<T: Real>(basis: &SingularBasis<T>, top_k: usize, out_dir: &Path) -> Result<Vec<String>> {
    if top_k > basis.k() {
        return Err(Error::invalid(format!("top_k = {top_k} exceeds k = {}", basis.k())));
    }
    let mut names = Vec::with_capacity(2 * top_k);
    for i in 0..top_k {
        let img = basis.column_image(i)?;
        let name = format!("alpha_{i}.ppm");
        write_ppm(&gray_image(&img), out_dir.join(&name))?;
        names.push(name);
        let name = format!("alpha_{i}_fft.ppm");
        write_ppm(&spectrum_image(&img)?, out_dir.join(&name))?;
        names.push(name);
    }
    Ok(names)
}

//! Deterministic numerical kernels: SVD, 2D FFT, low-pass projection and the
//! comparison metrics.

mod fft;
mod matrix;
mod metrics;
mod svd;

pub use fft::{centered_frequency, fft2, fftshift, ifft2, low_pass, low_pass_mask, ranked_bins, Spectrum2D};
pub use matrix::{axpy, dot, norm2, Matrix};
pub use metrics::{
    correlation_distance, cosine_similarity, heaviside_pulse, kl_divergence, minmax_normalize, nss, pearson,
    smoothed_distribution, temporal_gradient, CorrelationForm, KL_EPSILON,
};
pub use rustfft::num_complex::Complex;
pub use svd::{fix_sign, svd, Svd};

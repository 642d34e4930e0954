//! 2D discrete Fourier transforms and the frequency-mode low-pass projection.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major 2D spectrum in standard DFT ordering (DC at `(0, 0)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> Spectrum2D<T> {
    #[inline]
    pub fn at(&self, ky: usize, kx: usize) -> Complex<T> {
        self.data[ky * self.width + kx]
    }

    pub fn magnitudes(&self) -> Matrix<T> {
        let data = self.data.iter().map(|c| c.norm()).collect();
        Matrix::from_vec(self.height, self.width, data).expect("spectrum dims are positive")
    }

    /// Total spectral energy `Σ |F|²`.
    pub fn energy(&self) -> T {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Forward 2D DFT (unnormalized).
pub fn fft2<T: Real>(image: &Matrix<T>) -> Spectrum2D<T> {
    let (h, w) = (image.rows(), image.cols());
    let mut data: Vec<Complex<T>> = image.as_slice().iter().map(|&v| Complex::new(v, T::zero())).collect();
    transform(&mut data, h, w, false);
    Spectrum2D {
        height: h,
        width: w,
        data,
    }
}

/// Inverse 2D DFT scaled by `1/(H·W)`; returns the real part.
pub fn ifft2<T: Real>(spectrum: &Spectrum2D<T>) -> Matrix<T> {
    let (h, w) = (spectrum.height, spectrum.width);
    let mut data = spectrum.data.clone();
    transform(&mut data, h, w, true);
    let scale = T::one() / T::from_usize_lossy(h * w);
    let real = data.into_iter().map(|c| c.re * scale).collect();
    Matrix::from_vec(h, w, real).expect("spectrum dims are positive")
}

fn transform<T: Real>(data: &mut [Complex<T>], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::<T>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::new(T::zero(), T::zero()); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col_fft.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
}

/// Signed (centered) frequency coordinate of DFT index `k` along an axis of length `n`.
#[inline]
pub fn centered_frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Frequency bins sorted by squared distance of their centered coordinates from DC,
/// ties broken by row-major index.
pub fn ranked_bins(h: usize, w: usize) -> Vec<usize> {
    let mut bins: Vec<(i64, usize)> = (0..h * w)
        .map(|idx| {
            let fy = centered_frequency(idx / w, h);
            let fx = centered_frequency(idx % w, w);
            (fy * fy + fx * fx, idx)
        })
        .collect();
    bins.sort_unstable();
    bins.into_iter().map(|(_, idx)| idx).collect()
}

/// Mask of retained bins: the `cutoff` bins nearest DC plus their conjugate partners.
pub fn low_pass_mask(h: usize, w: usize, cutoff: usize) -> Result<Vec<bool>> {
    if h == 0 || w == 0 {
        return Err(Error::shape("low-pass on an empty image"));
    }
    if cutoff == 0 || cutoff > h * w {
        return Err(Error::invalid(format!("cutoff {cutoff} outside 1..={}", h * w)));
    }
    let mut mask = vec![false; h * w];
    for idx in ranked_bins(h, w).into_iter().take(cutoff) {
        let (ky, kx) = (idx / w, idx % w);
        mask[idx] = true;
        mask[((h - ky) % h) * w + (w - kx) % w] = true;
    }
    Ok(mask)
}

/// Keeps the lowest `cutoff` frequency modes (with conjugate partners) and
/// transforms back. A linear, idempotent projection.
pub fn low_pass<T: Real>(image: &Matrix<T>, cutoff: usize) -> Result<Matrix<T>> {
    let mask = low_pass_mask(image.rows(), image.cols(), cutoff)?;
    let mut spectrum = fft2(image);
    for (c, keep) in spectrum.data.iter_mut().zip(&mask) {
        if !keep {
            *c = Complex::new(T::zero(), T::zero());
        }
    }
    Ok(ifft2(&spectrum))
}

/// Moves DC to the image center (for display).
pub fn fftshift<T: Copy>(data: &[T], h: usize, w: usize) -> Vec<T> {
    let mut out = data.to_vec();
    for y in 0..h {
        for x in 0..w {
            let sy = (y + h / 2) % h;
            let sx = (x + w / 2) % w;
            out[sy * w + sx] = data[y * w + x];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_only_dc() {
        let img = Matrix::from_vec(3, 5, vec![2.5f64; 15]).unwrap();
        let s = fft2(&img);
        assert!((s.at(0, 0).re - 2.5 * 15.0).abs() < 1e-9);
        for (i, c) in s.data.iter().enumerate().skip(1) {
            assert!(c.norm() < 1e-9, "bin {i} = {c}");
        }
    }

    #[test]
    fn impulse_is_flat() {
        let mut img = Matrix::<f64>::zeros(4, 6);
        img[(0, 0)] = 1.0;
        for c in fft2(&img).data {
            assert!((c.re - 1.0).abs() < 1e-12 && c.im.abs() < 1e-12);
        }
    }

    #[test]
    fn low_pass_cutoff_bounds() {
        let img = Matrix::<f64>::zeros(3, 3);
        assert!(low_pass(&img, 0).is_err());
        assert!(low_pass(&img, 10).is_err());
        assert!(low_pass(&img, 9).is_ok());
    }

    #[test]
    fn cutoff_one_keeps_mean() {
        let data: Vec<f64> = (0..20).map(|i| (i * i % 7) as f64).collect();
        let mean = data.iter().sum::<f64>() / 20.0;
        let img = Matrix::from_vec(4, 5, data).unwrap();
        let out = low_pass(&img, 1).unwrap();
        for v in out.as_slice() {
            assert!((v - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_is_conjugate_symmetric() {
        for (h, w) in [(45, 85), (4, 6), (1, 7)] {
            for cutoff in [1, 2, 5, 17, h * w / 2] {
                if cutoff == 0 || cutoff > h * w {
                    continue;
                }
                let mask = low_pass_mask(h, w, cutoff).unwrap();
                assert!(mask.iter().filter(|&&m| m).count() >= cutoff);
                for idx in 0..h * w {
                    let (ky, kx) = (idx / w, idx % w);
                    assert_eq!(mask[idx], mask[((h - ky) % h) * w + (w - kx) % w]);
                }
            }
        }
    }

    #[test]
    fn shift_centers_dc() {
        let v: Vec<usize> = (0..12).collect();
        let s = fftshift(&v, 3, 4);
        assert_eq!(s[4 + 2], 0);
    }
}

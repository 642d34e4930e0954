//! Divergences, similarities and saliency scores used by the analyses.

use serde::{Deserialize, Serialize};

use super::matrix::{dot, norm2};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smoothing added to every bin before distributions are normalized.
pub const KL_EPSILON: f64 = 1e-10;

/// Adds `eps` to every bin and rescales to unit sum.
pub fn smoothed_distribution<T: Real>(values: &[T], eps: T) -> Result<Vec<T>> {
    if values.iter().any(|&v| v < T::zero() || !v.is_finite()) {
        return Err(Error::invalid("distribution entries must be finite and non-negative"));
    }
    let total: T = values.iter().map(|&v| v + eps).sum();
    if total <= T::zero() {
        return Err(Error::Undefined("distribution with zero mass".into()));
    }
    Ok(values.iter().map(|&v| (v + eps) / total).collect())
}

/// `KL(p ‖ q) = Σ p·ln(p/q)` after ε-smoothing and normalization of both inputs.
///
/// Terms with `p = 0` contribute nothing; `q = 0` under positive `p` gives `+∞`.
pub fn kl_divergence<T: Real>(p: &[T], q: &[T], eps: T) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::shape(format!("KL of lengths {} and {}", p.len(), q.len())));
    }
    if p.is_empty() {
        return Err(Error::invalid("KL of empty distributions"));
    }
    let p = smoothed_distribution(p, eps)?;
    let q = smoothed_distribution(q, eps)?;
    let mut acc = T::zero();
    for (&pi, &qi) in p.iter().zip(&q) {
        if pi > T::zero() {
            acc += pi * (pi / qi).ln();
        }
    }
    // Rounding can leave a tiny negative residue for p == q.
    Ok(acc.max(T::zero()))
}

/// Which norms divide the centered inner product in [`correlation_distance`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationForm {
    /// `1 − corr(u, v)`, the standard correlation distance.
    #[default]
    Centered,
    /// Divides by the raw norms `‖u‖₂‖v‖₂`.
    Uncentered,
}

/// `r(u, v) = 1 − (u−ū)·(v−v̄) / (‖·‖₂‖·‖₂)`, in `[0, 2]`.
pub fn correlation_distance<T: Real>(u: &[T], v: &[T], form: CorrelationForm) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::shape(format!("lengths {} and {}", u.len(), v.len())));
    }
    if u.len() < 2 {
        return Err(Error::invalid("correlation needs at least two samples"));
    }
    let uc = centered(u);
    let vc = centered(v);
    let (a, b) = match form {
        CorrelationForm::Centered => (&uc[..], &vc[..]),
        CorrelationForm::Uncentered => (u, v),
    };
    // √(‖a‖²‖b‖²) rounds to exactly ‖a‖² when a = b, so a vector is at
    // distance exactly 0 from itself; fall back if the product under- or
    // overflows.
    let product = dot(a, a) * dot(b, b);
    let denom = if product.is_normal() {
        product.sqrt()
    } else {
        norm2(a) * norm2(b)
    };
    if denom == T::zero() {
        return Err(Error::Undefined("correlation of a constant vector".into()));
    }
    let r = T::one() - dot(&uc, &vc) / denom;
    Ok(r.max(T::zero()).min(T::lit(2.0)))
}

pub fn cosine_similarity<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::shape(format!("lengths {} and {}", u.len(), v.len())));
    }
    let denom = norm2(u) * norm2(v);
    if denom == T::zero() {
        return Err(Error::Undefined("cosine similarity with a zero vector".into()));
    }
    let s = dot(u, v) / denom;
    Ok(s.max(-T::one()).min(T::one()))
}

/// `θ(t − r1) − θ(t − r2)` for `t = 0..len` with `θ(0) = 1`: ones on `[r1, r2)`.
pub fn heaviside_pulse<T: Real>(len: usize, r1: usize, r2: usize) -> Result<Vec<T>> {
    if r1 > r2 || r2 > len {
        return Err(Error::invalid(format!("pulse [{r1}, {r2}) outside 0..={len}")));
    }
    Ok((0..len)
        .map(|t| if (r1..r2).contains(&t) { T::one() } else { T::zero() })
        .collect())
}

fn mean<T: Real>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::from_usize_lossy(v.len())
}

fn centered<T: Real>(v: &[T]) -> Vec<T> {
    let m = mean(v);
    v.iter().map(|&x| x - m).collect()
}

/// Normalized scanpath saliency: mean z-score of `saliency` at fixated pixels.
///
/// Uses the population standard deviation; a constant saliency map scores 0.
pub fn nss<T: Real>(saliency: &[T], fixations: &[bool]) -> Result<T> {
    if saliency.len() != fixations.len() {
        return Err(Error::shape("saliency and fixation maps differ in size"));
    }
    if saliency.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("saliency map"));
    }
    let count = fixations.iter().filter(|&&f| f).count();
    if count == 0 {
        return Err(Error::invalid("NSS needs at least one fixation"));
    }
    let m = mean(saliency);
    let var = saliency.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_usize_lossy(saliency.len());
    let std = var.sqrt();
    if std == T::zero() {
        return Ok(T::zero());
    }
    let total: T = saliency
        .iter()
        .zip(fixations)
        .filter(|(_, &f)| f)
        .map(|(&x, _)| (x - m) / std)
        .sum();
    Ok(total / T::from_usize_lossy(count))
}

/// Pearson correlation coefficient of two equally sized maps.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::shape("maps differ in size"));
    }
    let ac = centered(a);
    let bc = centered(b);
    let denom = norm2(&ac) * norm2(&bc);
    if denom == T::zero() {
        return Err(Error::Undefined("Pearson correlation of a constant map".into()));
    }
    Ok((dot(&ac, &bc) / denom).max(-T::one()).min(T::one()))
}

/// `(x − min)/(max − min)`; a constant input maps to zeros.
pub fn minmax_normalize<T: Real>(values: &[T]) -> Vec<T> {
    let (lo, hi) = values.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    if values.is_empty() || span <= T::zero() {
        return vec![T::zero(); values.len()];
    }
    values.iter().map(|&v| (v - lo) / span).collect()
}

/// Temporal gradient: central differences inside, one-sided at the ends.
pub fn temporal_gradient<T: Real>(series: &[T]) -> Result<Vec<T>> {
    let n = series.len();
    if n < 3 {
        return Err(Error::invalid("gradient needs at least three samples"));
    }
    let half = T::lit(0.5);
    Ok((0..n)
        .map(|t| match t {
            0 => series[1] - series[0],
            t if t == n - 1 => series[n - 1] - series[n - 2],
            t => (series[t + 1] - series[t - 1]) * half,
        })
        .collect())
}

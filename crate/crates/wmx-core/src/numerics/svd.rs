//! Thin singular value decomposition.
//!
//! Householder QR reduces the input to a square triangular factor, then
//! one-sided (Hestenes) Jacobi rotations orthogonalize the columns of that
//! factor. The left vectors are mapped back through the stored reflectors.

use rayon::prelude::*;

use super::matrix::{axpy, dot, norm2, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 80;

/// `M = U · diag(S) · Vt` with `r = min(rows, cols)` singular triplets.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    /// `rows × r`, orthonormal columns.
    pub u: Matrix<T>,
    /// Length `r`, non-negative, non-increasing.
    pub s: Vec<T>,
    /// `r × cols`, orthonormal rows.
    pub vt: Matrix<T>,
}

impl<T: Real> Svd<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (v, &s) in us.row_mut(r).iter_mut().zip(&self.s) {
                *v *= s;
            }
        }
        us.matmul(&self.vt).expect("svd factors are conformant")
    }

    /// Number of singular values above `max(rows, cols) · eps · s_max`.
    pub fn rank(&self) -> usize {
        let smax = self.s.first().copied().unwrap_or_else(T::zero);
        let dim = self.u.rows().max(self.vt.cols());
        let tol = smax * T::epsilon() * T::from_usize_lossy(dim);
        self.s.iter().filter(|&&s| s > tol).count()
    }
}

/// Thin SVD of an arbitrary finite matrix.
pub fn svd<T: Real>(m: &Matrix<T>) -> Result<Svd<T>> {
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if m.rows() >= m.cols() {
        // Columns of M are the working vectors.
        let t = m.transpose();
        let vectors: Vec<Vec<T>> = (0..t.rows()).map(|i| t.row(i).to_vec()).collect();
        let parts = columns_svd(vectors, m.rows());
        let r = parts.sigma.len();
        let mut u = Matrix::zeros(m.rows(), r);
        for (j, col) in parts.u_cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                u[(i, j)] = v;
            }
        }
        let vt = Matrix::from_rows(&parts.v_cols)?;
        Ok(Svd { u, s: parts.sigma, vt })
    } else {
        // Rows of M are the columns of the tall matrix Mᵀ = U' S V'ᵀ, so M = V' S U'ᵀ.
        let vectors: Vec<Vec<T>> = (0..m.rows()).map(|i| m.row(i).to_vec()).collect();
        let parts = columns_svd(vectors, m.cols());
        let r = parts.sigma.len();
        let mut u = Matrix::zeros(m.rows(), r);
        for (j, col) in parts.v_cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                u[(i, j)] = v;
            }
        }
        let vt = Matrix::from_rows(&parts.u_cols)?;
        Ok(Svd { u, s: parts.sigma, vt })
    }
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is positive.
pub fn fix_sign<T: Real>(v: &mut [T]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < T::zero()) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

struct ColumnSvd<T> {
    sigma: Vec<T>,
    /// Left singular vectors, each of length `m`.
    u_cols: Vec<Vec<T>>,
    /// Right singular vectors, each of length `n`.
    v_cols: Vec<Vec<T>>,
}

/// SVD of the tall `m × n` matrix whose `n ≤ m` columns are `cols`.
fn columns_svd<T: Real>(mut cols: Vec<Vec<T>>, m: usize) -> ColumnSvd<T> {
    let n = cols.len();
    debug_assert!(n <= m);
    let reflectors = householder_qr(&mut cols);

    // Columns of R, each of length n: R[i][j] = cols[j][i] for i <= j.
    let mut work: Vec<Vec<T>> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut r = vec![T::zero(); n];
            r[..=j].copy_from_slice(&c[..=j]);
            r
        })
        .collect();
    drop(cols);

    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            e
        })
        .collect();
    jacobi_orthogonalize(&mut work, &mut v);

    let mut order: Vec<(usize, T)> = work.iter().map(|c| norm2(c)).enumerate().collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite norms").then(a.0.cmp(&b.0)));

    let sigma: Vec<T> = order.iter().map(|&(_, s)| s).collect();
    let smax = sigma.first().copied().unwrap_or_else(T::zero);
    let tiny = smax * T::epsilon() * T::from_usize_lossy(n.max(1));

    // Left vectors of R; directions of negligible singular values are completed
    // to an orthonormal set.
    let mut ur: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut next_axis = 0;
    for &(j, s) in &order {
        let mut cand = if s > tiny {
            work[j].iter().map(|&x| x / s).collect()
        } else {
            vec![T::zero(); n]
        };
        let mut ok = orthonormalize_against(&mut cand, &ur);
        while !ok {
            cand = vec![T::zero(); n];
            cand[next_axis] = T::one();
            next_axis += 1;
            ok = orthonormalize_against(&mut cand, &ur);
        }
        ur.push(cand);
    }
    let v_cols: Vec<Vec<T>> = order.iter().map(|&(j, _)| v[j].clone()).collect();

    let u_cols: Vec<Vec<T>> = ur
        .into_par_iter()
        .map(|small| {
            let mut y = vec![T::zero(); m];
            y[..n].copy_from_slice(&small);
            for (k, h) in reflectors.iter().enumerate().rev() {
                if let Some(h) = h {
                    let tail = &mut y[k..];
                    let p = dot(h, tail);
                    axpy(-(p + p), h, tail);
                }
            }
            y
        })
        .collect();

    ColumnSvd { sigma, u_cols, v_cols }
}

/// In-place Householder QR of the column set. Returns the unit reflector for
/// each step (`None` when the column was already reduced).
fn householder_qr<T: Real>(cols: &mut [Vec<T>]) -> Vec<Option<Vec<T>>> {
    let n = cols.len();
    let mut reflectors = Vec::with_capacity(n);
    for k in 0..n {
        let (head, rest) = cols.split_at_mut(k + 1);
        let x = &mut head[k][k..];
        let alpha = norm2(x);
        if alpha == T::zero() {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] > T::zero() { -alpha } else { alpha };
        let mut h = x.to_vec();
        h[0] -= alpha;
        let hn = norm2(&h);
        if hn == T::zero() {
            reflectors.push(None);
            continue;
        }
        h.iter_mut().for_each(|v| *v /= hn);
        x[0] = alpha;
        x[1..].iter_mut().for_each(|v| *v = T::zero());
        rest.par_iter_mut().for_each(|c| {
            let tail = &mut c[k..];
            let p = dot(&h, tail);
            axpy(-(p + p), &h, tail);
        });
        reflectors.push(Some(h));
    }
    reflectors
}

/// Cyclic one-sided Jacobi: rotates pairs of `cols` until mutually orthogonal,
/// applying the same rotations to `v`.
fn jacobi_orthogonalize<T: Real>(cols: &mut [Vec<T>], v: &mut [Vec<T>]) {
    let n = cols.len();
    let eps = T::epsilon();
    let two = T::lit(2.0);
    for _ in 0..MAX_SWEEPS {
        let mut norms: Vec<T> = cols.iter().map(|c| dot(c, c)).collect();
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(cols, p, q, c, s);
                rotate(v, p, q, c, s);
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        if !rotated {
            break;
        }
    }
}

#[inline]
fn rotate<T: Real>(set: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = set.split_at_mut(q);
    for (a, b) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let x = *a;
        let y = *b;
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Two-pass Gram-Schmidt of `v` against an orthonormal set, then normalization.
/// Returns false when the residual is too small to define a direction.
fn orthonormalize_against<T: Real>(v: &mut [T], basis: &[Vec<T>]) -> bool {
    let before = norm2(v);
    if before == T::zero() {
        return false;
    }
    for _ in 0..2 {
        for b in basis {
            let p = dot(b, v);
            axpy(-p, b, v);
        }
    }
    let after = norm2(v);
    if after <= T::lit(0.5) * before {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= after);
    true
}

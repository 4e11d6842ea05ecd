//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// `xᵀ A x` without forming `A x` as a temporary.
pub fn quad_form(a: &Mat, x: &Vector) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for j in 0..n {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        let col = a.column(j);
        let mut s = 0.0;
        for i in 0..n {
            s += x[i] * col[i];
        }
        acc += s * xj;
    }
    acc
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn asymmetry(m: &Mat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending
/// and eigenvectors permuted to match.
pub fn sym_eigen(m: &Mat) -> Result<(Vector, Mat)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vector::zeros(0), Mat::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
    let mut order: alloc::vec::Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = Vector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vecs = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    Ok((vals, vecs))
}

pub fn sym_eigenvalues(m: &Mat) -> Result<Vector> {
    if m.nrows() == 0 {
        return Ok(Vector::zeros(0));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
    let mut vals: alloc::vec::Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    vals.sort_by(f64::total_cmp);
    Ok(Vector::from_vec(vals))
}

pub fn min_eigenvalue(m: &Mat) -> Result<f64> {
    Ok(sym_eigenvalues(m)?.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Cholesky-based PSD test on `m + jitter·I`.
pub fn is_psd(m: &Mat, jitter: f64) -> bool {
    let n = m.nrows();
    let shifted = m + Mat::identity(n, n) * jitter;
    nalgebra::Cholesky::new(symmetrize(&shifted)).is_some()
}

pub fn frobenius(m: &Mat) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Nonnegative least squares `min ‖A y − b‖₂` s.t. `y ≥ 0` (Lawson–Hanson).
/// The columns carrying positive weight in the result are linearly
/// independent.
pub fn nnls(a: &Mat, b: &Vector) -> Vector {
    let k = a.ncols();
    let tol = 1e-12 * (1.0 + max_abs(a) * b.amax());
    let mut y = Vector::zeros(k);
    let mut passive = alloc::vec![false; k];
    for _ in 0..3 * k + 10 {
        let w = a.tr_mul(&(b - a * &y));
        let next = (0..k).filter(|&j| !passive[j] && w[j] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = next else { break };
        passive[j] = true;
        for _ in 0..3 * k + 10 {
            let idx: alloc::vec::Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let sub = Mat::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
            let Ok(s) = sub.svd(true, true).solve(b, 1e-14) else { return y };
            if s.iter().all(|v| *v > 0.0) {
                for (c, &i) in idx.iter().enumerate() {
                    y[i] = s[c];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (c, &i) in idx.iter().enumerate() {
                if s[c] <= 0.0 {
                    alpha = alpha.min(y[i] / (y[i] - s[c]));
                }
            }
            for (c, &i) in idx.iter().enumerate() {
                y[i] += alpha * (s[c] - y[i]);
                if y[i] <= 0.0 || (s[c] <= 0.0 && y[i] <= tol) {
                    y[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nnls_matches_unconstrained_when_positive() {
        let a = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y_true = Vector::from_vec(alloc::vec![0.5, 2.0]);
        let y = nnls(&a, &(&a * &y_true));
        assert!((y - y_true).amax() < 1e-12);
    }

    #[test]
    fn nnls_clamps_and_is_optimal() {
        let a = Mat::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let b = Vector::from_vec(alloc::vec![1.0, -1.0]);
        let y = nnls(&a, &b);
        assert!(y.iter().all(|v| *v >= 0.0));
        // KKT of the NNLS problem: gradient nonnegative, complementary to y
        let g = a.tr_mul(&(&a * &y - &b));
        for j in 0..3 {
            assert!(g[j] >= -1e-12);
            assert!((g[j] * y[j]).abs() < 1e-12);
        }
        assert!((y[0] - 1.0).abs() < 1e-12 && y[1] == 0.0);
    }

    #[test]
    fn nnls_support_drops_duplicate_columns() {
        let a = Mat::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let y = nnls(&a, &Vector::from_vec(alloc::vec![2.0, 3.0]));
        assert_eq!(y.iter().filter(|v| **v > 0.0).count(), 2);
        assert!((y[0] + y[1] - 2.0).abs() < 1e-12 && (y[2] - 3.0).abs() < 1e-12);
    }
}

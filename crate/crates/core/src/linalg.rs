//! Small dense symmetric positive-definite helpers (row-major, `n × n`).

use crate::error::{Error, Result};

/// Lower Cholesky factor `C` with `A = C Cᵀ`.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= c[i * n + k] * c[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                c[i * n + i] = s.sqrt();
            } else {
                c[i * n + j] = s / c[j * n + j];
            }
        }
    }
    Ok(c)
}

/// Solves `C x = b` for lower-triangular `C`.
pub fn solve_lower(c: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= c[i * n + k] * x[k];
        }
        x[i] = s / c[i * n + i];
    }
    x
}

/// Solves `Cᵀ x = b` for lower-triangular `C`.
pub fn solve_lower_transpose(c: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= c[k * n + i] * x[k];
        }
        x[i] = s / c[i * n + i];
    }
    x
}

/// `A⁻¹ b` given the Cholesky factor of `A`.
pub fn cholesky_solve(c: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    solve_lower_transpose(c, n, &solve_lower(c, n, b))
}

pub fn cholesky_inverse(c: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[j] = 1.0;
        let col = cholesky_solve(c, n, &e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    inv
}

pub fn cholesky_log_det(c: &[f64], n: usize) -> f64 {
    (0..n).map(|i| 2.0 * c[i * n + i].ln()).sum()
}

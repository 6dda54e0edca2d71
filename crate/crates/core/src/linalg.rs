//! Dense symmetric positive-definite solves for small metric blocks.

use crate::error::{GlnnError, Result};

/// In-place lower Cholesky factor of the row-major `n x n` matrix `m`.
/// Only the lower triangle is read.
pub fn cholesky(m: &mut [f64], n: usize) -> Result<()> {
    debug_assert_eq!(m.len(), n * n);
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= m[j * n + k] * m[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(GlnnError::NotPositiveDefinite);
        }
        let d = d.sqrt();
        m[j * n + j] = d;
        for i in j + 1..n {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Solves `L L^T x = b` given the factor from [`cholesky`]; `b` is overwritten.
pub fn cholesky_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// `x` with `M x = b` for symmetric positive-definite `M`.
pub fn spd_solve(m: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    let mut l = m.to_vec();
    cholesky(&mut l, n)?;
    let mut x = b.to_vec();
    cholesky_substitute(&l, n, &mut x);
    Ok(x)
}

pub fn mat_vec(m: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| m[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

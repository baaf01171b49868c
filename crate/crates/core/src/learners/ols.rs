//! Least squares via Householder QR, with an SVD fallback for rank-deficient designs.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::DesignMatrix;
use crate::error::{Error, Result};

/// Relative threshold on singular values / R diagonal used for rank decisions.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    /// Residual sum of squares over `n - rank`.
    pub residual_variance: f64,
    pub rank: usize,
    pub diagnostics: Vec<String>,
}

impl OlsFit {
    pub fn predict(&self, x: &DesignMatrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| x.dot_row(i, &self.coefficients)).collect()
    }

    pub fn residuals(&self, x: &DesignMatrix, y: &[f64]) -> Vec<f64> {
        self.predict(x).iter().zip(y).map(|(f, v)| v - f).collect()
    }
}

pub fn fit_ols(x: &DesignMatrix, y: &[f64]) -> Result<OlsFit> {
    let (n, k) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(Error::data("response length differs from design rows"));
    }
    if n <= k {
        return Err(Error::data(format!("OLS needs more rows ({n}) than columns ({k})")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite response"));
    }
    let xm = x.to_dmatrix();
    let yv = DVector::from_column_slice(y);
    let mut diagnostics = Vec::new();

    let qr = xm.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let diag_min = r.diagonal().iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));

    let (beta, rank) = if diag_max > 0.0 && diag_min > RANK_TOL * diag_max {
        let qty = qr.q().tr_mul(&yv);
        let beta = r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::estimation("triangular solve failed"))?;
        (beta, k)
    } else {
        let svd = xm.svd(true, true);
        let smax = svd.singular_values.max();
        let eps = RANK_TOL * smax.max(f64::MIN_POSITIVE);
        let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
        let beta = svd
            .solve(&yv, eps)
            .map_err(|e| Error::estimation(format!("pseudo-inverse failed: {e}")))?;
        diagnostics.push(format!(
            "rank-deficient design (rank {rank} of {k}); minimal-norm solution used"
        ));
        (beta, rank)
    };

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let rss: f64 = (0..n)
        .map(|i| (y[i] - x.dot_row(i, &coefficients)).powi(2))
        .sum();
    Ok(OlsFit {
        coefficients,
        residual_variance: rss / (n - rank) as f64,
        rank,
        diagnostics,
    })
}

/// Greedy choice of linearly independent columns, in order.
///
/// A column is kept when its residual after projecting on the kept columns
/// retains more than `tol` of its norm.
pub fn independent_columns(x: &DesignMatrix, tol: f64) -> Vec<usize> {
    let n = x.nrows();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..x.ncols() {
        let mut v = x.column(j);
        let norm0 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        // Two passes of Gram-Schmidt for stability.
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = (0..n).map(|i| v[i] * b[i]).sum();
                for i in 0..n {
                    v[i] -= d * b[i];
                }
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > tol * norm0 {
            basis.push(v.iter().map(|a| a / norm).collect());
            kept.push(j);
        }
    }
    kept
}

/// HC1 heteroskedasticity-robust covariance of OLS coefficients.
pub fn hc1_covariance(x: &DesignMatrix, residuals: &[f64]) -> Result<DMatrix<f64>> {
    let (n, k) = (x.nrows(), x.ncols());
    if n <= k {
        return Err(Error::data("HC1 covariance needs n > k"));
    }
    let xm = x.to_dmatrix();
    let bread = xm
        .tr_mul(&xm)
        .try_inverse()
        .ok_or_else(|| Error::estimation("X'X is singular"))?;
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let row = x.row(i);
        let e2 = residuals[i] * residuals[i];
        for a in 0..k {
            for b in 0..k {
                meat[(a, b)] += e2 * row[a] * row[b];
            }
        }
    }
    Ok(&bread * meat * &bread * (n as f64 / (n - k) as f64))
}

use serde::Serialize;

use super::DidSample;
use crate::error::Result;
use crate::learners::{fit_ols, hc1_covariance, independent_columns, DesignMatrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    /// HC1 robust standard error.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearDid {
    pub coefficients: Vec<Coefficient>,
    /// The `d:t` interaction.
    pub did: Coefficient,
    pub dropped: Vec<String>,
    pub n: usize,
}

/// OLS of `y` on `1, d, t, d*t` and the covariates, with HC1 errors.
/// Covariates collinear with earlier columns are dropped.
pub fn linear_did(sample: &DidSample) -> Result<LinearDid> {
    let n = sample.len();
    let k0 = sample.x.ncols();
    let k = 4 + k0;
    let mut data = Vec::with_capacity(n * k);
    for i in 0..n {
        let (d, t) = (sample.d[i] as f64, sample.t[i] as f64);
        data.extend_from_slice(&[1.0, d, t, d * t]);
        data.extend_from_slice(sample.x.row(i));
    }
    let mut names: Vec<String> = ["(intercept)", "d", "t", "d:t"].iter().map(|s| s.to_string()).collect();
    names.extend(sample.x.names().iter().cloned());
    let full = DesignMatrix::new(n, k, data, names.clone(), true)?;
    let keep = independent_columns(&full, 1e-9);
    let dropped = (0..k).filter(|j| !keep.contains(j)).map(|j| names[j].clone()).collect();
    let x = full.select_columns(&keep);
    let fit = fit_ols(&x, &sample.y)?;
    let cov = hc1_covariance(&x, &fit.residuals(&x, &sample.y))?;
    let coefficients: Vec<Coefficient> = keep
        .iter()
        .enumerate()
        .map(|(c, &j)| Coefficient {
            name: names[j].clone(),
            estimate: fit.coefficients[c],
            se: cov[(c, c)].max(0.0).sqrt(),
        })
        .collect();
    let did = coefficients
        .iter()
        .find(|c| c.name == "d:t")
        .cloned()
        .expect("the four cells are non-empty, so d:t is identified");
    Ok(LinearDid {
        coefficients,
        did,
        dropped,
        n,
    })
}

//! Pointwise standard errors and uniform bands from influence functions.

mod bootstrap;
mod coverage;

pub use bootstrap::{multiplier_bootstrap, BandResult, Multiplier, BootstrapConfig};
pub use coverage::{coverage_study, CoverageConfig, CoverageReport};

use serde::Serialize;

use crate::error::{Error, Result};

/// Units × event times, stored column by column.
///
/// Entries are scaled so that `estimate - truth ≈ mean over units of IF`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceMatrix {
    n_units: usize,
    columns: Vec<Vec<f64>>,
}

impl InfluenceMatrix {
    pub fn from_columns(n_units: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        for (j, c) in columns.iter().enumerate() {
            if c.len() != n_units {
                return Err(Error::data(format!(
                    "influence column {j} has {} rows, expected {n_units}",
                    c.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("influence column {j} is not finite")));
            }
        }
        Ok(Self { n_units, columns })
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn column_means(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| c.iter().sum::<f64>() / self.n_units as f64)
            .collect()
    }
}

/// `sd(IF[., t]) / sqrt(n)`, with the population standard deviation.
pub fn pointwise_se(inf: &InfluenceMatrix) -> Result<Vec<f64>> {
    let n = inf.n_units();
    if n < 2 {
        return Err(Error::data("standard errors need at least 2 units"));
    }
    Ok(inf
        .columns
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n as f64;
            let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            (var / n as f64).sqrt()
        })
        .collect())
}

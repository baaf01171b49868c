use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{pointwise_se, InfluenceMatrix};
use crate::error::{Error, Result};
use crate::rng::{rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Multiplier {
    /// ±1 with equal probability.
    Rademacher,
    /// Two-point law with mean 0, variance 1 and third moment 1.
    Mammen,
}

impl Multiplier {
    fn draw(self, rng: &mut crate::rng::Rng) -> f64 {
        match self {
            Multiplier::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Multiplier::Mammen => {
                let s5 = 5f64.sqrt();
                if rng.gen::<f64>() < (s5 + 1.0) / (2.0 * s5) {
                    (1.0 - s5) / 2.0
                } else {
                    (1.0 + s5) / 2.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_draws: usize,
    pub level: f64,
    pub multiplier: Multiplier,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_draws: 999,
            level: 0.95,
            multiplier: Multiplier::Rademacher,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws < 199 {
            return Err(Error::config(format!("n_draws must be at least 199, got {}", self.n_draws)));
        }
        if !(0.0 < self.level && self.level < 1.0) {
            return Err(Error::config("coverage level must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandResult {
    pub pointwise_se: Vec<f64>,
    /// Robust bootstrap scale per column, `IQR / (2 z_0.75)`; bands are `estimate ± c* · scale`.
    pub scale: Vec<f64>,
    pub critical_value: f64,
    pub coverage_level: f64,
    pub n_draws: usize,
    pub multiplier: Multiplier,
    /// Columns left out of the maximum because their scale is zero.
    pub excluded: Vec<usize>,
    pub diagnostics: Vec<String>,
    /// Sorted studentized maxima, one per draw.
    #[serde(skip)]
    pub max_stats: Vec<f64>,
}

impl BandResult {
    /// Critical value at another nominal level from the same draws.
    pub fn critical_value_at(&self, level: f64) -> f64 {
        quantile_sorted(&self.max_stats, level)
    }

    pub fn band(&self, estimates: &[f64]) -> (Vec<f64>, Vec<f64>) {
        estimates
            .iter()
            .zip(&self.scale)
            .map(|(e, s)| (e - self.critical_value * s, e + self.critical_value * s))
            .unzip()
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Multiplier bootstrap for a simultaneous band over all columns.
///
/// Draw `b` perturbs column `t` by `mean_i xi_i IF_i(t)` with one multiplier
/// vector per draw, seeded from `(seed, b)`. Each column is studentized by its
/// bootstrap interquartile scale and `c*` is the `level` quantile of the
/// maximum absolute studentized perturbation.
pub fn multiplier_bootstrap(inf: &InfluenceMatrix, cfg: &BootstrapConfig) -> Result<BandResult> {
    let n = inf.n_units();
    if n < 2 {
        return Err(Error::data("bootstrap needs at least 2 units"));
    }
    cfg.validate()?;
    let t = inf.n_cols();
    let draws: Vec<Vec<f64>> = (0..cfg.n_draws)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from(cfg.seed, &[stream::BOOTSTRAP_DRAW, b as u64]);
            let xi: Vec<f64> = (0..n).map(|_| cfg.multiplier.draw(&mut rng)).collect();
            (0..t)
                .map(|j| {
                    inf.column(j).iter().zip(&xi).map(|(v, x)| v * x).sum::<f64>() / n as f64
                })
                .collect()
        })
        .collect();

    let z75 = Normal::standard().inverse_cdf(0.75);
    let mut scale = Vec::with_capacity(t);
    let mut excluded = Vec::new();
    let mut diagnostics = Vec::new();
    for j in 0..t {
        let mut col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        col.sort_by(f64::total_cmp);
        let s = (quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25)) / (2.0 * z75);
        if !(s > 0.0) {
            excluded.push(j);
            diagnostics.push(format!("column {j} has zero bootstrap scale; excluded from the maximum"));
        }
        scale.push(s.max(0.0));
    }
    let mut max_stats: Vec<f64> = draws
        .iter()
        .map(|d| {
            (0..t)
                .filter(|j| scale[*j] > 0.0)
                .map(|j| (d[j] / scale[j]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    max_stats.sort_by(f64::total_cmp);
    let critical_value = quantile_sorted(&max_stats, cfg.level);

    Ok(BandResult {
        pointwise_se: pointwise_se(inf)?,
        scale,
        critical_value,
        coverage_level: cfg.level,
        n_draws: cfg.n_draws,
        multiplier: cfg.multiplier,
        excluded,
        diagnostics,
        max_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_columns(n: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from(seed, &[]);
        (0..cols)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    fn cfg(n_draws: usize, seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            n_draws,
            seed,
            ..BootstrapConfig::default()
        }
    }

    #[test]
    fn single_column_matches_normal_quantile() {
        let inf = InfluenceMatrix::from_columns(5000, gaussian_columns(5000, 1, 1)).unwrap();
        let band = multiplier_bootstrap(&inf, &cfg(9999, 2)).unwrap();
        assert!((band.critical_value - 1.96).abs() < 0.1, "c* = {}", band.critical_value);
    }

    #[test]
    fn duplicate_columns_same_as_single() {
        let col = gaussian_columns(2000, 1, 3).remove(0);
        let one = InfluenceMatrix::from_columns(2000, vec![col.clone()]).unwrap();
        let two = InfluenceMatrix::from_columns(2000, vec![col.clone(), col]).unwrap();
        let a = multiplier_bootstrap(&one, &cfg(999, 4)).unwrap();
        let b = multiplier_bootstrap(&two, &cfg(999, 4)).unwrap();
        assert!((a.critical_value - b.critical_value).abs() < 1e-12);
    }

    #[test]
    fn levels_are_ordered_and_dominate_pointwise() {
        let inf = InfluenceMatrix::from_columns(800, gaussian_columns(800, 20, 5)).unwrap();
        let band = multiplier_bootstrap(&inf, &cfg(999, 6)).unwrap();
        let (c90, c95, c99) = (
            band.critical_value_at(0.90),
            band.critical_value_at(0.95),
            band.critical_value_at(0.99),
        );
        assert!(c90 <= c95 && c95 <= c99);
        assert!(band.critical_value >= 1.96 - 0.05);
        for (s, se) in band.scale.iter().zip(&band.pointwise_se) {
            assert!(band.critical_value * s >= 1.96 * se * 0.95);
        }
    }

    #[test]
    fn many_weakly_dependent_columns_plausible_range() {
        // Neighbouring event times share most of their influence: AR(1) with ρ = 0.9.
        let e = gaussian_columns(1000, 70, 7);
        let rho: f64 = 0.9;
        let mut cols: Vec<Vec<f64>> = vec![e[0].clone()];
        for j in 1..70 {
            let prev = &cols[j - 1];
            let next = prev.iter().zip(&e[j]).map(|(p, v)| rho * p + (1.0 - rho * rho).sqrt() * v).collect();
            cols.push(next);
        }
        let inf = InfluenceMatrix::from_columns(1000, cols).unwrap();
        let band = multiplier_bootstrap(&inf, &cfg(999, 8)).unwrap();
        assert!((2.3..=3.2).contains(&band.critical_value), "c* = {}", band.critical_value);
    }

    #[test]
    fn zero_column_excluded() {
        let mut cols = gaussian_columns(300, 1, 9);
        cols.push(vec![0.0; 300]);
        let inf = InfluenceMatrix::from_columns(300, cols).unwrap();
        let band = multiplier_bootstrap(&inf, &cfg(199, 1)).unwrap();
        assert_eq!(band.excluded, vec![1]);
        assert!(band.critical_value.is_finite() && band.critical_value > 0.0);
    }

    #[test]
    fn deterministic_and_mammen_available() {
        let inf = InfluenceMatrix::from_columns(200, gaussian_columns(200, 3, 10)).unwrap();
        let c = BootstrapConfig {
            multiplier: Multiplier::Mammen,
            ..cfg(499, 11)
        };
        let a = multiplier_bootstrap(&inf, &c).unwrap();
        assert_eq!(a, multiplier_bootstrap(&inf, &c).unwrap());
        assert!(a.critical_value > 1.5 && a.critical_value < 3.5);
    }

    #[test]
    fn rejects_too_few_draws() {
        let inf = InfluenceMatrix::from_columns(10, gaussian_columns(10, 1, 0)).unwrap();
        assert!(multiplier_bootstrap(&inf, &cfg(50, 0)).is_err());
    }
}

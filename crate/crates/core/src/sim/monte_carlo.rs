use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_panel, true_effect, DgpConfig, Simulation};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

/// An estimated event-study path, optionally with a simultaneous band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub event_times: Vec<i32>,
    pub estimates: Vec<f64>,
    pub se: Vec<f64>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub event_time: i32,
    pub truth: f64,
    pub n: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Monte Carlo standard error of `bias`.
    pub bias_mc_se: f64,
    pub rmse: f64,
    /// Share of replications with `|estimate - truth| <= 1.96 se`.
    pub pointwise_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n_reps: usize,
    pub failures: usize,
    pub failure_reasons: Vec<String>,
    pub rows: Vec<McRow>,
    /// Share of banded replications whose band covers the whole true path.
    pub uniform_coverage: Option<f64>,
    pub uniform_coverage_mc_se: Option<f64>,
}

impl McReport {
    pub fn row(&self, t: i32) -> Option<&McRow> {
        self.rows.iter().find(|r| r.event_time == t)
    }
}

/// Runs `estimator` on `n_reps` independent draws of `dgp`.
///
/// Replication `r` simulates with seed `derive_seed(seed, [SIM_REP, r])` and
/// passes the estimator its own derived seed. Estimator errors are counted,
/// not propagated.
pub fn monte_carlo_run<F>(dgp: &DgpConfig, estimator: F, n_reps: usize, seed: u64) -> Result<McReport>
where
    F: Fn(&Simulation, u64) -> Result<PathEstimate> + Sync,
{
    if n_reps < 2 {
        return Err(Error::config("monte carlo needs at least two replications"));
    }
    dgp.validate()?;
    let outcomes: Vec<Result<PathEstimate>> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let cfg = DgpConfig {
                seed: derive_seed(seed, &[stream::SIM_REP, r as u64]),
                ..dgp.clone()
            };
            let sim = simulate_panel(&cfg)?;
            estimator(&sim, derive_seed(seed, &[stream::SIM_REP, r as u64, 1]))
        })
        .collect();
    Ok(summarize(dgp, &outcomes))
}

fn summarize(dgp: &DgpConfig, outcomes: &[Result<PathEstimate>]) -> McReport {
    let mut per_t: BTreeMap<i32, Vec<(f64, f64)>> = BTreeMap::new();
    let mut failure_reasons = Vec::new();
    let mut banded = 0usize;
    let mut covered = 0usize;
    for o in outcomes {
        let est = match o {
            Ok(e) => e,
            Err(e) => {
                failure_reasons.push(e.to_string());
                continue;
            }
        };
        for (i, &t) in est.event_times.iter().enumerate() {
            per_t.entry(t).or_default().push((est.estimates[i], est.se[i]));
        }
        if let (Some(lo), Some(hi)) = (&est.lo, &est.hi) {
            banded += 1;
            let all = est.event_times.iter().enumerate().all(|(i, &t)| {
                let th = true_effect(dgp, t);
                lo[i] <= th && th <= hi[i]
            });
            covered += all as usize;
        }
    }
    let rows = per_t
        .into_iter()
        .map(|(t, v)| {
            let truth = true_effect(dgp, t);
            let n = v.len() as f64;
            let mean = v.iter().map(|x| x.0).sum::<f64>() / n;
            let var = if v.len() > 1 {
                v.iter().map(|x| (x.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let mse = v.iter().map(|x| (x.0 - truth).powi(2)).sum::<f64>() / n;
            let cover = v.iter().filter(|x| (x.0 - truth).abs() <= 1.96 * x.1).count() as f64 / n;
            McRow {
                event_time: t,
                truth,
                n: v.len(),
                mean_estimate: mean,
                bias: mean - truth,
                bias_mc_se: (var / n).sqrt(),
                rmse: mse.sqrt(),
                pointwise_coverage: cover,
            }
        })
        .collect();
    let uniform = (banded > 0).then(|| covered as f64 / banded as f64);
    McReport {
        n_reps: outcomes.len(),
        failures: failure_reasons.len(),
        failure_reasons,
        rows,
        uniform_coverage: uniform,
        uniform_coverage_mc_se: uniform.map(|p| (p * (1.0 - p) / banded as f64).sqrt()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DgpConfig {
        DgpConfig {
            n_units: 50,
            window_months: 40,
            cohort_offset: 10,
            cohort_band: 20,
            ..DgpConfig::default()
        }
    }

    fn oracle(sim: &Simulation, _seed: u64) -> Result<PathEstimate> {
        let ts: Vec<i32> = (-12..=12).collect();
        let est: Vec<f64> = ts.iter().map(|&t| sim.true_effect(t).unwrap()).collect();
        Ok(PathEstimate {
            event_times: ts.clone(),
            se: vec![0.0; ts.len()],
            lo: Some(est.clone()),
            hi: Some(est.clone()),
            estimates: est,
        })
    }

    #[test]
    fn oracle_has_no_bias_and_full_coverage() {
        let r = monte_carlo_run(&tiny(), oracle, 4, 1).unwrap();
        assert_eq!(r.failures, 0);
        for row in &r.rows {
            assert_eq!(row.bias, 0.0);
            assert_eq!(row.rmse, 0.0);
            assert_eq!(row.pointwise_coverage, 1.0);
        }
        assert_eq!(r.uniform_coverage, Some(1.0));
    }

    #[test]
    fn deterministic_and_counts_failures() {
        let est = |sim: &Simulation, seed: u64| {
            if seed % 3 == 0 {
                return Err(Error::estimation("unlucky"));
            }
            let m = sim.panel.observations.iter().map(|o| o.y_rx as f64).sum::<f64>();
            Ok(PathEstimate {
                event_times: vec![0],
                estimates: vec![m],
                se: vec![1.0],
                lo: None,
                hi: None,
            })
        };
        let a = monte_carlo_run(&tiny(), est, 12, 7).unwrap();
        let b = monte_carlo_run(&tiny(), est, 12, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.failures + a.rows[0].n, 12);
        assert!(a.uniform_coverage.is_none());
    }

    #[test]
    fn one_rep_rejected() {
        assert!(monte_carlo_run(&tiny(), oracle, 1, 1).is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::BootstrapConfig;
use crate::error::{Error, Result};
use crate::sim::{monte_carlo_run, DgpConfig, DipProfile, EffectProfile, PathEstimate};
use crate::staggered::{event_study, DidConfig, DidData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageConfig {
    pub dgp: DgpConfig,
    pub did: DidConfig,
    pub bootstrap: BootstrapConfig,
    pub n_reps: usize,
    pub seed: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            dgp: DgpConfig {
                n_units: 2000,
                window_months: 72,
                cohort_offset: 24,
                cohort_band: 24,
                baseline: 0.1,
                dip: DipProfile::none(),
                effect: EffectProfile::zero(),
                age_trend: 0.0,
                ..DgpConfig::default()
            },
            did: DidConfig {
                event_window: (-12, 12),
                ..DidConfig::default()
            },
            bootstrap: BootstrapConfig::default(),
            n_reps: 200,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n_reps: usize,
    pub failures: usize,
    pub failure_reasons: Vec<String>,
    /// Share of replications whose band covers the true path at every event time.
    pub uniform_coverage: f64,
    pub uniform_coverage_mc_se: f64,
    /// `(t, share)` of replications with `|estimate - truth| <= 1.96 se`.
    pub pointwise_coverage: Vec<(i32, f64)>,
    pub max_abs_bias: f64,
}

/// Monte Carlo coverage of the uniform band against the closed-form truth.
pub fn coverage_study(cfg: &CoverageConfig) -> Result<CoverageReport> {
    cfg.dgp.validate()?;
    cfg.did.validate()?;
    cfg.bootstrap.validate()?;
    let estimator = |sim: &crate::sim::Simulation, seed: u64| -> Result<PathEstimate> {
        let data = DidData::from_panel(&sim.panel, cfg.did.outcome);
        let boot = BootstrapConfig { seed, ..cfg.bootstrap };
        let run = event_study(&data, &cfg.did, Some(&boot))?;
        let c = run.curve;
        Ok(PathEstimate {
            event_times: c.event_times,
            estimates: c.estimates,
            se: c.pointwise_se,
            lo: c.uniform_lo,
            hi: c.uniform_hi,
        })
    };
    let mc = monte_carlo_run(&cfg.dgp, estimator, cfg.n_reps, cfg.seed)?;
    if mc.failures == mc.n_reps {
        let first = mc.failure_reasons.first().map_or("", String::as_str);
        return Err(Error::estimation(format!("all {} replications failed; first: {first}", mc.n_reps)));
    }
    Ok(CoverageReport {
        n_reps: mc.n_reps,
        failures: mc.failures,
        failure_reasons: mc.failure_reasons,
        uniform_coverage: mc.uniform_coverage.unwrap_or(f64::NAN),
        uniform_coverage_mc_se: mc.uniform_coverage_mc_se.unwrap_or(f64::NAN),
        pointwise_coverage: mc.rows.iter().map(|r| (r.event_time, r.pointwise_coverage)).collect(),
        max_abs_bias: mc.rows.iter().map(|r| r.bias.abs()).fold(0.0, f64::max),
    })
}

//! Doubly robust group-time ATTs with anticipation and not-yet-treated controls.

mod aggregate;
mod cells;
mod dr;
mod export;

pub use aggregate::{aggregate_event_study, EventStudyCurve};
pub use cells::{att_gt_all, control_pool, enumerate_cells, CellSet, GroupTimeCell};
pub use dr::{att_gt_dr, CellResult, GroupTimeEffect, SkippedCell};
pub use export::{write_event_study, EVENT_STUDY_HEADER};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{multiplier_bootstrap, BandResult, BootstrapConfig};
use crate::learners::{DesignMatrix, LogitConfig};
use crate::panel::{Cohort, Month, MonthRange, Panel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Rx,
    Psy,
    Gp,
}

/// Which functions of the covariate enter a nuisance model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateSpec {
    Intercept,
    Linear,
    Quadratic,
}

/// Age is centred at 30 and scaled by 5 years before entering a model.
pub fn standardize_age(age: f64) -> f64 {
    (age - 30.0) / 5.0
}

impl CovariateSpec {
    pub fn needs_covariate(self) -> bool {
        self != CovariateSpec::Intercept
    }

    fn columns(self) -> usize {
        match self {
            CovariateSpec::Intercept => 1,
            CovariateSpec::Linear => 2,
            CovariateSpec::Quadratic => 3,
        }
    }

    /// Design with an intercept for the given raw covariate values.
    pub fn design(self, ages: &[f64]) -> DesignMatrix {
        let k = self.columns();
        let mut data = Vec::with_capacity(ages.len() * k);
        for &a in ages {
            let z = standardize_age(a);
            data.push(1.0);
            if k > 1 {
                data.push(z);
            }
            if k > 2 {
                data.push(z * z);
            }
        }
        let names = ["(intercept)", "age_z", "age_z2"][..k]
            .iter()
            .map(|s| s.to_string())
            .collect();
        DesignMatrix::new(ages.len(), k, data, names, true).expect("finite covariates")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidConfig {
    /// Anticipation horizon δ in months.
    pub anticipation: i32,
    /// Inclusive event-time range `[t_min, t_max]`.
    pub event_window: (i32, i32),
    pub include_never_treated: bool,
    pub min_treated: usize,
    pub min_control: usize,
    /// Controls with propensity above `1 - eps_trim` get zero weight.
    pub eps_trim: f64,
    pub ps_spec: CovariateSpec,
    pub or_spec: CovariateSpec,
    pub outcome: Outcome,
    pub logit: LogitConfig,
}

impl Default for DidConfig {
    fn default() -> Self {
        Self {
            anticipation: 9,
            event_window: (-24, 48),
            include_never_treated: false,
            min_treated: 5,
            min_control: 5,
            eps_trim: 0.01,
            ps_spec: CovariateSpec::Linear,
            or_spec: CovariateSpec::Linear,
            outcome: Outcome::Rx,
            logit: LogitConfig::default(),
        }
    }
}

impl DidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.anticipation < 0 {
            return Err(Error::config("anticipation must be non-negative"));
        }
        if self.event_window.0 > self.event_window.1 {
            return Err(Error::config("event window lower bound exceeds upper bound"));
        }
        if self.min_treated == 0 || self.min_control == 0 {
            return Err(Error::config("minimum cell sizes must be positive"));
        }
        if !(0.0..0.5).contains(&self.eps_trim) {
            return Err(Error::config("eps_trim must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

/// Cells, aggregated curve and, when requested, the bootstrap band.
#[derive(Debug, Clone)]
pub struct EventStudyRun {
    pub cells: CellSet,
    pub curve: EventStudyCurve,
    pub band: Option<BandResult>,
}

/// Group-time cells, event-study aggregation and an optional uniform band.
pub fn event_study(data: &DidData, cfg: &DidConfig, bootstrap: Option<&BootstrapConfig>) -> Result<EventStudyRun> {
    let cells = att_gt_all(data, cfg)?;
    let mut curve = aggregate_event_study(&cells, data)?;
    let band = match bootstrap {
        Some(b) => {
            let band = multiplier_bootstrap(&curve.influence, b)?;
            curve.attach_band(&band);
            Some(band)
        }
        None => None,
    };
    Ok(EventStudyRun { cells, curve, band })
}

/// Dense unit × month outcome grid with cohorts and the covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct DidData {
    months: MonthRange,
    /// Unit-major; NaN marks an unobserved month.
    y: Vec<f64>,
    groups: Vec<Cohort>,
    covariate: Vec<Option<f64>>,
}

impl DidData {
    pub fn new(
        months: MonthRange,
        y: Vec<f64>,
        groups: Vec<Cohort>,
        covariate: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = groups.len();
        if y.len() != n * months.len() || covariate.len() != n {
            return Err(Error::data("outcome grid does not match unit count and window"));
        }
        if y.iter().any(|v| v.is_infinite()) {
            return Err(Error::data("infinite outcome"));
        }
        Ok(Self {
            months,
            y,
            groups,
            covariate,
        })
    }

    pub fn from_panel(panel: &Panel, outcome: Outcome) -> Self {
        let months = panel.window;
        let t = months.len();
        let mut y = vec![f64::NAN; panel.n_units() * t];
        for o in &panel.observations {
            let v = match outcome {
                Outcome::Rx => o.y_rx as f64,
                Outcome::Psy => o.y_psy as f64,
                Outcome::Gp => o.y_gp as f64,
            };
            y[o.unit as usize * t + (o.month - months.lo) as usize] = v;
        }
        let groups = (0..panel.n_units()).map(|u| panel.group(u)).collect();
        let covariate = (0..panel.n_units()).map(|u| panel.covariate(u)).collect();
        Self {
            months,
            y,
            groups,
            covariate,
        }
    }

    pub fn n_units(&self) -> usize {
        self.groups.len()
    }

    pub fn months(&self) -> MonthRange {
        self.months
    }

    pub fn group(&self, u: usize) -> Cohort {
        self.groups[u]
    }

    pub fn groups(&self) -> &[Cohort] {
        &self.groups
    }

    pub fn covariate(&self, u: usize) -> Option<f64> {
        self.covariate[u]
    }

    pub fn y(&self, u: usize, m: Month) -> Option<f64> {
        if !self.months.contains(m) {
            return None;
        }
        let v = self.y[u * self.months.len() + (m - self.months.lo) as usize];
        (!v.is_nan()).then_some(v)
    }

    /// Treated cohorts in increasing order.
    pub fn cohorts(&self) -> Vec<Month> {
        let mut c: Vec<Month> = self.groups.iter().filter_map(|g| g.month()).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn cohort_size(&self, g: Month) -> usize {
        self.groups.iter().filter(|c| c.month() == Some(g)).count()
    }

    /// Same data with every cohort moved `months` earlier.
    pub fn shift_cohorts(&self, months: i32) -> Self {
        Self {
            groups: self
                .groups
                .iter()
                .map(|g| g.month().map_or(Cohort::NEVER, |m| Cohort::at(m - months)))
                .collect(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn random_data(seed: u64) -> DidData {
        let mut rng = rng_from(seed, &[]);
        let months = MonthRange { lo: 0, hi: 59 };
        let cohorts = [20, 28, 36, 50];
        let mut groups = Vec::new();
        let mut covariate = Vec::new();
        for &g in &cohorts {
            for _ in 0..rng.gen_range(8..15) {
                groups.push(Cohort::at(g));
                covariate.push(Some(rng.gen_range(20..=40) as f64));
            }
        }
        let n = groups.len();
        let y = (0..n * months.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        DidData::new(months, y, groups, covariate).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        /// Moving every cohort δ months earlier and setting δ = 0 gives the same
        /// cells: same base period, same controls, event time shifted by δ.
        #[test]
        fn anticipation_equals_shifted_cohorts(seed in any::<u64>()) {
            let data = random_data(seed);
            let with = DidConfig { event_window: (-12, 12), ..DidConfig::default() };
            let without = DidConfig { anticipation: 0, event_window: (-3, 21), ..with.clone() };
            let a = att_gt_all(&data, &with).unwrap();
            let b = att_gt_all(&data.shift_cohorts(9), &without).unwrap();
            prop_assert!(!a.effects.is_empty());
            prop_assert_eq!(a.effects.len(), b.effects.len());
            for (x, y) in a.effects.iter().zip(&b.effects) {
                prop_assert_eq!((x.g - 9, x.tau, x.event_time + 9), (y.g, y.tau, y.event_time));
                prop_assert_eq!(x.base_period, y.base_period);
                prop_assert!((x.estimate - y.estimate).abs() < 1e-12);
                prop_assert!((x.se - y.se).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pipeline_attaches_band() {
        let data = random_data(3);
        let cfg = DidConfig { event_window: (-12, 6), ..DidConfig::default() };
        let boot = BootstrapConfig { n_draws: 199, ..BootstrapConfig::default() };
        let run = event_study(&data, &cfg, Some(&boot)).unwrap();
        let (lo, hi) = (run.curve.uniform_lo.unwrap(), run.curve.uniform_hi.unwrap());
        for i in 0..lo.len() {
            assert!(lo[i] <= run.curve.estimates[i] && run.curve.estimates[i] <= hi[i]);
        }
        assert!(run.band.is_some());
    }
}

//! Synthetic claims panels with known treatment effects.
//!
//! Each unit's monthly prescription indicator follows a four-state spell
//! chain (on, off, off, ready) whose re-entry probability is solved month by
//! month so that the marginal rate equals a target path exactly. Off spells
//! last at least three months, so gap filling never alters a simulated
//! series and the claims round trip reproduces the panel bit for bit.
//!
//! The untreated rate depends on the covariate and calendar time only; the
//! treated rate adds a pregnancy dip on the baseline and an additive effect.
//! The true event-study path is therefore identical across cohorts and units.

mod generate;
mod monte_carlo;
mod mothers;
mod process;

pub use generate::{simulate_claims, simulate_panel, Simulation};
pub use monte_carlo::{monte_carlo_run, McReport, McRow, PathEstimate};
pub use mothers::{simulate_mothers, MothersConfig};
pub use process::SpellChain;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Month, MonthRange};

/// Multiplier on the baseline rate around birth: 1 up to `start`, linear
/// down to `floor` at `bottom`, linear back to 1 at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipProfile {
    pub floor: f64,
    pub start: i32,
    pub bottom: i32,
    pub end: i32,
}

impl Default for DipProfile {
    fn default() -> Self {
        Self {
            floor: 0.4,
            start: -9,
            bottom: 0,
            end: 12,
        }
    }
}

impl DipProfile {
    pub fn none() -> Self {
        Self {
            floor: 1.0,
            ..Self::default()
        }
    }

    pub fn at(&self, t: i32) -> f64 {
        if t <= self.start || t >= self.end {
            1.0
        } else if t <= self.bottom {
            let f = (t - self.start) as f64 / (self.bottom - self.start) as f64;
            1.0 + f * (self.floor - 1.0)
        } else {
            let f = (t - self.bottom) as f64 / (self.end - self.bottom) as f64;
            self.floor + f * (1.0 - self.floor)
        }
    }
}

/// Additive effect on the monthly rate: zero before the first knot,
/// piecewise linear between knots, flat after the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectProfile {
    pub knots: Vec<(i32, f64)>,
}

impl Default for EffectProfile {
    fn default() -> Self {
        Self {
            knots: vec![(12, 0.0), (48, 0.010), (72, 0.013)],
        }
    }
}

impl EffectProfile {
    pub fn zero() -> Self {
        Self { knots: vec![] }
    }

    pub fn step(from: i32, value: f64) -> Self {
        Self {
            knots: vec![(from, value)],
        }
    }

    pub fn at(&self, t: i32) -> f64 {
        let Some(&(t0, _)) = self.knots.first() else {
            return 0.0;
        };
        if t < t0 {
            return 0.0;
        }
        for w in self.knots.windows(2) {
            let ((a, va), (b, vb)) = (w[0], w[1]);
            if t <= b {
                return va + (vb - va) * (t - a) as f64 / (b - a) as f64;
            }
        }
        self.knots.last().map_or(0.0, |k| k.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    pub n_units: usize,
    pub window_start: Month,
    pub window_months: usize,
    /// First cohort month relative to `window_start`.
    pub cohort_offset: i32,
    /// Number of consecutive cohort months.
    pub cohort_band: usize,
    /// Explicit cohort offsets, replacing the band when non-empty.
    pub cohort_offsets: Vec<i32>,
    pub never_treated_share: f64,
    pub baseline: f64,
    pub dip: DipProfile,
    pub effect: EffectProfile,
    /// Inclusive range of integer ages at first birth.
    pub age_range: (i32, i32),
    /// Rate shift per year of age relative to 29.
    pub age_level: f64,
    /// Slope of the covariate-specific trend `(z^2 - E z^2) (month - mid)`.
    pub age_trend: f64,
    /// Common calendar trend per month, centred at the window middle.
    pub calendar_trend: f64,
    /// Log-odds slope of cohort timing in `z` times cohort position.
    pub timing_slope: f64,
    /// Probability that an on month is followed by another on month.
    pub persistence: f64,
    /// Cohort-specific trend that breaks parallel trends when non-zero.
    pub violated_trends: f64,
    /// Share of units whose enrollment ends before the window does.
    pub dropout_share: f64,
    pub psy_rate: f64,
    pub gp_rate: f64,
    /// Probability of leaving a one or two month hole inside a spell's claims.
    pub claim_gap_prob: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n_units: 5000,
            window_start: 24,
            window_months: 132,
            cohort_offset: 24,
            cohort_band: 60,
            cohort_offsets: vec![],
            never_treated_share: 0.35,
            baseline: 0.02,
            dip: DipProfile::default(),
            effect: EffectProfile::default(),
            age_range: (20, 40),
            age_level: 0.0,
            age_trend: 0.00002,
            calendar_trend: 0.0,
            timing_slope: 0.5,
            persistence: 0.7,
            violated_trends: 0.0,
            dropout_share: 0.0,
            psy_rate: 0.01,
            gp_rate: 0.15,
            claim_gap_prob: 0.1,
            seed: 1,
        }
    }
}

impl DgpConfig {
    pub fn window(&self) -> MonthRange {
        MonthRange {
            lo: self.window_start,
            hi: self.window_start + self.window_months as i32 - 1,
        }
    }

    fn mid(&self) -> f64 {
        self.window_start as f64 + (self.window_months as f64 - 1.0) / 2.0
    }

    /// Cohort months in increasing order.
    pub fn cohort_months(&self) -> Vec<Month> {
        let mut c: Vec<Month> = if self.cohort_offsets.is_empty() {
            (0..self.cohort_band as i32)
                .map(|h| self.window_start + self.cohort_offset + h)
                .collect()
        } else {
            self.cohort_offsets.iter().map(|o| self.window_start + o).collect()
        };
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Cohort position scaled to [-1, 1].
    fn cohort_position(&self, index: usize, count: usize) -> f64 {
        if count < 2 {
            0.0
        } else {
            2.0 * index as f64 / (count - 1) as f64 - 1.0
        }
    }

    pub fn ages(&self) -> Vec<i32> {
        (self.age_range.0..=self.age_range.1).collect()
    }

    /// Mean of `z^2` under the uniform age law.
    fn mean_z2(&self) -> f64 {
        let ages = self.ages();
        ages.iter().map(|&a| z_of(a).powi(2)).sum::<f64>() / ages.len() as f64
    }

    /// Untreated monthly rate.
    pub fn untreated_rate(&self, age: i32, cohort_pos: Option<f64>, month: Month) -> f64 {
        let dt = month as f64 - self.mid();
        let z = z_of(age);
        let mut p = self.baseline
            + self.age_level * (age as f64 - 29.0)
            + self.calendar_trend * dt
            + self.age_trend * (z * z - self.mean_z2()) * dt;
        if let Some(r) = cohort_pos {
            p += self.violated_trends * r * dt / self.window_months as f64;
        }
        p
    }

    /// Rate at `month` for a unit first treated at `g` (or never).
    pub fn rate(&self, age: i32, cohort: Option<(Month, f64)>, month: Month) -> f64 {
        let p0 = self.untreated_rate(age, cohort.map(|c| c.1), month);
        match cohort {
            Some((g, _)) => p0 + true_effect(self, month - g),
            None => p0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.n_units == 0 {
            return bad("n_units must be positive");
        }
        if self.window_months < 2 {
            return bad("window must span at least two months");
        }
        if !(0.0..=1.0).contains(&self.never_treated_share) {
            return bad("never_treated_share must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return bad("persistence must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.dropout_share) || !(0.0..=1.0).contains(&self.claim_gap_prob) {
            return bad("dropout_share and claim_gap_prob must lie in [0, 1]");
        }
        if self.psy_rate < 0.0 || self.gp_rate < 0.0 {
            return bad("visit rates must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.dip.floor)
            || !(self.dip.start < self.dip.bottom && self.dip.bottom < self.dip.end)
        {
            return bad("dip floor must lie in [0, 1] with start < bottom < end");
        }
        if self.age_range.0 > self.age_range.1 {
            return bad("age range is empty");
        }
        if self.effect.knots.windows(2).any(|w| w[0].0 >= w[1].0) {
            return bad("effect knots must be strictly increasing in event time");
        }
        let cohorts = self.cohort_months();
        if self.never_treated_share < 1.0 && cohorts.is_empty() {
            return bad("no cohorts for treated units");
        }
        let w = self.window();
        if cohorts.iter().any(|&g| !w.contains(g)) {
            return bad("cohort months must lie inside the window");
        }
        // Every (age, cohort) rate path must be reachable by the spell chain.
        let n = cohorts.len();
        for age in self.ages() {
            let mut types: Vec<Option<(Month, f64)>> = vec![None];
            types.extend(
                cohorts
                    .iter()
                    .enumerate()
                    .map(|(i, &g)| Some((g, self.cohort_position(i, n)))),
            );
            for c in types {
                let path: Vec<f64> = w.iter().map(|m| self.rate(age, c, m)).collect();
                SpellChain::new(self.persistence, &path).map_err(|e| {
                    Error::config(format!(
                        "age {age}, cohort {:?}: {e}",
                        c.map(|c| c.0)
                    ))
                })?;
            }
        }
        Ok(())
    }
}

pub fn z_of(age: i32) -> f64 {
    crate::staggered::standardize_age(age as f64)
}

/// True ATT at event time `t`, common to all cohorts.
pub fn true_effect(cfg: &DgpConfig, t: i32) -> f64 {
    cfg.baseline * (cfg.dip.at(t) - 1.0) + cfg.effect.at(t)
}

/// Closed-form event-study path over `[t_min, t_max]`.
pub fn true_event_effects(cfg: &DgpConfig, t_min: i32, t_max: i32) -> Vec<(i32, f64)> {
    (t_min..=t_max).map(|t| (t, true_effect(cfg, t))).collect()
}

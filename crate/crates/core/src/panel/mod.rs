//! Monthly panels built from raw insurance claims.
//!
//! Months are integer indices with 0 = January 2010. A unit's cohort is the
//! month of its first childbirth; units without a birth inside the window carry
//! the [`Cohort::NEVER`] sentinel.

mod build;
mod first_rx;
pub mod io;
mod placebo;
mod smoothing;

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use build::{build_panel, SampleFilter};
pub use first_rx::{first_prescription_filter, FirstRxSelection};
pub use placebo::{
    assign_placebo_births, fit_cohort_lognormal, CohortParams, LogNormalParams, PlaceboReport,
};
pub use smoothing::{expand_spells, fill_gaps, raw_purchase_indicator, smooth_prescriptions};

pub type Month = i32;

/// Calendar year of the first month index.
pub const BASE_YEAR: i32 = 2010;

pub fn year_of(month: Month) -> i32 {
    BASE_YEAR + month.div_euclid(12)
}

pub fn month_of(year: i32, month_of_year: i32) -> Month {
    (year - BASE_YEAR) * 12 + month_of_year
}

/// Inclusive range of months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthRange {
    pub lo: Month,
    pub hi: Month,
}

impl MonthRange {
    pub fn new(lo: Month, hi: Month) -> Result<Self> {
        if hi < lo {
            return Err(Error::config(format!("empty month range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn contains(&self, m: Month) -> bool {
        m >= self.lo && m <= self.hi
    }

    pub fn covers(&self, other: &MonthRange) -> bool {
        self.lo <= other.lo && self.hi >= other.hi
    }

    pub fn intersect(&self, other: &MonthRange) -> Option<MonthRange> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(MonthRange { lo, hi })
    }

    pub fn iter(&self) -> impl Iterator<Item = Month> {
        self.lo..=self.hi
    }
}

/// Treatment cohort: the first month a unit is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cohort(i32);

impl Cohort {
    /// Never treated within the window. Sorts after every real cohort.
    pub const NEVER: Cohort = Cohort(i32::MAX);

    pub fn at(month: Month) -> Self {
        assert!(month < i32::MAX, "month collides with never-treated sentinel");
        Cohort(month)
    }

    pub fn is_never(&self) -> bool {
        *self == Self::NEVER
    }

    pub fn month(&self) -> Option<Month> {
        (!self.is_never()).then_some(self.0)
    }

    pub fn event_time(&self, month: Month) -> Option<i32> {
        self.month().map(|g| month - g)
    }

    /// Absorbing treatment indicator D_{i,τ} = 1{τ ≥ g}.
    pub fn treated_at(&self, month: Month) -> bool {
        self.month().is_some_and(|g| month >= g)
    }

    /// True when the cohort starts strictly after `month`, counting never-treated.
    pub fn starts_after(&self, month: Month) -> bool {
        self.is_never() || self.0 > month
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimKind {
    /// Antidepressant prescription purchase.
    Rx,
    /// Psychiatrist visit.
    Psy,
    /// General practitioner or HMO visit.
    Gp,
}

impl ClaimKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClaimKind::Rx => "rx",
            ClaimKind::Psy => "psy",
            ClaimKind::Gp => "gp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "rx" => Ok(ClaimKind::Rx),
            "psy" => Ok(ClaimKind::Psy),
            "gp" => Ok(ClaimKind::Gp),
            other => Err(Error::data(format!("unknown claim kind '{other}'"))),
        }
    }
}

/// One raw insurance event for a unit-month.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub unit_id: String,
    pub month: Month,
    pub kind: ClaimKind,
    pub n_packages: Option<u32>,
    pub pills_per_package: Option<u32>,
}

impl ClaimRecord {
    pub fn rx(unit_id: impl Into<String>, month: Month, n_packages: u32, pills: u32) -> Self {
        Self {
            unit_id: unit_id.into(),
            month,
            kind: ClaimKind::Rx,
            n_packages: Some(n_packages),
            pills_per_package: Some(pills),
        }
    }

    pub fn visit(unit_id: impl Into<String>, month: Month, kind: ClaimKind) -> Self {
        Self {
            unit_id: unit_id.into(),
            month,
            kind,
            n_packages: None,
            pills_per_package: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ClaimKind::Rx => match (self.n_packages, self.pills_per_package) {
                (Some(p), Some(k)) if p >= 1 && k >= 1 => Ok(()),
                _ => Err(Error::data(format!(
                    "rx claim for unit {} in month {} needs n_packages >= 1 and pills_per_package >= 1",
                    self.unit_id, self.month
                ))),
            },
            _ => {
                if self.n_packages.is_some() || self.pills_per_package.is_some() {
                    Err(Error::data(format!(
                        "visit claim for unit {} in month {} carries package fields",
                        self.unit_id, self.month
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Months of consumption implied by the purchase: one pill per day, 30 days per month.
    pub fn spell_months(&self) -> u32 {
        match (self.n_packages, self.pills_per_package) {
            (Some(p), Some(k)) => (p * k).div_ceil(30),
            _ => 0,
        }
    }
}

/// Placebo first-birth date drawn for a never-treated unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaceboBirth {
    pub month: Month,
    pub age: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitMeta {
    pub unit_id: String,
    pub birth_year: i32,
    pub first_child_month: Option<Month>,
    pub employed: bool,
    pub subsidy: bool,
    pub cesarean: bool,
    /// Months the unit is insured; `None` means the whole observation window.
    #[serde(default)]
    pub enrollment: Option<MonthRange>,
    #[serde(default)]
    pub placebo: Option<PlaceboBirth>,
}

impl UnitMeta {
    pub fn new(unit_id: impl Into<String>, birth_year: i32, first_child_month: Option<Month>) -> Self {
        Self {
            unit_id: unit_id.into(),
            birth_year,
            first_child_month,
            employed: false,
            subsidy: false,
            cesarean: false,
            enrollment: None,
            placebo: None,
        }
    }

    /// Age in completed calendar years at the first birth.
    pub fn age_at_first_birth(&self) -> Option<f64> {
        self.first_child_month
            .map(|m| (year_of(m) - self.birth_year) as f64)
    }

    /// Covariate used by the estimators: real age at first birth, or the placebo age.
    pub fn covariate_age(&self) -> Option<f64> {
        self.age_at_first_birth()
            .or_else(|| self.placebo.map(|p| p.age))
    }

    pub fn observed_range(&self, window: &MonthRange) -> Option<MonthRange> {
        match self.enrollment {
            Some(e) => e.intersect(window),
            None => Some(*window),
        }
    }

    pub fn balanced_flag(&self, window: &MonthRange) -> bool {
        self.enrollment.map_or(true, |e| e.covers(window))
    }
}

/// One unit × calendar-month row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelObservation {
    /// Index into [`Panel::units`].
    pub unit: u32,
    pub month: Month,
    pub y_rx: u8,
    pub y_psy: u32,
    pub y_gp: u32,
    pub group: Cohort,
    pub event_time: Option<i32>,
    pub age_at_first_birth: Option<f64>,
}

/// Long-format monthly panel. Rows are sorted by (unit, month) and each unit's
/// rows cover one contiguous run of months.
#[derive(Debug, Clone)]
pub struct Panel {
    pub units: Vec<UnitMeta>,
    pub observations: Vec<PanelObservation>,
    pub window: MonthRange,
    pub balanced: bool,
    pub diagnostics: Vec<String>,
    rows: Vec<Range<usize>>,
}

impl Panel {
    /// Assembles a panel and checks its structural invariants.
    pub fn from_parts(
        units: Vec<UnitMeta>,
        observations: Vec<PanelObservation>,
        window: MonthRange,
        balanced: bool,
        diagnostics: Vec<String>,
    ) -> Result<Self> {
        let mut rows = vec![0..0; units.len()];
        let mut start = 0;
        while start < observations.len() {
            let u = observations[start].unit as usize;
            if u >= units.len() {
                return Err(Error::data(format!("observation refers to unit index {u}")));
            }
            let mut end = start + 1;
            while end < observations.len() && observations[end].unit as usize == u {
                let (prev, cur) = (&observations[end - 1], &observations[end]);
                if cur.month != prev.month + 1 {
                    return Err(Error::data(format!(
                        "unit {} rows are not contiguous at month {}",
                        units[u].unit_id, cur.month
                    )));
                }
                end += 1;
            }
            if !rows[u].is_empty() {
                return Err(Error::data(format!(
                    "unit {} rows are not grouped",
                    units[u].unit_id
                )));
            }
            rows[u] = start..end;
            start = end;
        }
        for (u, r) in rows.iter().enumerate() {
            let obs = &observations[r.clone()];
            if obs.iter().any(|o| !window.contains(o.month)) {
                return Err(Error::data(format!(
                    "unit {} has rows outside the window",
                    units[u].unit_id
                )));
            }
            if balanced && obs.len() != window.len() {
                return Err(Error::data(format!(
                    "balanced panel but unit {} has {} of {} months",
                    units[u].unit_id,
                    obs.len(),
                    window.len()
                )));
            }
            if let Some(o) = obs.first() {
                if let Some(g) = o.group.month() {
                    if !window.contains(g) {
                        return Err(Error::data(format!(
                            "unit {} cohort {g} outside window",
                            units[u].unit_id
                        )));
                    }
                }
            }
        }
        Ok(Self {
            units,
            observations,
            window,
            balanced,
            diagnostics,
            rows,
        })
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn unit_rows(&self, unit: usize) -> &[PanelObservation] {
        &self.observations[self.rows[unit].clone()]
    }

    pub fn observation(&self, unit: usize, month: Month) -> Option<&PanelObservation> {
        let rows = self.unit_rows(unit);
        let first = rows.first()?.month;
        if month < first {
            return None;
        }
        rows.get((month - first) as usize)
    }

    pub fn rx(&self, unit: usize, month: Month) -> Option<f64> {
        self.observation(unit, month).map(|o| o.y_rx as f64)
    }

    pub fn observed_range(&self, unit: usize) -> Option<MonthRange> {
        let rows = self.unit_rows(unit);
        Some(MonthRange {
            lo: rows.first()?.month,
            hi: rows.last()?.month,
        })
    }

    pub fn group(&self, unit: usize) -> Cohort {
        self.unit_rows(unit)
            .first()
            .map(|o| o.group)
            .unwrap_or_else(|| cohort_in_window(&self.units[unit], &self.window))
    }

    pub fn covariate(&self, unit: usize) -> Option<f64> {
        self.units[unit].covariate_age()
    }

    /// Number of units per cohort, never-treated included.
    pub fn cohort_sizes(&self) -> BTreeMap<Cohort, usize> {
        let mut sizes = BTreeMap::new();
        for u in 0..self.n_units() {
            *sizes.entry(self.group(u)).or_insert(0) += 1;
        }
        sizes
    }

    /// Treated cohorts in increasing order.
    pub fn cohorts(&self) -> Vec<Cohort> {
        self.cohort_sizes()
            .into_keys()
            .filter(|c| !c.is_never())
            .collect()
    }

    /// Keeps the units for which `keep` returns true, re-indexing rows.
    pub fn subset(&self, mut keep: impl FnMut(usize, &UnitMeta) -> bool) -> Panel {
        let mut units = Vec::new();
        let mut observations = Vec::new();
        for (u, meta) in self.units.iter().enumerate() {
            if !keep(u, meta) {
                continue;
            }
            let new_idx = units.len() as u32;
            units.push(meta.clone());
            observations.extend(self.unit_rows(u).iter().map(|o| PanelObservation {
                unit: new_idx,
                ..*o
            }));
        }
        Panel::from_parts(
            units,
            observations,
            self.window,
            self.balanced,
            self.diagnostics.clone(),
        )
        .expect("subset of a valid panel is valid")
    }
}

/// Cohort as seen from inside `window`: births after the window end count as never treated.
pub fn cohort_in_window(unit: &UnitMeta, window: &MonthRange) -> Cohort {
    match unit.first_child_month {
        Some(m) if m <= window.hi => Cohort::at(m),
        _ => Cohort::NEVER,
    }
}

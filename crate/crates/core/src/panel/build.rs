use std::collections::{BTreeMap, HashMap, HashSet};

use super::{
    cohort_in_window, smooth_prescriptions, ClaimKind, ClaimRecord, MonthRange, Panel,
    PanelObservation, UnitMeta,
};
use crate::error::Result;

/// Unit-level sample restrictions applied before panel assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFilter {
    /// Inclusive bounds on age at first birth; never-treated units pass.
    pub age_at_first_birth: Option<(f64, f64)>,
    /// Inclusive bounds on birth year.
    pub birth_years: Option<(i32, i32)>,
    pub employed: Option<bool>,
    pub subsidy: Option<bool>,
    pub cesarean: Option<bool>,
}

impl Default for SampleFilter {
    fn default() -> Self {
        Self {
            age_at_first_birth: Some((20.0, 40.0)),
            birth_years: None,
            employed: None,
            subsidy: None,
            cesarean: None,
        }
    }
}

impl SampleFilter {
    pub fn none() -> Self {
        Self {
            age_at_first_birth: None,
            ..Self::default()
        }
    }

    pub fn admits(&self, u: &UnitMeta) -> bool {
        if let (Some((lo, hi)), Some(age)) = (self.age_at_first_birth, u.age_at_first_birth()) {
            if age < lo || age > hi {
                return false;
            }
        }
        if let Some((lo, hi)) = self.birth_years {
            if u.birth_year < lo || u.birth_year > hi {
                return false;
            }
        }
        self.employed.map_or(true, |v| u.employed == v)
            && self.subsidy.map_or(true, |v| u.subsidy == v)
            && self.cesarean.map_or(true, |v| u.cesarean == v)
    }

    /// Splits units into admitted ones and diagnostics for the rest.
    pub fn apply(&self, units: &[UnitMeta]) -> (Vec<UnitMeta>, Vec<String>) {
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for u in units {
            if self.admits(u) {
                kept.push(u.clone());
            } else {
                dropped.push(format!("unit {}: excluded by sample filter", u.unit_id));
            }
        }
        (kept, dropped)
    }
}

fn metadata_problem(u: &UnitMeta, window: &MonthRange) -> Option<String> {
    if let Some(age) = u.age_at_first_birth() {
        if age < 0.0 {
            return Some(format!("first birth precedes birth year {}", u.birth_year));
        }
    }
    if let Some(e) = u.enrollment {
        if e.hi < e.lo {
            return Some("inverted enrollment range".into());
        }
    }
    if u.observed_range(window).is_none() {
        return Some("not enrolled in any month of the window".into());
    }
    if let Some(g) = u.first_child_month {
        if g < window.lo {
            return Some(format!("first birth {g} precedes the window; unit is never untreated"));
        }
    }
    None
}

/// Builds the long-format monthly panel.
///
/// Prescriptions are smoothed per unit over the unit's observed months; visit
/// claims are summed per month. With `balanced`, units not observed in every
/// month of `window` are dropped. Units with inconsistent metadata are
/// rejected and reported in [`Panel::diagnostics`].
pub fn build_panel(
    claims: &[ClaimRecord],
    units: &[UnitMeta],
    window: MonthRange,
    balanced: bool,
) -> Result<Panel> {
    for c in claims {
        c.validate()?;
    }
    let mut diagnostics = Vec::new();

    // Deduplicate unit records; conflicting duplicates reject the id.
    let mut by_id: BTreeMap<&str, Vec<&UnitMeta>> = BTreeMap::new();
    for u in units {
        by_id.entry(u.unit_id.as_str()).or_default().push(u);
    }
    let mut accepted: Vec<UnitMeta> = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for u in units {
        if !seen.insert(u.unit_id.as_str()) {
            continue;
        }
        let copies = &by_id[u.unit_id.as_str()];
        if copies.iter().any(|c| *c != u) {
            diagnostics.push(format!("unit {}: contradictory metadata records, rejected", u.unit_id));
            continue;
        }
        if let Some(problem) = metadata_problem(u, &window) {
            diagnostics.push(format!("unit {}: {problem}, rejected", u.unit_id));
            continue;
        }
        if balanced && !u.balanced_flag(&window) {
            diagnostics.push(format!("unit {}: not observed in every month, dropped", u.unit_id));
            continue;
        }
        accepted.push(u.clone());
    }

    let index: HashMap<&str, usize> = accepted
        .iter()
        .enumerate()
        .map(|(i, u)| (u.unit_id.as_str(), i))
        .collect();
    let mut per_unit: Vec<Vec<&ClaimRecord>> = vec![Vec::new(); accepted.len()];
    let mut unknown = 0usize;
    for c in claims {
        match index.get(c.unit_id.as_str()) {
            Some(&i) => per_unit[i].push(c),
            None => unknown += 1,
        }
    }
    if unknown > 0 {
        diagnostics.push(format!("{unknown} claims for units outside the panel ignored"));
    }

    let mut observations = Vec::with_capacity(accepted.len() * window.len());
    for (i, u) in accepted.iter().enumerate() {
        let range = u.observed_range(&window).expect("checked above");
        let mut claims_u = std::mem::take(&mut per_unit[i]);
        claims_u.sort_by_key(|c| c.month);
        let rx = smooth_prescriptions(claims_u.iter().copied(), &range);
        let mut psy = vec![0u32; range.len()];
        let mut gp = vec![0u32; range.len()];
        for c in &claims_u {
            if !range.contains(c.month) {
                continue;
            }
            let k = (c.month - range.lo) as usize;
            match c.kind {
                ClaimKind::Psy => psy[k] += 1,
                ClaimKind::Gp => gp[k] += 1,
                ClaimKind::Rx => {}
            }
        }
        let group = cohort_in_window(u, &window);
        let age = u.covariate_age();
        for (k, m) in range.iter().enumerate() {
            observations.push(PanelObservation {
                unit: i as u32,
                month: m,
                y_rx: rx[k],
                y_psy: psy[k],
                y_gp: gp[k],
                group,
                event_time: group.event_time(m),
                age_at_first_birth: age,
            });
        }
    }

    Panel::from_parts(accepted, observations, window, balanced, diagnostics)
}

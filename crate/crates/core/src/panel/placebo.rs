//! Placebo first-birth dates for never-treated units.
//!
//! The age at first birth is drawn from a birth-cohort specific log-normal
//! law; the calendar month within the resulting year is uniform.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{month_of, MonthRange, PlaceboBirth, UnitMeta};
use crate::rng::{hash_str, rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

/// Birth year → log-normal parameters of age at first birth.
pub type CohortParams = BTreeMap<i32, LogNormalParams>;

/// Matches the mean and variance of log age among treated units of each birth year.
pub fn fit_cohort_lognormal(units: &[UnitMeta]) -> CohortParams {
    let mut logs: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for u in units {
        if let Some(age) = u.age_at_first_birth() {
            if age > 0.0 {
                logs.entry(u.birth_year).or_default().push(age.ln());
            }
        }
    }
    logs.into_iter()
        .map(|(year, v)| {
            let n = v.len() as f64;
            let mu = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
            (year, LogNormalParams { mu, sigma: var.sqrt() })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlaceboReport {
    pub assigned: usize,
    /// Units whose draws kept falling outside the window.
    pub unassigned: Vec<String>,
    /// Units whose birth year has no fitted parameters.
    pub missing_params: Vec<String>,
}

/// Draws a placebo first birth for every never-treated unit in `units`.
///
/// Each unit uses its own random stream keyed by `unit_id`, so the draw does
/// not depend on the order of units. Draws landing outside `window` are
/// retried up to `max_retries` times. Treated units are left untouched.
pub fn assign_placebo_births(
    units: &mut [UnitMeta],
    params: &CohortParams,
    window: &MonthRange,
    seed: u64,
    max_retries: usize,
) -> PlaceboReport {
    let mut report = PlaceboReport::default();
    for u in units.iter_mut().filter(|u| u.first_child_month.is_none()) {
        let Some(p) = params.get(&u.birth_year) else {
            report.missing_params.push(u.unit_id.clone());
            continue;
        };
        let mut rng = rng_from(seed, &[stream::PLACEBO_BIRTH, hash_str(&u.unit_id)]);
        let law = (p.sigma > 0.0).then(|| LogNormal::new(p.mu, p.sigma).expect("sigma > 0"));
        let mut placed = None;
        for _ in 0..=max_retries {
            let age = match &law {
                Some(d) => d.sample(&mut rng),
                None => p.mu.exp(),
            };
            let moy = rng.gen_range(0..12);
            let month = month_of(u.birth_year + age.floor() as i32, moy);
            if window.contains(month) {
                placed = Some(PlaceboBirth { month, age });
                break;
            }
        }
        match placed {
            Some(b) => {
                u.placebo = Some(b);
                report.assigned += 1;
            }
            None => {
                u.placebo = None;
                report.unassigned.push(u.unit_id.clone());
            }
        }
    }
    report
}

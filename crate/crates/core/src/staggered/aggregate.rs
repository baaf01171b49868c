use std::collections::BTreeMap;

use serde::Serialize;

use super::cells::CellSet;
use super::dr::GroupTimeEffect;
use super::DidData;
use crate::error::{Error, Result};
use crate::inference::{pointwise_se, BandResult, InfluenceMatrix};
use crate::panel::Month;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStudyCurve {
    pub event_times: Vec<i32>,
    pub estimates: Vec<f64>,
    pub pointwise_se: Vec<f64>,
    pub n_cells: Vec<usize>,
    /// `(g, weight)` of each contributing cohort per event time.
    pub group_weights: Vec<Vec<(Month, f64)>>,
    #[serde(skip)]
    pub influence: InfluenceMatrix,
    pub uniform_critical_value: Option<f64>,
    pub uniform_lo: Option<Vec<f64>>,
    pub uniform_hi: Option<Vec<f64>>,
}

impl EventStudyCurve {
    pub fn attach_band(&mut self, band: &BandResult) {
        let (lo, hi) = band.band(&self.estimates);
        self.uniform_critical_value = Some(band.critical_value);
        self.uniform_lo = Some(lo);
        self.uniform_hi = Some(hi);
    }

    pub fn index_of(&self, t: i32) -> Option<usize> {
        self.event_times.iter().position(|&e| e == t)
    }
}

/// Cohort-share weighted average of ATT(g, g + t) for every event time.
///
/// At horizon `t` each estimated cohort gets weight `n_g / Σ n_g'` over the
/// cohorts with an estimated cell at `t`. The influence function adds the
/// estimation effect of these shares to the weighted cell influences.
pub fn aggregate_event_study(cells: &CellSet, data: &DidData) -> Result<EventStudyCurve> {
    if cells.effects.is_empty() {
        return Err(Error::estimation("no estimated cells to aggregate"));
    }
    let n = data.n_units();
    if cells.n_units != n {
        return Err(Error::data("cells were estimated on different data"));
    }
    let mut by_t: BTreeMap<i32, Vec<&GroupTimeEffect>> = BTreeMap::new();
    for e in &cells.effects {
        by_t.entry(e.event_time).or_default().push(e);
    }
    let sizes: BTreeMap<Month, usize> = data
        .cohorts()
        .into_iter()
        .map(|g| (g, data.cohort_size(g)))
        .collect();
    let cohort_of: Vec<Option<Month>> = (0..n).map(|u| data.group(u).month()).collect();

    let mut event_times = Vec::new();
    let mut estimates = Vec::new();
    let mut n_cells = Vec::new();
    let mut group_weights = Vec::new();
    let mut columns = Vec::new();
    for (t, effs) in by_t {
        let total: usize = effs.iter().map(|e| sizes[&e.g]).sum();
        let share_c = total as f64 / n as f64;
        let weights: Vec<(Month, f64)> = effs
            .iter()
            .map(|e| (e.g, sizes[&e.g] as f64 / total as f64))
            .collect();
        let theta: f64 = effs.iter().zip(&weights).map(|(e, (_, w))| w * e.estimate).sum();

        let mut inf = vec![0.0; n];
        for (e, (_, w)) in effs.iter().zip(&weights) {
            let scale = w * n as f64 / e.units.len() as f64;
            for (&u, &v) in e.units.iter().zip(&e.influence) {
                inf[u as usize] += scale * v;
            }
        }
        let att: BTreeMap<Month, (f64, f64)> = effs
            .iter()
            .zip(&weights)
            .map(|(e, (g, w))| (*g, (e.estimate, *w)))
            .collect();
        for (u, c) in cohort_of.iter().enumerate() {
            let Some(g) = c else { continue };
            let Some(&(att_g, _)) = att.get(g) else { continue };
            // Σ_h (ATT_h - θ)(1{G=h} - w_h 1{G∈C}) / P(G∈C); the second part
            // vanishes because Σ_h w_h (ATT_h - θ) = 0.
            inf[u] += (att_g - theta) / share_c;
        }

        event_times.push(t);
        estimates.push(theta);
        n_cells.push(effs.len());
        group_weights.push(weights);
        columns.push(inf);
    }
    let influence = InfluenceMatrix::from_columns(n, columns)?;
    let pointwise_se = pointwise_se(&influence)?;
    Ok(EventStudyCurve {
        event_times,
        estimates,
        pointwise_se,
        n_cells,
        group_weights,
        influence,
        uniform_critical_value: None,
        uniform_lo: None,
        uniform_hi: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{Cohort, MonthRange};

    fn effect(g: Month, t: i32, estimate: f64, units: Vec<u32>) -> GroupTimeEffect {
        let k = units.len();
        GroupTimeEffect {
            g,
            tau: g + t,
            event_time: t,
            base_period: g - 1,
            estimate,
            se: 0.0,
            units,
            influence: vec![0.0; k],
            n_treated: 0,
            n_control: 0,
            n_trimmed: 0,
            diagnostics: vec![],
        }
    }

    fn data(groups: &[Option<Month>]) -> DidData {
        let months = MonthRange { lo: 0, hi: 50 };
        DidData::new(
            months,
            vec![0.0; groups.len() * months.len()],
            groups.iter().map(|g| g.map_or(Cohort::NEVER, Cohort::at)).collect(),
            vec![None; groups.len()],
        )
        .unwrap()
    }

    #[test]
    fn single_cohort_identity() {
        let d = data(&[Some(10), Some(10), None]);
        let set = CellSet {
            effects: vec![effect(10, -1, 0.2, vec![0, 1, 2]), effect(10, 3, 0.7, vec![0, 1, 2])],
            skipped: vec![],
            n_units: 3,
        };
        let c = aggregate_event_study(&set, &d).unwrap();
        assert_eq!(c.event_times, vec![-1, 3]);
        assert_eq!(c.estimates, vec![0.2, 0.7]);
    }

    #[test]
    fn shares_weight_cells() {
        let mut groups = vec![Some(10); 6];
        groups.extend(vec![Some(20); 4]);
        let d = data(&groups);
        let set = CellSet {
            effects: vec![
                effect(10, 2, 1.0, (0..10).collect()),
                effect(20, 2, 2.0, (0..10).collect()),
            ],
            skipped: vec![],
            n_units: 10,
        };
        let c = aggregate_event_study(&set, &d).unwrap();
        assert!((c.estimates[0] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_one_across_five_cohorts() {
        let mut groups = Vec::new();
        for (k, g) in [5, 10, 15, 20, 25].iter().enumerate() {
            groups.extend(vec![Some(*g); k + 2]);
        }
        groups.extend(vec![None; 3]);
        let d = data(&groups);
        let n = groups.len() as u32;
        let mut effects = Vec::new();
        for g in [5, 10, 15, 20, 25] {
            for t in 0..(30 - g) {
                effects.push(effect(g, t, 0.1, (0..n).collect()));
            }
        }
        let set = CellSet { effects, skipped: vec![], n_units: groups.len() };
        let c = aggregate_event_study(&set, &d).unwrap();
        for (t, w) in c.event_times.iter().zip(&c.group_weights) {
            let s: f64 = w.iter().map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-12);
            // Recompute from cohort counts: cohort k has k + 2 units.
            let counts: Vec<f64> = w.iter().map(|(g, _)| (g / 5 - 1 + 2) as f64).collect();
            let tot: f64 = counts.iter().sum();
            for ((_, v), c) in w.iter().zip(&counts) {
                assert!((v - c / tot).abs() < 1e-14, "t = {t}");
            }
        }
    }

    #[test]
    fn empty_effects_rejected() {
        let d = data(&[None]);
        let set = CellSet { effects: vec![], skipped: vec![], n_units: 1 };
        assert!(aggregate_event_study(&set, &d).is_err());
    }
}

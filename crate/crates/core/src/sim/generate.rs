use std::collections::HashMap;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use super::process::SpellChain;
use super::{true_event_effects, z_of, DgpConfig};
use crate::error::{Error, Result};
use crate::panel::{year_of, ClaimKind, ClaimRecord, Cohort, Month, MonthRange, Panel, PanelObservation, UnitMeta};
use crate::rng::{rng_from, stream, Rng};

const PILLS: u32 = 30;

/// A simulated panel with the generating truth.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: DgpConfig,
    pub panel: Panel,
    /// Event-study truth over `[-window, window]` months.
    pub truth: Vec<(i32, f64)>,
}

impl Simulation {
    pub fn true_effect(&self, t: i32) -> Option<f64> {
        self.truth.iter().find(|(e, _)| *e == t).map(|(_, v)| *v)
    }
}

struct Draw {
    meta: UnitMeta,
    age: i32,
    rx: Vec<u8>,
    psy: Vec<u32>,
    gp: Vec<u32>,
    range: MonthRange,
}

fn unit_id(i: usize) -> String {
    format!("u{i:06}")
}

/// Simulates the monthly panel directly from the latent spell paths.
///
/// [`simulate_claims`] turns the same draws into claims whose smoothed panel
/// is identical to this one.
pub fn simulate_panel(cfg: &DgpConfig) -> Result<Simulation> {
    cfg.validate()?;
    let draws = draw_units(cfg)?;
    let window = cfg.window();
    let balanced = draws.iter().all(|d| d.range == window);
    let mut units = Vec::with_capacity(draws.len());
    let mut observations = Vec::with_capacity(draws.len() * window.len());
    for (i, d) in draws.into_iter().enumerate() {
        let group = match d.meta.first_child_month {
            Some(g) => Cohort::at(g),
            None => Cohort::NEVER,
        };
        let age = d.meta.first_child_month.map(|_| d.age as f64);
        for (k, m) in d.range.iter().enumerate() {
            observations.push(PanelObservation {
                unit: i as u32,
                month: m,
                y_rx: d.rx[k],
                y_psy: d.psy[k],
                y_gp: d.gp[k],
                group,
                event_time: group.event_time(m),
                age_at_first_birth: age,
            });
        }
        units.push(d.meta);
    }
    let panel = Panel::from_parts(units, observations, window, balanced, vec![])?;
    let span = cfg.window_months as i32;
    Ok(Simulation {
        config: cfg.clone(),
        panel,
        truth: true_event_effects(cfg, -span, span),
    })
}

/// Claims reproducing `sim.panel` under the smoothing rules: every on spell
/// is covered by one to three month purchases, optionally leaving one or two
/// month holes that gap filling restores; visits become one claim each.
pub fn simulate_claims(sim: &Simulation) -> Vec<ClaimRecord> {
    let cfg = &sim.config;
    let per_unit: Vec<Vec<ClaimRecord>> = (0..sim.panel.n_units())
        .into_par_iter()
        .map(|u| {
            let mut rng = rng_from(cfg.seed, &[stream::SIM_UNIT, u as u64, 1]);
            let id = &sim.panel.units[u].unit_id;
            let rows = sim.panel.unit_rows(u);
            let mut out = Vec::new();
            let mut k = 0;
            while k < rows.len() {
                if rows[k].y_rx == 0 {
                    k += 1;
                    continue;
                }
                let start = k;
                while k < rows.len() && rows[k].y_rx == 1 {
                    k += 1;
                }
                purchases(&mut rng, cfg.claim_gap_prob, rows[start].month, k - start, id, &mut out);
            }
            for o in rows {
                for _ in 0..o.y_psy {
                    out.push(ClaimRecord::visit(id.clone(), o.month, ClaimKind::Psy));
                }
                for _ in 0..o.y_gp {
                    out.push(ClaimRecord::visit(id.clone(), o.month, ClaimKind::Gp));
                }
            }
            out.sort_by_key(|c| c.month);
            out
        })
        .collect();
    per_unit.into_iter().flatten().collect()
}

/// Covers `len` on months starting at `first`.
fn purchases(rng: &mut Rng, gap_prob: f64, first: Month, len: usize, id: &str, out: &mut Vec<ClaimRecord>) {
    let mut pos = 0usize;
    while pos < len {
        let left = len - pos;
        let cover = rng.gen_range(1..=3usize).min(left);
        out.push(ClaimRecord::rx(id.to_string(), first + pos as i32, cover as u32, PILLS));
        pos += cover;
        let left = len - pos;
        // A hole must be followed by at least one purchased month in the spell.
        if left >= 2 && rng.gen::<f64>() < gap_prob {
            let hole = rng.gen_range(1..=2usize).min(left - 1);
            pos += hole;
        }
    }
}

fn draw_units(cfg: &DgpConfig) -> Result<Vec<Draw>> {
    let window = cfg.window();
    let cohorts = cfg.cohort_months();
    let n_c = cohorts.len();
    let ages = cfg.ages();
    let positions: Vec<f64> = (0..n_c).map(|i| cfg.cohort_position(i, n_c)).collect();

    // One chain per (age, cohort) type; index n_c is never treated.
    let types: Vec<(i32, usize)> = ages
        .iter()
        .flat_map(|&a| (0..=n_c).map(move |c| (a, c)))
        .collect();
    let chains: Vec<SpellChain> = types
        .par_iter()
        .map(|&(a, c)| {
            let cohort = (c < n_c).then(|| (cohorts[c], positions[c]));
            let path: Vec<f64> = window.iter().map(|m| cfg.rate(a, cohort, m)).collect();
            SpellChain::new(cfg.persistence, &path).map_err(Error::config)
        })
        .collect::<Result<_>>()?;
    let chain_of: HashMap<(i32, usize), usize> = types.iter().enumerate().map(|(i, t)| (*t, i)).collect();

    // Cumulative cohort weights per age.
    let timing: HashMap<i32, Vec<f64>> = ages
        .iter()
        .map(|&a| {
            let z = z_of(a);
            let mut acc = 0.0;
            let cum = positions
                .iter()
                .map(|r| {
                    acc += (cfg.timing_slope * z * r).exp();
                    acc
                })
                .collect();
            (a, cum)
        })
        .collect();

    let visits = |rate: f64| -> Result<Option<Poisson<f64>>> {
        (rate > 0.0)
            .then(|| Poisson::new(rate).map_err(|e| Error::config(e.to_string())))
            .transpose()
    };
    let (psy, gp) = (visits(cfg.psy_rate)?, visits(cfg.gp_rate)?);
    let mid_year = year_of(window.lo + window.len() as i32 / 2);

    Ok((0..cfg.n_units)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(cfg.seed, &[stream::SIM_UNIT, i as u64]);
            let age = ages[rng.gen_range(0..ages.len())];
            let c = if n_c == 0 || rng.gen::<f64>() < cfg.never_treated_share {
                n_c
            } else {
                let cum = &timing[&age];
                let u = rng.gen::<f64>() * cum[n_c - 1];
                cum.partition_point(|&v| v <= u).min(n_c - 1)
            };
            let first_child = (c < n_c).then(|| cohorts[c]);
            let birth_year = first_child.map_or(mid_year, year_of) - age;
            let mut meta = UnitMeta::new(unit_id(i), birth_year, first_child);
            meta.employed = rng.gen::<f64>() < 0.7;
            meta.subsidy = rng.gen::<f64>() < 0.2;
            meta.cesarean = rng.gen::<f64>() < 0.2;
            let range = if rng.gen::<f64>() < cfg.dropout_share && window.len() > 13 {
                let end = rng.gen_range(window.lo + 12..window.hi);
                meta.enrollment = Some(MonthRange { lo: window.lo, hi: end });
                MonthRange { lo: window.lo, hi: end }
            } else {
                window
            };
            let full = chains[chain_of[&(age, c)]].sample(&mut rng);
            let len = range.len();
            let mut counts = |d: &Option<Poisson<f64>>| -> Vec<u32> {
                (0..len).map(|_| d.as_ref().map_or(0, |d| d.sample(&mut rng) as u32)).collect()
            };
            let psy_v = counts(&psy);
            let gp_v = counts(&gp);
            Draw {
                meta,
                age,
                rx: full[..len].to_vec(),
                psy: psy_v,
                gp: gp_v,
                range,
            }
        })
        .collect())
}

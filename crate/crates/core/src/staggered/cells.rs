use rayon::prelude::*;
use serde::Serialize;

use super::dr::{att_gt_dr, CellResult, GroupTimeEffect, SkippedCell};
use super::{DidConfig, DidData};
use crate::error::{Error, Result};
use crate::panel::Month;

/// One (g, τ) comparison before estimation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupTimeCell {
    pub g: Month,
    pub tau: Month,
    pub anticipation: i32,
    pub base_period: Month,
    pub treated: Vec<usize>,
    pub controls: Vec<usize>,
}

/// Units usable as controls for cohort `g` in month `tau`.
///
/// A control must be untreated, and outside its own anticipation window, at
/// both `tau` and the base period `g - delta - 1`; that is, its cohort exceeds
/// `max(tau, base) + delta`. For post-anticipation cells this is the usual
/// "not yet treated by τ + δ" rule. Cohort `g` itself never serves as control.
pub fn control_pool(
    data: &DidData,
    g: Month,
    tau: Month,
    delta: i32,
    include_never_treated: bool,
) -> Vec<usize> {
    let base = g - delta - 1;
    let cutoff = tau.max(base) + delta;
    (0..data.n_units())
        .filter(|&u| match data.group(u).month() {
            Some(h) => h > cutoff && h != g,
            None => include_never_treated,
        })
        .collect()
}

impl GroupTimeCell {
    pub fn new(data: &DidData, g: Month, tau: Month, cfg: &DidConfig) -> Self {
        let treated = (0..data.n_units())
            .filter(|&u| data.group(u).month() == Some(g))
            .collect();
        Self {
            g,
            tau,
            anticipation: cfg.anticipation,
            base_period: g - cfg.anticipation - 1,
            treated,
            controls: control_pool(data, g, tau, cfg.anticipation, cfg.include_never_treated),
        }
    }

    pub fn event_time(&self) -> i32 {
        self.tau - self.g
    }
}

/// All (g, τ) pairs with τ in the data window and τ − g in the event window,
/// ordered by (g, τ).
pub fn enumerate_cells(data: &DidData, cfg: &DidConfig) -> Vec<(Month, Month)> {
    let (lo, hi) = cfg.event_window;
    let mut cells = Vec::new();
    for g in data.cohorts() {
        for t in lo..=hi {
            if data.months().contains(g + t) {
                cells.push((g, g + t));
            }
        }
    }
    cells
}

/// Estimated cells and the cells that were skipped, both ordered by (g, τ).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSet {
    pub effects: Vec<GroupTimeEffect>,
    pub skipped: Vec<SkippedCell>,
    pub n_units: usize,
}

/// Estimates every cell of [`enumerate_cells`]. Cells that are too small, lack
/// controls, or fail overlap are recorded in `skipped`.
pub fn att_gt_all(data: &DidData, cfg: &DidConfig) -> Result<CellSet> {
    cfg.validate()?;
    let results: Vec<Result<CellResult>> = enumerate_cells(data, cfg)
        .into_par_iter()
        .map(|(g, tau)| match att_gt_dr(data, g, tau, cfg) {
            Err(Error::Estimation(reason)) => Ok(CellResult::Skipped(SkippedCell { g, tau, reason })),
            other => other,
        })
        .collect();
    let mut effects = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            CellResult::Estimated(e) => effects.push(e),
            CellResult::Skipped(s) => skipped.push(s),
        }
    }
    Ok(CellSet {
        effects,
        skipped,
        n_units: data.n_units(),
    })
}

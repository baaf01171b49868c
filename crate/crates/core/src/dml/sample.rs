use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::DesignMatrix;
use crate::panel::{Month, Panel};

/// Event years stored per mother, `-2..=2`.
pub const EVENT_YEARS: std::ops::RangeInclusive<i32> = -2..=2;

/// One mother: first-birth month, covariates, and any-prescription outcome
/// per event year (`None` when the year is not fully observed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotherRecord {
    pub unit_id: String,
    pub birth_month: Month,
    pub x: Vec<f64>,
    pub outcomes: Vec<Option<u8>>,
    /// Observed take-up; carried for descriptives and never used by estimators.
    pub take_up: Option<bool>,
}

impl MotherRecord {
    pub fn outcome(&self, event_year: i32) -> Option<u8> {
        if !EVENT_YEARS.contains(&event_year) {
            return None;
        }
        self.outcomes[(event_year - EVENT_YEARS.start()) as usize]
    }
}

/// Month range of event year `k` for a birth in month `g`: year 0 is
/// `g-11..=g`, year 1 is `g+1..=g+12`.
pub fn event_year_months(g: Month, k: i32) -> (Month, Month) {
    (g + 12 * (k - 1) + 1, g + 12 * k)
}

/// Mothers from a claims panel, with covariates `[age, employed, subsidy]`.
pub fn mothers_from_panel(panel: &Panel) -> (Vec<MotherRecord>, Vec<String>) {
    let names = vec!["age".to_string(), "employed".into(), "subsidy".into()];
    let mut out = Vec::new();
    for u in 0..panel.n_units() {
        let Some(g) = panel.group(u).month() else { continue };
        let Some(age) = panel.covariate(u) else { continue };
        let meta = &panel.units[u];
        let outcomes = EVENT_YEARS
            .map(|k| {
                let (lo, hi) = event_year_months(g, k);
                let mut any = 0u8;
                for m in lo..=hi {
                    any |= panel.observation(u, m)?.y_rx;
                }
                Some(any)
            })
            .collect();
        out.push(MotherRecord {
            unit_id: meta.unit_id.clone(),
            birth_month: g,
            x: vec![age, meta.employed as u8 as f64, meta.subsidy as u8 as f64],
            outcomes,
            take_up: None,
        });
    }
    (out, names)
}

/// Two-period design around a reform month.
///
/// With window `W` and shift `s`, mothers giving birth in `[R-s, R-s+W)` have
/// `D = 1` and those in `[R-s-W, R-s)` have `D = 0`; the same windows twelve
/// months earlier form the `T = 0` year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReformDesign {
    pub reform: Month,
    pub window: u32,
    pub shift: u32,
    pub event_year: i32,
}

impl Default for ReformDesign {
    fn default() -> Self {
        Self {
            reform: 132,
            window: 3,
            shift: 0,
            event_year: 1,
        }
    }
}

impl ReformDesign {
    /// `(d, t)` for a birth month, or `None` outside all four windows.
    pub fn cell(&self, birth: Month) -> Option<(u8, u8)> {
        let w = self.window as i32;
        let cut = self.reform - self.shift as i32;
        for (t, c) in [(1u8, cut), (0u8, cut - 12)] {
            if (c..c + w).contains(&birth) {
                return Some((1, t));
            }
            if (c - w..c).contains(&birth) {
                return Some((0, t));
            }
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window > 6 {
            return Err(Error::config("treatment window must be 1 to 6 months"));
        }
        if !EVENT_YEARS.contains(&self.event_year) {
            return Err(Error::config("event year must lie in -2..=2"));
        }
        Ok(())
    }
}

/// Repeated cross-section for the two-period DiD.
#[derive(Debug, Clone, PartialEq)]
pub struct DidSample {
    pub y: Vec<f64>,
    pub d: Vec<u8>,
    pub t: Vec<u8>,
    /// Covariates without an intercept.
    pub x: DesignMatrix,
    pub ids: Vec<String>,
}

impl DidSample {
    pub fn new(y: Vec<f64>, d: Vec<u8>, t: Vec<u8>, x: DesignMatrix, ids: Vec<String>) -> Result<Self> {
        let n = y.len();
        if d.len() != n || t.len() != n || x.nrows() != n || ids.len() != n {
            return Err(Error::data("sample columns differ in length"));
        }
        if d.iter().chain(&t).any(|&v| v > 1) {
            return Err(Error::data("d and t must be 0/1"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite outcome"));
        }
        let s = Self { y, d, t, x, ids };
        let c = s.cell_counts();
        if let Some(i) = c.iter().position(|&k| k == 0) {
            let (dd, tt) = CELLS[i];
            return Err(Error::data(format!(
                "cell (d={dd}, t={tt}) is empty; counts {}",
                describe(&c)
            )));
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Counts in the order (1,1), (0,1), (1,0), (0,0).
    pub fn cell_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for (&d, &t) in self.d.iter().zip(&self.t) {
            c[CELLS.iter().position(|&x| x == (d, t)).unwrap()] += 1;
        }
        c
    }

    /// Stratum label `2d + t`.
    pub fn strata(&self) -> Vec<u32> {
        self.d.iter().zip(&self.t).map(|(&d, &t)| 2 * d as u32 + t as u32).collect()
    }

    /// Difference in differences of the four cell means.
    pub fn cell_mean_did(&self) -> f64 {
        let mut s = [0.0; 4];
        let c = self.cell_counts();
        for i in 0..self.len() {
            s[CELLS.iter().position(|&x| x == (self.d[i], self.t[i])).unwrap()] += self.y[i];
        }
        let m: Vec<f64> = s.iter().zip(&c).map(|(s, &c)| s / c as f64).collect();
        (m[0] - m[2]) - (m[1] - m[3])
    }
}

const CELLS: [(u8, u8); 4] = [(1, 1), (0, 1), (1, 0), (0, 0)];

pub(crate) fn describe(c: &[usize; 4]) -> String {
    format!("d1t1={}, d0t1={}, d1t0={}, d0t0={}", c[0], c[1], c[2], c[3])
}

/// Records plus the design that turns them into a [`DidSample`].
#[derive(Debug, Clone, Copy)]
pub struct SampleBuilder<'a> {
    pub records: &'a [MotherRecord],
    pub x_names: &'a [String],
    pub design: ReformDesign,
}

impl<'a> SampleBuilder<'a> {
    pub fn new(records: &'a [MotherRecord], x_names: &'a [String], design: ReformDesign) -> Self {
        Self { records, x_names, design }
    }

    pub fn with_shift(&self, shift: u32) -> Self {
        Self {
            design: ReformDesign { shift, ..self.design },
            ..*self
        }
    }

    pub fn with_window(&self, window: u32) -> Self {
        Self {
            design: ReformDesign { window, ..self.design },
            ..*self
        }
    }

    pub fn build(&self) -> Result<DidSample> {
        self.design.validate()?;
        let k = self.x_names.len();
        let mut y = Vec::new();
        let mut d = Vec::new();
        let mut t = Vec::new();
        let mut x = Vec::new();
        let mut ids = Vec::new();
        let mut counts = [0usize; 4];
        for r in self.records {
            let Some((dd, tt)) = self.design.cell(r.birth_month) else { continue };
            let Some(out) = r.outcome(self.design.event_year) else { continue };
            if r.x.len() != k {
                return Err(Error::data(format!(
                    "mother {} has {} covariates, expected {k}",
                    r.unit_id,
                    r.x.len()
                )));
            }
            counts[CELLS.iter().position(|&c| c == (dd, tt)).unwrap()] += 1;
            y.push(out as f64);
            d.push(dd);
            t.push(tt);
            x.extend_from_slice(&r.x);
            ids.push(r.unit_id.clone());
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            let (dd, tt) = CELLS[i];
            return Err(Error::data(format!(
                "reform {} (shift {}, window {}): cell (d={dd}, t={tt}) has no mothers with an observed outcome; counts {}",
                self.design.reform,
                self.design.shift,
                self.design.window,
                describe(&counts)
            )));
        }
        let n = y.len();
        let x = DesignMatrix::new(n, k, x, self.x_names.to_vec(), false)?;
        DidSample::new(y, d, t, x, ids)
    }
}

//! Mothers around a reform date for the two-period design.
//!
//! Each mother gives birth in the reform year (`T = 1`) or the year before,
//! at an offset `o` in `[-pre, post)` months from the reform month. Offsets
//! at or after the reform are favoured by `exp(s(x))`, so the propensity of
//! the reform side depends on covariates. The event-year outcome is
//! `Bernoulli(b(x) + a(x) T + c 1{o >= 0} + θ 1{o >= 0} T 1{k >= 1})`: the
//! effect hits only births after the true reform, from event year 1 on.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dml::{MotherRecord, ReformDesign, EVENT_YEARS};
use crate::error::{Error, Result};
use crate::panel::Month;
use crate::rng::{rng_from, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MothersConfig {
    pub n: usize,
    pub reform: Month,
    /// Months before the reform covered by births.
    pub pre: u32,
    /// Months from the reform on covered by births.
    pub post: u32,
    pub window: u32,
    pub lambda: f64,
    pub theta: f64,
    pub season_level: f64,
    pub seed: u64,
}

impl Default for MothersConfig {
    fn default() -> Self {
        Self {
            n: 20_000,
            reform: 132,
            pre: 9,
            post: 3,
            window: 3,
            lambda: 0.5,
            theta: -0.02,
            season_level: 0.01,
            seed: 1,
        }
    }
}

pub const MOTHER_COVARIATES: [&str; 6] = ["age", "employed", "subsidy", "married", "language", "region"];

fn z(x: &[f64]) -> f64 {
    (x[0] - 30.0) / 5.0
}

impl MothersConfig {
    pub fn design(&self) -> ReformDesign {
        ReformDesign {
            reform: self.reform,
            window: self.window,
            shift: 0,
            event_year: 1,
        }
    }

    /// Selection index: offsets at or after the reform get weight `exp(s)`.
    pub fn selection(&self, x: &[f64]) -> f64 {
        let z = z(x);
        0.6 * z - 0.4 * x[1] + 0.3 * x[2] + 0.3 * z * z
    }

    pub fn level(&self, x: &[f64]) -> f64 {
        0.15 + 0.03 * z(x) + 0.02 * x[1] - 0.02 * x[2]
    }

    pub fn trend(&self, x: &[f64]) -> f64 {
        let z = z(x);
        0.08 + 0.04 * z * z
    }

    /// Outcome probability in event year `k`.
    pub fn mean_outcome(&self, x: &[f64], t: u8, offset: i32, k: i32) -> f64 {
        let after = (offset >= 0) as u8 as f64;
        self.level(x)
            + self.trend(x) * t as f64
            + self.season_level * after
            + self.theta * after * t as f64 * (k >= 1) as u8 as f64
    }

    /// True propensity of `d = 1` within the design's four windows.
    pub fn true_g(&self, x: &[f64], design: &ReformDesign) -> f64 {
        let cut = -(design.shift as i32);
        let w = design.window as i32;
        let wt = |o: i32| if o >= 0 { self.selection(x).exp() } else { 1.0 };
        let treated: f64 = (cut..cut + w).map(wt).sum();
        let control: f64 = (cut - w..cut).map(wt).sum();
        treated / (treated + control)
    }

    /// True `E[(T - λ) Y | X, D = 0]`.
    pub fn true_l(&self, x: &[f64], design: &ReformDesign) -> f64 {
        let cut = -(design.shift as i32);
        let w = design.window as i32;
        let wt = |o: i32| if o >= 0 { self.selection(x).exp() } else { 1.0 };
        let offs: Vec<i32> = (cut - w..cut).collect();
        let tot: f64 = offs.iter().map(|&o| wt(o)).sum();
        let m = |t: u8| offs.iter().map(|&o| wt(o) * self.mean_outcome(x, t, o, design.event_year)).sum::<f64>() / tot;
        self.lambda * (1.0 - self.lambda) * (m(1) - m(0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || !(0.0..1.0).contains(&self.lambda) || self.lambda == 0.0 {
            return Err(Error::config("need n > 0 and lambda in (0, 1)"));
        }
        if self.window == 0 || self.window > self.post.min(self.pre) {
            return Err(Error::config("window must fit inside the birth range"));
        }
        Ok(())
    }
}

/// Simulates mothers; returns the records and covariate names.
pub fn simulate_mothers(cfg: &MothersConfig) -> Result<(Vec<MotherRecord>, Vec<String>)> {
    cfg.validate()?;
    let offsets: Vec<i32> = (-(cfg.pre as i32)..cfg.post as i32).collect();
    let records = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(cfg.seed, &[stream::MOTHERS, i as u64]);
            let x = vec![
                rng.gen_range(20..=40) as f64,
                (rng.gen::<f64>() < 0.7) as u8 as f64,
                (rng.gen::<f64>() < 0.2) as u8 as f64,
                (rng.gen::<f64>() < 0.6) as u8 as f64,
                (rng.gen::<f64>() < 0.1) as u8 as f64,
                rng.gen_range(0..5) as f64,
            ];
            let t = (rng.gen::<f64>() < cfg.lambda) as u8;
            let e = cfg.selection(&x).exp();
            let weights: Vec<f64> = offsets.iter().map(|&o| if o >= 0 { e } else { 1.0 }).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            let mut o = *offsets.last().unwrap();
            for (&off, &w) in offsets.iter().zip(&weights) {
                if u < w {
                    o = off;
                    break;
                }
                u -= w;
            }
            let outcomes = EVENT_YEARS
                .map(|k| {
                    let mu = cfg.mean_outcome(&x, t, o, k).clamp(0.0, 1.0);
                    Some((rng.gen::<f64>() < mu) as u8)
                })
                .collect();
            let exposed = o >= 0 && t == 1;
            MotherRecord {
                unit_id: format!("m{i:06}"),
                birth_month: cfg.reform + o - 12 * (1 - t as i32),
                take_up: Some(rng.gen::<f64>() < if exposed { 0.6 } else { 0.02 }),
                x,
                outcomes,
            }
        })
        .collect();
    Ok((records, MOTHER_COVARIATES.iter().map(|s| s.to_string()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dml::SampleBuilder;
    use crate::learners::sigmoid;

    #[test]
    fn main_design_propensity_is_logistic() {
        let cfg = MothersConfig::default();
        for x in [[25.0, 1.0, 0.0, 0.0, 0.0, 0.0], [38.0, 0.0, 1.0, 1.0, 1.0, 3.0]] {
            let g = cfg.true_g(&x, &cfg.design());
            assert!((g - sigmoid(cfg.selection(&x))).abs() < 1e-14);
        }
        let placebo = ReformDesign { shift: 3, ..cfg.design() };
        assert!((cfg.true_g(&[30.0, 1.0, 0.0, 0.0, 0.0, 0.0], &placebo) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn outcome_probabilities_in_unit_interval() {
        let cfg = MothersConfig::default();
        for age in 20..=40 {
            for e in [0.0, 1.0] {
                for s in [0.0, 1.0] {
                    let x = [age as f64, e, s, 0.0, 0.0, 0.0];
                    for t in [0, 1] {
                        for o in [-9, 0] {
                            let m = cfg.mean_outcome(&x, t, o, 1);
                            assert!(m > 0.0 && m < 1.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cells_filled_and_deterministic() {
        let cfg = MothersConfig { n: 4000, ..MothersConfig::default() };
        let (a, names) = simulate_mothers(&cfg).unwrap();
        let (b, _) = simulate_mothers(&cfg).unwrap();
        assert_eq!(a, b);
        let s = SampleBuilder::new(&a, &names, cfg.design()).build().unwrap();
        assert!(s.cell_counts().iter().all(|&c| c > 300));
        // Six-month placebo still has births on both sides.
        SampleBuilder::new(&a, &names, ReformDesign { shift: 6, ..cfg.design() }).build().unwrap();
    }

    #[test]
    fn invalid_window_rejected() {
        let cfg = MothersConfig { window: 4, ..MothersConfig::default() };
        assert!(simulate_mothers(&cfg).is_err());
    }
}

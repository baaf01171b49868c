use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::cells::GroupTimeCell;
use super::{DidConfig, DidData};
use crate::error::{Error, Result};
use crate::learners::{fit_logit, fit_ols, predict_proba, DesignMatrix, EPS_CLIP};
use crate::panel::Month;

/// Doubly robust ATT(g, τ) with its influence function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTimeEffect {
    pub g: Month,
    pub tau: Month,
    pub event_time: i32,
    pub base_period: Month,
    pub estimate: f64,
    /// `sd(influence) / sqrt(n_cell)`.
    pub se: f64,
    /// Data unit indices of the cell sample, treated units first.
    pub units: Vec<u32>,
    /// Per-unit influence values aligned with `units`, scaled to the cell sample.
    pub influence: Vec<f64>,
    pub n_treated: usize,
    pub n_control: usize,
    /// Controls given zero weight by overlap trimming.
    pub n_trimmed: usize,
    pub diagnostics: Vec<String>,
}

impl GroupTimeEffect {
    /// Influence function over all `n_units` data units (zero outside the cell).
    pub fn influence_full(&self, n_units: usize) -> Vec<f64> {
        let scale = n_units as f64 / self.units.len() as f64;
        let mut out = vec![0.0; n_units];
        for (&u, &v) in self.units.iter().zip(&self.influence) {
            out[u as usize] = scale * v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedCell {
    pub g: Month,
    pub tau: Month,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CellResult {
    Estimated(GroupTimeEffect),
    Skipped(SkippedCell),
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `(1/n) Σ w_i x_i` over the rows of a design.
fn weighted_col_means(x: &DesignMatrix, w: &[f64]) -> DVector<f64> {
    let mut m = DVector::zeros(x.ncols());
    for i in 0..x.nrows() {
        for (j, v) in x.row(i).iter().enumerate() {
            m[j] += w[i] * v;
        }
    }
    m / x.nrows() as f64
}

/// `(1/n) Σ w_i x_i x_i'`, inverted.
fn weighted_gram_inverse(x: &DesignMatrix, w: &[f64], what: &str) -> Result<DMatrix<f64>> {
    let k = x.ncols();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..x.nrows() {
        let r = x.row(i);
        for a in 0..k {
            for b in 0..k {
                g[(a, b)] += w[i] * r[a] * r[b];
            }
        }
    }
    (g / x.nrows() as f64)
        .try_inverse()
        .ok_or_else(|| Error::estimation(format!("singular {what} design")))
}

/// Estimates one cell.
///
/// The treated are weighted by `D / E[D]`, controls by the normalized odds
/// `p(X) / (1 - p(X))`, and both are applied to `ΔY - m(X)`, where `m` is the
/// least-squares fit of the control outcome change on `X`. The influence
/// function includes the estimation effect of both nuisance models.
///
/// Cells below the minimum size are returned as [`CellResult::Skipped`];
/// an overlap failure is an [`Error::Estimation`].
pub fn att_gt_dr(data: &DidData, g: Month, tau: Month, cfg: &DidConfig) -> Result<CellResult> {
    let skip = |reason: String| Ok(CellResult::Skipped(SkippedCell { g, tau, reason }));
    let cell = GroupTimeCell::new(data, g, tau, cfg);
    let base = cell.base_period;
    if !data.months().contains(base) {
        return skip(format!("base period {base} outside the window"));
    }
    if !data.months().contains(tau) {
        return skip(format!("month {tau} outside the window"));
    }
    let needs_x = cfg.ps_spec.needs_covariate() || cfg.or_spec.needs_covariate();
    let mut diagnostics = Vec::new();
    let usable = |u: usize| -> Option<(f64, f64)> {
        let dy = data.y(u, tau)? - data.y(u, base)?;
        let x = match data.covariate(u) {
            Some(a) => a,
            None if needs_x => return None,
            None => 0.0,
        };
        Some((dy, x))
    };
    let mut units = Vec::new();
    let mut dy = Vec::new();
    let mut age = Vec::new();
    let mut d = Vec::new();
    for (list, flag) in [(&cell.treated, 1.0), (&cell.controls, 0.0)] {
        let mut dropped = 0;
        for &u in list.iter() {
            match usable(u) {
                Some((v, a)) => {
                    units.push(u as u32);
                    dy.push(v);
                    age.push(a);
                    d.push(flag);
                }
                None => dropped += 1,
            }
        }
        if dropped > 0 {
            let who = if flag == 1.0 { "treated" } else { "control" };
            diagnostics.push(format!("{dropped} {who} units lack outcomes or covariates"));
        }
    }
    let n_treated = d.iter().filter(|&&v| v == 1.0).count();
    let n_control = d.len() - n_treated;
    if n_treated < cfg.min_treated || n_control < cfg.min_control {
        return skip(format!(
            "cell too small: {n_treated} treated, {n_control} controls (minimum {}/{})",
            cfg.min_treated, cfg.min_control
        ));
    }
    let xps = cfg.ps_spec.design(&age);
    let xor = cfg.or_spec.design(&age);
    if n_control <= xor.ncols() {
        return skip(format!("{n_control} controls cannot identify the outcome regression"));
    }
    let n = d.len();

    let ps_fit = fit_logit(&xps, &d, &cfg.logit)?;
    diagnostics.extend(ps_fit.diagnostics.iter().map(|s| format!("propensity: {s}")));
    let ps = predict_proba(&ps_fit, &xps, EPS_CLIP);

    let control_rows: Vec<usize> = (0..n).filter(|&i| d[i] == 0.0).collect();
    let ctrl_y: Vec<f64> = control_rows.iter().map(|&i| dy[i]).collect();
    let or_fit = fit_ols(&xor.select_rows(&control_rows), &ctrl_y)?;
    diagnostics.extend(or_fit.diagnostics.iter().map(|s| format!("outcome regression: {s}")));
    let resid: Vec<f64> = (0..n).map(|i| dy[i] - xor.dot_row(i, &or_fit.coefficients)).collect();

    let mut n_trimmed = 0;
    let w_t: Vec<f64> = d.clone();
    let w_c: Vec<f64> = (0..n)
        .map(|i| {
            if d[i] == 1.0 {
                0.0
            } else if ps[i] > 1.0 - cfg.eps_trim {
                n_trimmed += 1;
                0.0
            } else {
                ps[i] / (1.0 - ps[i])
            }
        })
        .collect();
    let (mean_wt, mean_wc) = (mean(&w_t), mean(&w_c));
    if mean_wc <= 0.0 {
        return Err(Error::estimation(format!(
            "overlap failure: all {n_control} controls trimmed in cell g={g}, tau={tau}"
        )));
    }
    if n_trimmed > 0 {
        diagnostics.push(format!("{n_trimmed} controls trimmed for overlap"));
    }
    let wr_t: Vec<f64> = (0..n).map(|i| w_t[i] * resid[i]).collect();
    let wr_c: Vec<f64> = (0..n).map(|i| w_c[i] * resid[i]).collect();
    let att_t = mean(&wr_t) / mean_wt;
    let att_c = mean(&wr_c) / mean_wc;
    let estimate = att_t - att_c;

    // Asymptotic linear representations of the two nuisance fits.
    let one_minus_d: Vec<f64> = d.iter().map(|v| 1.0 - v).collect();
    let xpx_inv = weighted_gram_inverse(&xor, &one_minus_d, "outcome regression")?;
    let w_ps: Vec<f64> = ps.iter().map(|p| p * (1.0 - p)).collect();
    let hps_inv = weighted_gram_inverse(&xps, &w_ps, "propensity")?;

    let m1 = weighted_col_means(&xor, &w_t);
    let m3 = weighted_col_means(&xor, &w_c);
    let wc_centered: Vec<f64> = (0..n).map(|i| w_c[i] * (resid[i] - att_c)).collect();
    let m2 = weighted_col_means(&xps, &wc_centered);
    let ols_m1 = &xpx_inv * &m1;
    let ols_m3 = &xpx_inv * &m3;
    let ps_m2 = &hps_inv * &m2;

    let influence: Vec<f64> = (0..n)
        .map(|i| {
            let xo = xor.row(i);
            let xp = xps.row(i);
            let ols_scale = one_minus_d[i] * resid[i];
            let dot = |row: &[f64], v: &DVector<f64>| -> f64 {
                row.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
            };
            let inf_treat =
                (w_t[i] * (resid[i] - att_t) - ols_scale * dot(xo, &ols_m1)) / mean_wt;
            let inf_cont = (wc_centered[i] + (d[i] - ps[i]) * dot(xp, &ps_m2)
                - ols_scale * dot(xo, &ols_m3))
                / mean_wc;
            inf_treat - inf_cont
        })
        .collect();
    let se = (influence.iter().map(|v| v * v).sum::<f64>()).sqrt() / n as f64;
    if !estimate.is_finite() || !se.is_finite() {
        return Err(Error::estimation(format!("non-finite estimate in cell g={g}, tau={tau}")));
    }

    Ok(CellResult::Estimated(GroupTimeEffect {
        g,
        tau,
        event_time: tau - g,
        base_period: base,
        estimate,
        se,
        units,
        influence,
        n_treated,
        n_control,
        n_trimmed,
        diagnostics,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{Cohort, MonthRange};
    use crate::rng::rng_from;
    use crate::staggered::CovariateSpec;
    use proptest::prelude::*;
    use rand::Rng;

    /// Two cohorts (g = 12 and g = 30), months 0..=40, per-unit outcomes.
    fn two_cohort(y: impl Fn(usize, Month) -> f64, n1: usize, n2: usize, ages: &[f64]) -> DidData {
        let months = MonthRange { lo: 0, hi: 40 };
        let n = n1 + n2;
        let mut grid = Vec::with_capacity(n * months.len());
        for u in 0..n {
            for m in months.iter() {
                grid.push(y(u, m));
            }
        }
        let groups = (0..n)
            .map(|u| Cohort::at(if u < n1 { 12 } else { 30 }))
            .collect();
        DidData::new(months, grid, groups, ages.iter().map(|&a| Some(a)).collect()).unwrap()
    }

    fn cfg(ps: CovariateSpec, or: CovariateSpec) -> DidConfig {
        DidConfig {
            anticipation: 2,
            ps_spec: ps,
            or_spec: or,
            ..DidConfig::default()
        }
    }

    fn estimated(r: CellResult) -> GroupTimeEffect {
        match r {
            CellResult::Estimated(e) => e,
            CellResult::Skipped(s) => panic!("skipped: {}", s.reason),
        }
    }

    #[test]
    fn collapses_to_difference_in_means() {
        // Treated ΔY = 0.5, control ΔY = 0.2 between base 9 and τ = 14.
        let d = two_cohort(
            |u, m| if m == 14 { if u < 6 { 0.5 } else { 0.2 } } else { 0.0 },
            6,
            7,
            &[30.0; 13],
        );
        let e = estimated(att_gt_dr(&d, 12, 14, &cfg(CovariateSpec::Intercept, CovariateSpec::Intercept)).unwrap());
        assert!((e.estimate - 0.3).abs() < 1e-12);
        assert_eq!(e.base_period, 9);
        assert_eq!((e.n_treated, e.n_control), (6, 7));
    }

    #[test]
    fn small_cell_skipped() {
        let d = two_cohort(|_, _| 0.0, 3, 7, &[30.0; 10]);
        let r = att_gt_dr(&d, 12, 14, &cfg(CovariateSpec::Intercept, CovariateSpec::Intercept)).unwrap();
        assert!(matches!(r, CellResult::Skipped(_)));
    }

    #[test]
    fn overlap_failure_when_all_controls_trimmed() {
        // Intercept-only propensity 10/15 exceeds 1 - 0.4 for every control.
        let mut c = cfg(CovariateSpec::Intercept, CovariateSpec::Intercept);
        c.eps_trim = 0.4;
        let d = two_cohort(|_, _| 0.0, 10, 5, &[30.0; 15]);
        let r = att_gt_dr(&d, 12, 14, &c);
        assert!(matches!(r, Err(Error::Estimation(ref m)) if m.contains("overlap")));
    }

    /// Straight-line DR estimate: Newton logit and 2x2 normal equations written out.
    fn textbook_dr(d: &[f64], dy: &[f64], x: &[f64]) -> f64 {
        let n = d.len();
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for _ in 0..200 {
            let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                let p = 1.0 / (1.0 + (-(a + b * x[i])).exp());
                g0 += d[i] - p;
                g1 += (d[i] - p) * x[i];
                let w = p * (1.0 - p);
                h00 += w;
                h01 += w * x[i];
                h11 += w * x[i] * x[i];
            }
            let det = h00 * h11 - h01 * h01;
            a += (h11 * g0 - h01 * g1) / det;
            b += (h00 * g1 - h01 * g0) / det;
        }
        let (mut sxx, mut sx, mut s1, mut sxy, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            if d[i] == 0.0 {
                s1 += 1.0;
                sx += x[i];
                sxx += x[i] * x[i];
                sy += dy[i];
                sxy += x[i] * dy[i];
            }
        }
        let slope = (s1 * sxy - sx * sy) / (s1 * sxx - sx * sx);
        let icpt = (sy - slope * sx) / s1;
        let (mut wt, mut wc, mut at, mut ac) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let m = icpt + slope * x[i];
            let p = 1.0 / (1.0 + (-(a + b * x[i])).exp());
            let odds = p * (1.0 - d[i]) / (1.0 - p);
            wt += d[i];
            wc += odds;
            at += d[i] * (dy[i] - m);
            ac += odds * (dy[i] - m);
        }
        at / wt - ac / wc
    }

    #[test]
    fn matches_textbook_reference_on_six_units() {
        let ages = [24.0, 31.0, 36.0, 27.0, 33.0, 29.0];
        let dy = [0.3, -0.1, 0.8, 0.2, 0.5, -0.4];
        let d = two_cohort(|u, m| if m == 14 { dy[u] } else { 0.0 }, 3, 3, &ages);
        let mut c = cfg(CovariateSpec::Linear, CovariateSpec::Linear);
        c.min_treated = 3;
        c.min_control = 3;
        let e = estimated(att_gt_dr(&d, 12, 14, &c).unwrap());
        let z: Vec<f64> = ages.iter().map(|a| (a - 30.0) / 5.0).collect();
        let reference = textbook_dr(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0], &dy, &z);
        assert!((e.estimate - reference).abs() < 1e-10, "{} vs {reference}", e.estimate);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn influence_mean_zero_and_se_consistent(seed in any::<u64>()) {
            let mut rng = rng_from(seed, &[]);
            let n1 = rng.gen_range(10..40);
            let n2 = rng.gen_range(10..40);
            let ages: Vec<f64> = (0..n1 + n2).map(|_| rng.gen_range(20..=40) as f64).collect();
            let noise: Vec<f64> = (0..(n1 + n2) * 41).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d = two_cohort(|u, m| noise[u * 41 + m as usize] + 0.01 * ages[u] * m as f64, n1, n2, &ages);
            let e = estimated(att_gt_dr(&d, 12, 16, &cfg(CovariateSpec::Linear, CovariateSpec::Quadratic)).unwrap());
            let n = e.influence.len() as f64;
            let m = e.influence.iter().sum::<f64>() / n;
            // Zero up to the IRLS stopping rule (score norm 1e-8).
            prop_assert!(m.abs() < 1e-7, "mean {m}");
            let sd = (e.influence.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!((sd / n.sqrt() - e.se).abs() < 1e-8);
        }
    }
}

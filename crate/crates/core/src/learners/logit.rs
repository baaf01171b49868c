//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::DesignMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitConfig {
    /// Convergence threshold on the Euclidean norm of the score.
    pub tol: f64,
    pub max_iter: usize,
    /// Coefficient norm beyond which the data are treated as (quasi-)separated.
    pub max_coef_norm: f64,
    /// Linear predictors beyond this bound mean fitted probabilities are
    /// numerically 0 or 1, which also signals separation.
    pub max_abs_eta: f64,
}

impl Default for LogitConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            max_coef_norm: 50.0,
            max_abs_eta: 30.0,
        }
    }
}

/// Default probability clip applied by [`predict_proba`].
pub const EPS_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogitFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub log_likelihood: f64,
    /// Log-likelihood after each accepted step, starting at the initial point.
    pub trace: Vec<f64>,
    pub separation: bool,
    pub diagnostics: Vec<String>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn log_likelihood(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> f64 {
    (0..x.nrows())
        .map(|i| {
            let eta = x.dot_row(i, beta);
            y[i] * eta - softplus(eta)
        })
        .sum()
}

/// Analytic gradient `X'(y - p)` of the log-likelihood.
pub fn score(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.ncols()];
    for i in 0..x.nrows() {
        let r = y[i] - sigmoid(x.dot_row(i, beta));
        for (gj, xj) in g.iter_mut().zip(x.row(i)) {
            *gj += r * xj;
        }
    }
    g
}

fn information(x: &DesignMatrix, beta: &[f64]) -> DMatrix<f64> {
    let k = x.ncols();
    let mut h = DMatrix::zeros(k, k);
    for i in 0..x.nrows() {
        let p = sigmoid(x.dot_row(i, beta));
        let w = p * (1.0 - p);
        let row = x.row(i);
        for a in 0..k {
            let wa = w * row[a];
            for b in a..k {
                h[(a, b)] += wa * row[b];
            }
        }
    }
    h.fill_lower_triangle_with_upper_triangle();
    h
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Solves `H s = g`, adding a growing ridge when `H` is not positive definite.
fn newton_step(h: DMatrix<f64>, g: &[f64], diagnostics: &mut Vec<String>) -> Result<Vec<f64>> {
    let rhs = DVector::from_column_slice(g);
    let k = h.nrows();
    let scale = (h.trace() / k as f64).abs().max(1e-12);
    if let Some(ch) = h.clone().cholesky() {
        // A pivot this small means the system is numerically singular.
        let min_pivot = ch.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min_pivot * min_pivot > 1e-12 * scale {
            return Ok(ch.solve(&rhs).iter().copied().collect());
        }
    }
    let mut lambda = 1e-8 * scale;
    for _ in 0..20 {
        let hr = &h + DMatrix::identity(k, k) * lambda;
        if let Some(ch) = hr.cholesky() {
            diagnostics.push(format!(
                "singular weighted normal equations; ridge {lambda:.3e} added"
            ));
            return Ok(ch.solve(&rhs).iter().copied().collect());
        }
        lambda *= 10.0;
    }
    Err(Error::estimation("weighted normal equations are singular even with ridge"))
}

/// Maximizes the Bernoulli log-likelihood by Newton/IRLS with step-halving.
pub fn fit_logit(x: &DesignMatrix, y: &[f64], cfg: &LogitConfig) -> Result<LogitFit> {
    let (n, k) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(Error::data("response length differs from design rows"));
    }
    if n <= k {
        return Err(Error::data(format!("logit needs more rows ({n}) than columns ({k})")));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::data("logit response must be 0/1"));
    }

    let mut beta = vec![0.0; k];
    let ybar = y.iter().sum::<f64>() / n as f64;
    if x.has_intercept() && ybar > 0.0 && ybar < 1.0 {
        beta[0] = (ybar / (1.0 - ybar)).ln();
    }
    let mut ll = log_likelihood(x, y, &beta);
    let mut trace = vec![ll];
    let mut diagnostics = Vec::new();
    let mut separation = false;
    let mut iterations = 0;
    let mut grad = score(x, y, &beta);

    while norm(&grad) > cfg.tol && iterations < cfg.max_iter {
        iterations += 1;
        let step = newton_step(information(x, &beta), &grad, &mut diagnostics)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_ll = log_likelihood(x, y, &cand);
            if cand_ll >= ll {
                accepted = Some((cand, cand_ll));
                break;
            }
            t *= 0.5;
        }
        // No ascent left at machine precision; the score check below decides.
        let Some((cand, cand_ll)) = accepted else {
            break;
        };
        beta = cand;
        ll = cand_ll;
        trace.push(ll);
        grad = score(x, y, &beta);
        if norm(&beta) > cfg.max_coef_norm {
            separation = true;
            diagnostics.push(format!(
                "quasi-separation: coefficient norm {:.1} exceeds {}",
                norm(&beta),
                cfg.max_coef_norm
            ));
            break;
        }
    }

    if !separation {
        let eta_max = (0..n).map(|i| x.dot_row(i, &beta).abs()).fold(0.0, f64::max);
        if eta_max > cfg.max_abs_eta {
            separation = true;
            diagnostics.push(format!(
                "quasi-separation: fitted probabilities numerically 0 or 1 (|eta| = {eta_max:.1})"
            ));
        }
    }
    let gnorm = norm(&grad);
    let converged = !separation && gnorm <= cfg.tol;
    if !converged && !separation {
        diagnostics.push(format!(
            "no convergence after {iterations} iterations, gradient norm {gnorm:.3e}"
        ));
    }
    Ok(LogitFit {
        coefficients: beta,
        converged,
        iterations,
        final_gradient_norm: gnorm,
        log_likelihood: ll,
        trace,
        separation,
        diagnostics,
    })
}

impl LogitFit {
    pub fn linear_predictor(&self, x: &DesignMatrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| x.dot_row(i, &self.coefficients)).collect()
    }
}

/// Sigmoid of the linear index, clamped to `[clip, 1 - clip]`.
pub fn predict_proba(fit: &LogitFit, x: &DesignMatrix, clip: f64) -> Vec<f64> {
    fit.linear_predictor(x)
        .into_iter()
        .map(|eta| sigmoid(eta).clamp(clip, 1.0 - clip))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand::Rng;

    fn fixture(seed: u64, n: usize, b0: f64, b1: f64) -> (DesignMatrix, Vec<f64>) {
        let mut rng = rng_from(seed, &[]);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| f64::from(rng.gen::<f64>() < sigmoid(b0 + b1 * v)))
            .collect();
        (DesignMatrix::with_intercept(&[("x", &x)], n).unwrap(), y)
    }

    #[test]
    fn intercept_only_is_logit_of_mean() {
        let y: Vec<f64> = (0..400).map(|i| f64::from(i % 4 == 0)).collect();
        let x = DesignMatrix::intercept_only(400);
        let fit = fit_logit(&x, &y, &LogitConfig::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - (1.0f64 / 3.0).ln()).abs() < 1e-10);
        let p = predict_proba(&fit, &x, EPS_CLIP);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-10));
    }

    #[test]
    fn zero_coefficients_give_half() {
        let fit = LogitFit {
            coefficients: vec![0.0, 0.0],
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
            log_likelihood: 0.0,
            trace: vec![],
            separation: false,
            diagnostics: vec![],
        };
        let (x, _) = fixture(1, 10, 0.0, 0.0);
        assert!(predict_proba(&fit, &x, EPS_CLIP).iter().all(|&p| p == 0.5));
    }

    #[test]
    fn probabilities_match_hand_sigmoid() {
        let (x, y) = fixture(2, 200, -0.5, 1.0);
        let fit = fit_logit(&x, &y, &LogitConfig::default()).unwrap();
        let p = predict_proba(&fit, &x, EPS_CLIP);
        for i in 0..x.nrows() {
            let eta = fit.coefficients[0] + fit.coefficients[1] * x.get(i, 1);
            assert!((p[i] - 1.0 / (1.0 + (-eta).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn clip_applies() {
        let fit = LogitFit {
            coefficients: vec![40.0],
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
            log_likelihood: 0.0,
            trace: vec![],
            separation: false,
            diagnostics: vec![],
        };
        let p = predict_proba(&fit, &DesignMatrix::intercept_only(1), 1e-6);
        assert_eq!(p[0], 1.0 - 1e-6);
    }

    #[test]
    fn independent_feature_slope_near_zero() {
        let n = 20_000;
        let (x, y) = fixture(3, n, 0.3, 0.0);
        let fit = fit_logit(&x, &y, &LogitConfig::default()).unwrap();
        // SE of the slope: 1/sqrt(n p(1-p) var(x)) with var(x) = 4/3.
        let p = sigmoid(0.3);
        let se = 1.0 / (n as f64 * p * (1.0 - p) * 4.0 / 3.0).sqrt();
        assert!(fit.coefficients[1].abs() < 3.0 * se, "slope {}", fit.coefficients[1]);
    }

    #[test]
    fn beats_brute_force_grid() {
        let (x, y) = fixture(4, 20, 0.2, -0.8);
        let fit = fit_logit(&x, &y, &LogitConfig::default()).unwrap();
        assert!(fit.converged);
        for a in -40..=40 {
            for b in -40..=40 {
                let beta = [a as f64 * 0.1, b as f64 * 0.1];
                assert!(fit.log_likelihood >= log_likelihood(&x, &y, &beta) - 1e-12);
            }
        }
    }

    #[test]
    fn separated_data_flagged() {
        let xv: Vec<f64> = (0..30).map(|i| i as f64 - 14.5).collect();
        let y: Vec<f64> = xv.iter().map(|&v| f64::from(v > 0.0)).collect();
        let x = DesignMatrix::with_intercept(&[("x", &xv)], 30).unwrap();
        let fit = fit_logit(&x, &y, &LogitConfig::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.separation);
        assert!(fit.diagnostics.iter().any(|d| d.contains("separation")));
    }

    #[test]
    fn collinear_columns_use_ridge() {
        let (x0, y) = fixture(5, 100, 0.0, 1.0);
        let xv = x0.column(1);
        let x = DesignMatrix::with_intercept(&[("a", &xv), ("b", &xv)], 100).unwrap();
        let fit = fit_logit(&x, &y, &LogitConfig::default()).unwrap();
        assert!(fit.diagnostics.iter().any(|d| d.contains("ridge")));
        assert!(fit.coefficients.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn rejects_non_binary_response() {
        let x = DesignMatrix::intercept_only(3);
        assert!(fit_logit(&x, &[0.0, 0.5, 1.0], &LogitConfig::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn ascent_and_gradient(seed in any::<u64>(), b0 in -1.5f64..1.5, b1 in -2.0f64..2.0) {
            let (x, y) = fixture(seed, 80, b0, b1);
            let fit = fit_logit(&x, &y, &LogitConfig::default()).unwrap();
            for w in fit.trace.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            if fit.converged {
                prop_assert!(fit.final_gradient_norm <= 1e-8);
                let g = score(&x, &y, &fit.coefficients);
                let h = 1e-5;
                let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
                for j in 0..2 {
                    let mut up = fit.coefficients.clone();
                    let mut dn = fit.coefficients.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (log_likelihood(&x, &y, &up) - log_likelihood(&x, &y, &dn)) / (2.0 * h);
                    prop_assert!((fd - g[j]).abs() <= 1e-4 * scale);
                }
            }
        }
    }
}

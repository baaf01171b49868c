use serde::{Deserialize, Serialize};

use super::DidSample;
use crate::error::{Error, Result};
use crate::learners::{
    default_grid, fit_forest, fit_logit, fit_ols, grid_tune, predict_proba, stratified_kfold, DesignMatrix,
    ForestConfig, GridPoint, LogitConfig, EPS_CLIP,
};
use crate::rng::{derive_seed, stream};

/// Smallest (d, t) cell the estimator accepts.
pub const MIN_CELL: usize = 5;

/// How a nuisance function is learned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    /// Training-set mean, ignoring covariates.
    Mean,
    /// Logit for the propensity, least squares for the outcome nuisance.
    Linear,
    Forest {
        n_trees: usize,
        /// Fixed shape; when absent the shape is chosen by cross-validation.
        shape: Option<GridPoint>,
        tune_grid: Vec<GridPoint>,
        tune_folds: usize,
        tune_trees: usize,
    },
}

impl Learner {
    pub fn forest() -> Self {
        Learner::Forest {
            n_trees: 1000,
            shape: None,
            tune_grid: default_grid(),
            tune_folds: 3,
            tune_trees: 100,
        }
    }

    pub fn forest_fixed(n_trees: usize, shape: GridPoint) -> Self {
        Learner::Forest {
            n_trees,
            shape: Some(shape),
            tune_grid: vec![],
            tune_folds: 3,
            tune_trees: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmlConfig {
    pub k_folds: usize,
    pub g_learner: Learner,
    pub l_learner: Learner,
    /// Rows with `g(x) > 1 - trim` are dropped.
    pub trim: f64,
    pub seed: u64,
}

impl Default for DmlConfig {
    fn default() -> Self {
        Self {
            k_folds: 5,
            g_learner: Learner::forest(),
            l_learner: Learner::forest(),
            trim: 0.02,
            seed: 0,
        }
    }
}

impl DmlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::config("k_folds must be at least 2"));
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::config("trim must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_trimmed: usize,
    pub g_min: f64,
    pub g_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtetResult {
    pub theta: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    /// Rows entering the score after trimming.
    pub n: usize,
    pub n_trimmed: usize,
    /// Mean of the score at `theta`; zero up to rounding.
    pub score_mean: f64,
    pub p_hat: f64,
    pub lambda_hat: f64,
    /// Forest shapes chosen for `(g, l)`, when tuned.
    pub tuned: Option<(GridPoint, GridPoint)>,
    pub fold_diagnostics: Vec<FoldDiagnostics>,
}

/// The θ-free part of the orthogonal score for one row.
///
/// `(d - g) / (λ(1-λ) p (1-g)) * ((t - λ) y - l)`; the full score is this
/// minus θ.
pub fn orthogonal_score(y: f64, d: u8, t: u8, g: f64, l: f64, p: f64, lambda: f64) -> f64 {
    (d as f64 - g) / (lambda * (1.0 - lambda) * p * (1.0 - g)) * ((t as f64 - lambda) * y - l)
}

/// Inverse-probability-weighted score without the outcome correction.
pub fn naive_ipw_score(y: f64, d: u8, t: u8, g: f64, p: f64, lambda: f64) -> f64 {
    (d as f64 - g) / (lambda * (1.0 - lambda) * p * (1.0 - g)) * ((t as f64 - lambda) * y)
}

fn with_intercept(x: &DesignMatrix) -> DesignMatrix {
    let (n, k) = (x.nrows(), x.ncols());
    let mut data = Vec::with_capacity(n * (k + 1));
    for i in 0..n {
        data.push(1.0);
        data.extend_from_slice(x.row(i));
    }
    let mut names = vec!["(intercept)".to_string()];
    names.extend(x.names().iter().cloned());
    DesignMatrix::new(n, k + 1, data, names, true).expect("finite design")
}

enum Target {
    Propensity,
    Regression,
}

/// Fits `learner` on (`x_train`, `y_train`) and predicts at `x_test`.
fn fit_predict(
    learner: &Learner,
    shape: Option<GridPoint>,
    target: Target,
    x_train: &DesignMatrix,
    y_train: &[f64],
    x_test: &DesignMatrix,
    seed: u64,
) -> Result<Vec<f64>> {
    match learner {
        Learner::Mean => {
            let m = y_train.iter().sum::<f64>() / y_train.len() as f64;
            Ok(vec![m; x_test.nrows()])
        }
        Learner::Linear => {
            let (xt, xs) = (with_intercept(x_train), with_intercept(x_test));
            match target {
                Target::Propensity => {
                    let fit = fit_logit(&xt, y_train, &LogitConfig::default())?;
                    Ok(predict_proba(&fit, &xs, EPS_CLIP))
                }
                Target::Regression => Ok(fit_ols(&xt, y_train)?.predict(&xs)),
            }
        }
        Learner::Forest { n_trees, .. } => {
            let shape = shape.expect("forest shape resolved before fitting");
            let cfg = ForestConfig {
                n_trees: *n_trees,
                max_depth: shape.max_depth,
                min_leaf: shape.min_leaf,
                seed,
                ..ForestConfig::default()
            };
            Ok(fit_forest(x_train, y_train, &cfg)?.predict(x_test))
        }
    }
}

/// Picks the forest shape once on the full sample.
fn resolve_shape(learner: &Learner, x: &DesignMatrix, y: &[f64], seed: u64) -> Result<Option<GridPoint>> {
    match learner {
        Learner::Forest {
            shape: Some(s), ..
        } => Ok(Some(*s)),
        Learner::Forest {
            shape: None,
            tune_grid,
            tune_folds,
            tune_trees,
            ..
        } => {
            let base = ForestConfig {
                n_trees: *tune_trees,
                ..ForestConfig::default()
            };
            Ok(Some(grid_tune(x, y, tune_grid, *tune_folds, &base, seed)?.best))
        }
        _ => Ok(None),
    }
}

/// Cross-fitted ATET from the orthogonal score.
///
/// Folds are stratified by the four (d, t) cells. In each fold the
/// propensity is fit on all training rows and the outcome nuisance on the
/// training rows with `d = 0`, with target `(t - λ̂) y`. `p̂` and `λ̂` are
/// full-sample shares.
pub fn dml_atet(sample: &DidSample, cfg: &DmlConfig) -> Result<AtetResult> {
    cfg.validate()?;
    let n = sample.len();
    if n < cfg.k_folds {
        return Err(Error::data(format!("{n} rows cannot fill {} folds", cfg.k_folds)));
    }
    let counts = sample.cell_counts();
    if counts.iter().any(|&c| c < MIN_CELL) {
        return Err(Error::data(format!(
            "every (d, t) cell needs at least {MIN_CELL} rows; counts {}",
            super::sample::describe(&counts)
        )));
    }
    let p = sample.d.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let lambda = sample.t.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let dvals: Vec<f64> = sample.d.iter().map(|&v| v as f64).collect();
    let ltarget: Vec<f64> = (0..n).map(|i| (sample.t[i] as f64 - lambda) * sample.y[i]).collect();

    let g_shape = resolve_shape(&cfg.g_learner, &sample.x, &dvals, derive_seed(cfg.seed, &[stream::TUNING, 0]))?;
    let controls: Vec<usize> = (0..n).filter(|&i| sample.d[i] == 0).collect();
    let l_shape = resolve_shape(
        &cfg.l_learner,
        &sample.x.select_rows(&controls),
        &controls.iter().map(|&i| ltarget[i]).collect::<Vec<_>>(),
        derive_seed(cfg.seed, &[stream::TUNING, 1]),
    )?;

    let folds = stratified_kfold(&sample.strata(), cfg.k_folds, derive_seed(cfg.seed, &[stream::FOLDS]))?;
    let mut g_hat = vec![f64::NAN; n];
    let mut l_hat = vec![f64::NAN; n];
    let mut diags = Vec::with_capacity(cfg.k_folds);
    for f in 0..cfg.k_folds {
        let (train, test) = (folds.train(f), folds.test(f));
        if test.is_empty() {
            continue;
        }
        let train0: Vec<usize> = train.iter().copied().filter(|&i| sample.d[i] == 0).collect();
        if train0.is_empty() {
            return Err(Error::estimation(format!("fold {f} has no d = 0 training rows")));
        }
        let x_test = sample.x.select_rows(&test);
        let g = fit_predict(
            &cfg.g_learner,
            g_shape,
            Target::Propensity,
            &sample.x.select_rows(&train),
            &train.iter().map(|&i| dvals[i]).collect::<Vec<_>>(),
            &x_test,
            derive_seed(cfg.seed, &[stream::DML_FOREST, f as u64, 0]),
        )?;
        let l = fit_predict(
            &cfg.l_learner,
            l_shape,
            Target::Regression,
            &sample.x.select_rows(&train0),
            &train0.iter().map(|&i| ltarget[i]).collect::<Vec<_>>(),
            &x_test,
            derive_seed(cfg.seed, &[stream::DML_FOREST, f as u64, 1]),
        )?;
        let mut trimmed = 0;
        for (j, &i) in test.iter().enumerate() {
            g_hat[i] = g[j];
            l_hat[i] = l[j];
            trimmed += (g[j] > 1.0 - cfg.trim) as usize;
        }
        diags.push(FoldDiagnostics {
            fold: f,
            n_train: train.len(),
            n_test: test.len(),
            n_trimmed: trimmed,
            g_min: g.iter().copied().fold(f64::INFINITY, f64::min),
            g_max: g.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }

    let scores: Vec<f64> = (0..n)
        .filter(|&i| g_hat[i] <= 1.0 - cfg.trim)
        .map(|i| orthogonal_score(sample.y[i], sample.d[i], sample.t[i], g_hat[i], l_hat[i], p, lambda))
        .collect();
    let kept = scores.len();
    if kept < 2 {
        return Err(Error::estimation("fewer than two rows survive trimming"));
    }
    let theta = scores.iter().sum::<f64>() / kept as f64;
    let score_mean = scores.iter().map(|a| a - theta).sum::<f64>() / kept as f64;
    let var = scores.iter().map(|a| (a - theta).powi(2)).sum::<f64>() / kept as f64;
    let se = (var / kept as f64).sqrt();
    Ok(AtetResult {
        theta,
        se,
        ci95: (theta - 1.96 * se, theta + 1.96 * se),
        n: kept,
        n_trimmed: n - kept,
        score_mean,
        p_hat: p,
        lambda_hat: lambda,
        tuned: g_shape.zip(l_shape),
        fold_diagnostics: diags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Orthogonal,
    NaiveIpw,
}

/// Nuisance values per row plus the marginal shares.
#[derive(Debug, Clone, PartialEq)]
pub struct Nuisances {
    pub g: Vec<f64>,
    pub l: Vec<f64>,
    pub p: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    pub kind: ScoreKind,
    /// `(ε, slope)` for each step size.
    pub slopes: Vec<(f64, f64)>,
    /// Slope at the smallest step.
    pub slope: f64,
    /// Standard deviation of the score at the unperturbed nuisances.
    pub score_sd: f64,
}

/// Central finite-difference slope of the mean score along
/// `(g + ε h_g, l + ε h_l)`.
pub fn orthogonality_check(
    sample: &DidSample,
    nuisances: &Nuisances,
    direction: (&[f64], &[f64]),
    eps_grid: &[f64],
    kind: ScoreKind,
) -> Result<OrthogonalityReport> {
    let n = sample.len();
    let (hg, hl) = direction;
    if nuisances.g.len() != n || nuisances.l.len() != n || hg.len() != n || hl.len() != n {
        return Err(Error::data("nuisance and direction vectors must match the sample"));
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|&e| e <= 0.0) {
        return Err(Error::config("finite-difference steps must be positive"));
    }
    let mean_score = |eps: f64| {
        (0..n)
            .map(|i| {
                let g = nuisances.g[i] + eps * hg[i];
                let (y, d, t) = (sample.y[i], sample.d[i], sample.t[i]);
                match kind {
                    ScoreKind::Orthogonal => {
                        orthogonal_score(y, d, t, g, nuisances.l[i] + eps * hl[i], nuisances.p, nuisances.lambda)
                    }
                    ScoreKind::NaiveIpw => naive_ipw_score(y, d, t, g, nuisances.p, nuisances.lambda),
                }
            })
            .sum::<f64>()
            / n as f64
    };
    let base: Vec<f64> = (0..n)
        .map(|i| {
            let (y, d, t, g) = (sample.y[i], sample.d[i], sample.t[i], nuisances.g[i]);
            match kind {
                ScoreKind::Orthogonal => orthogonal_score(y, d, t, g, nuisances.l[i], nuisances.p, nuisances.lambda),
                ScoreKind::NaiveIpw => naive_ipw_score(y, d, t, g, nuisances.p, nuisances.lambda),
            }
        })
        .collect();
    let m = base.iter().sum::<f64>() / n as f64;
    let score_sd = (base.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut slopes: Vec<(f64, f64)> = eps_grid
        .iter()
        .map(|&e| (e, (mean_score(e) - mean_score(-e)) / (2.0 * e)))
        .collect();
    slopes.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(OrthogonalityReport {
        kind,
        slope: slopes.last().unwrap().1,
        slopes,
        score_sd,
    })
}

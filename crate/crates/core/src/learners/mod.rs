//! Nuisance learners: logit, least squares, random forest, and fold utilities.

mod design;
mod folds;
mod forest;
mod logit;
mod ols;
mod tune;

pub use design::DesignMatrix;
pub use folds::{kfold_split, stratified_kfold, Folds};
pub use forest::{fit_forest, FeatureSubsample, ForestConfig, ForestFit, Node, Tree};
pub use logit::{
    fit_logit, log_likelihood, predict_proba, score, sigmoid, LogitConfig, LogitFit, EPS_CLIP,
};
pub use ols::{fit_ols, hc1_covariance, independent_columns, OlsFit};
pub use tune::{cv_mse, default_grid, grid_tune, GridPoint, TuneResult};

use serde::{Deserialize, Serialize};

use super::{fit_forest, kfold_split, DesignMatrix, ForestConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub max_depth: usize,
    pub min_leaf: usize,
}

/// Depth {3, 5, 8} by leaf size {5, 20, 50}.
pub fn default_grid() -> Vec<GridPoint> {
    let mut g = Vec::new();
    for max_depth in [3, 5, 8] {
        for min_leaf in [5, 20, 50] {
            g.push(GridPoint { max_depth, min_leaf });
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub best: GridPoint,
    /// Cross-validated MSE per grid point; infinite where a fold was too small.
    pub cv_mse: Vec<(GridPoint, f64)>,
}

/// K-fold cross-validated MSE of a forest with the given shape.
///
/// `base` supplies the tree count and bagging options; its depth and leaf
/// size are replaced by `point`. Folds and fold forests depend only on
/// `seed`, so all grid points see the same splits.
pub fn cv_mse(
    x: &DesignMatrix,
    y: &[f64],
    point: GridPoint,
    k_folds: usize,
    base: &ForestConfig,
    seed: u64,
) -> Result<f64> {
    let folds = kfold_split(x.nrows(), k_folds, derive_seed(seed, &[stream::TUNING]))?;
    let mut sse = 0.0;
    for f in 0..k_folds {
        let (train, test) = (folds.train(f), folds.test(f));
        if train.len() < 2 * point.min_leaf {
            return Ok(f64::INFINITY);
        }
        let cfg = ForestConfig {
            max_depth: point.max_depth,
            min_leaf: point.min_leaf,
            compute_oob: false,
            seed: derive_seed(seed, &[stream::TUNING, f as u64]),
            ..*base
        };
        let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let fit = fit_forest(&x.select_rows(&train), &ytr, &cfg)?;
        let pred = fit.predict(&x.select_rows(&test));
        sse += test
            .iter()
            .zip(&pred)
            .map(|(&i, p)| (y[i] - p).powi(2))
            .sum::<f64>();
    }
    Ok(sse / x.nrows() as f64)
}

/// Picks the grid point with the smallest CV MSE. Near-ties (relative 1e-12)
/// go to the smaller depth, then the larger leaf size.
pub fn grid_tune(
    x: &DesignMatrix,
    y: &[f64],
    grid: &[GridPoint],
    k_folds: usize,
    base: &ForestConfig,
    seed: u64,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::config("tuning grid is empty"));
    }
    let cv: Vec<(GridPoint, f64)> = grid
        .iter()
        .map(|&p| cv_mse(x, y, p, k_folds, base, seed).map(|m| (p, m)))
        .collect::<Result<_>>()?;
    let mut best = cv[0];
    for &(p, m) in &cv[1..] {
        let tol = 1e-12 * best.1.abs().max(m.abs());
        let simpler = p.max_depth < best.0.max_depth
            || (p.max_depth == best.0.max_depth && p.min_leaf > best.0.min_leaf);
        if m < best.1 - tol || ((m - best.1).abs() <= tol && simpler) {
            best = (p, m);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::config("no grid point is feasible for this sample size"));
    }
    Ok(TuneResult { best: best.0, cv_mse: cv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;

    fn linear_fixture() -> (DesignMatrix, Vec<f64>) {
        let mut rng = rng_from(12, &[]);
        let n = 300;
        let xv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = xv.iter().map(|v| 1.5 * v + rng.gen_range(-0.3..0.3)).collect();
        (DesignMatrix::from_columns(&[("x", &xv)], n).unwrap(), y)
    }

    fn small() -> ForestConfig {
        ForestConfig {
            n_trees: 20,
            ..ForestConfig::default()
        }
    }

    #[test]
    fn one_point_grid() {
        let (x, y) = linear_fixture();
        let p = GridPoint { max_depth: 2, min_leaf: 7 };
        assert_eq!(grid_tune(&x, &y, &[p], 3, &small(), 1).unwrap().best, p);
    }

    #[test]
    fn best_beats_independent_recomputation() {
        let (x, y) = linear_fixture();
        let grid = default_grid();
        let res = grid_tune(&x, &y, &grid, 3, &small(), 4).unwrap();
        let best = cv_mse(&x, &y, res.best, 3, &small(), 4).unwrap();
        for &p in &grid {
            assert!(best <= cv_mse(&x, &y, p, 3, &small(), 4).unwrap() + 1e-15);
        }
        assert_eq!(res, grid_tune(&x, &y, &grid, 3, &small(), 4).unwrap());
    }

    #[test]
    fn ties_prefer_simpler_model() {
        // Constant response: every grid point has zero CV error.
        let (x, _) = linear_fixture();
        let y = vec![1.0; x.nrows()];
        let res = grid_tune(&x, &y, &default_grid(), 3, &small(), 0).unwrap();
        assert_eq!(res.best, GridPoint { max_depth: 3, min_leaf: 50 });
    }

    #[test]
    fn empty_grid_rejected() {
        let (x, y) = linear_fixture();
        assert!(grid_tune(&x, &y, &[], 3, &small(), 0).is_err());
    }
}

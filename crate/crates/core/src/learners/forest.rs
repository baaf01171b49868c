//! Bagged regression trees.
//!
//! Features are discretized once per fit into at most 256 ordered bins: exact
//! when a feature has few distinct values, data quantiles otherwise. Splits
//! maximize the weighted variance reduction over bin boundaries and are stored
//! as raw thresholds, so prediction needs no binning.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DesignMatrix;
use crate::error::{Error, Result};
use crate::rng::{rng_from, stream};

const MAX_BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Minimum number of (bootstrap) training draws in every leaf.
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub compute_oob: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            max_depth: 5,
            min_leaf: 20,
            bootstrap: true,
            compute_oob: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FeatureSubsample {
    /// Every feature is a split candidate at every node.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Node {
    Leaf {
        value: f64,
        /// Training draws that reached the leaf.
        weight: u32,
    },
    Split {
        feature: u16,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, u32)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, weight } => Some((*value, *weight)),
            Node::Split { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(t, *left as usize).max(walk(t, *right as usize))
                }
            }
        }
        walk(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestFit {
    pub trees: Vec<Tree>,
    pub max_depth: usize,
    pub min_leaf_size: usize,
    pub feature_subsample_rule: FeatureSubsample,
    pub oob_error: Option<f64>,
}

impl ForestFit {
    pub fn predict(&self, x: &DesignMatrix) -> Vec<f64> {
        let nt = self.trees.len() as f64;
        (0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / nt
            })
            .collect()
    }
}

/// Per-feature split thresholds; a feature with `m` thresholds has `m + 1` bins.
struct Binned {
    thresholds: Vec<Vec<f64>>,
    /// Column-major bin codes.
    codes: Vec<Vec<u8>>,
}

fn bin_features(x: &DesignMatrix) -> Binned {
    let n = x.nrows();
    let mut thresholds = Vec::with_capacity(x.ncols());
    let mut codes = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let col = x.column(j);
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        let mut uniq = sorted.clone();
        uniq.dedup();
        let t: Vec<f64> = if uniq.len() <= MAX_BINS {
            uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        } else {
            let mut t: Vec<f64> = (1..MAX_BINS)
                .filter_map(|q| {
                    let pos = q * n / MAX_BINS;
                    (pos > 0 && sorted[pos - 1] < sorted[pos])
                        .then(|| 0.5 * (sorted[pos - 1] + sorted[pos]))
                })
                .collect();
            t.dedup();
            t
        };
        codes.push(
            col.iter()
                .map(|&v| t.partition_point(|&c| c < v) as u8)
                .collect(),
        );
        thresholds.push(t);
    }
    Binned { thresholds, codes }
}

struct Builder<'a> {
    binned: &'a Binned,
    y: &'a [f64],
    w: &'a [u32],
    max_depth: usize,
    min_leaf: f64,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, s: f64, wsum: f64) -> u32 {
        self.nodes.push(Node::Leaf {
            value: s / wsum,
            weight: wsum as u32,
        });
        (self.nodes.len() - 1) as u32
    }

    fn build(&mut self, rows: &mut [u32], depth: usize) -> u32 {
        let (mut wsum, mut s, mut s2) = (0.0, 0.0, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in rows.iter() {
            let (w, y) = (self.w[r as usize] as f64, self.y[r as usize]);
            wsum += w;
            s += w * y;
            s2 += w * y * y;
            lo = lo.min(y);
            hi = hi.max(y);
        }
        if depth >= self.max_depth || wsum < 2.0 * self.min_leaf || lo == hi {
            return self.leaf(s, wsum);
        }

        let parent = s * s / wsum;
        let min_gain = 1e-12 * s2.max(f64::MIN_POSITIVE);
        let mut best: Option<(usize, usize, f64)> = None;
        let mut hw = [0.0f64; MAX_BINS];
        let mut hs = [0.0f64; MAX_BINS];
        for (f, codes) in self.binned.codes.iter().enumerate() {
            let nb = self.binned.thresholds[f].len() + 1;
            if nb < 2 {
                continue;
            }
            hw[..nb].fill(0.0);
            hs[..nb].fill(0.0);
            for &r in rows.iter() {
                let b = codes[r as usize] as usize;
                let w = self.w[r as usize] as f64;
                hw[b] += w;
                hs[b] += w * self.y[r as usize];
            }
            let (mut wl, mut sl) = (0.0, 0.0);
            for b in 0..nb - 1 {
                wl += hw[b];
                sl += hs[b];
                let wr = wsum - wl;
                if wl < self.min_leaf {
                    continue;
                }
                if wr < self.min_leaf {
                    break;
                }
                let sr = s - sl;
                let gain = sl * sl / wl + sr * sr / wr - parent;
                if gain > min_gain && best.map_or(true, |(_, _, g)| gain > g) {
                    best = Some((f, b, gain));
                }
            }
        }
        let Some((f, b, _)) = best else {
            return self.leaf(s, wsum);
        };

        let codes = &self.binned.codes[f];
        let mut split = 0;
        for i in 0..rows.len() {
            if codes[rows[i] as usize] as usize <= b {
                rows.swap(i, split);
                split += 1;
            }
        }
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: 0.0,
            weight: 0,
        });
        let (l, r) = rows.split_at_mut(split);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[me] = Node::Split {
            feature: f as u16,
            threshold: self.binned.thresholds[f][b],
            left,
            right,
        };
        me as u32
    }
}

fn bootstrap_weights(n: usize, cfg: &ForestConfig, tree: usize) -> Vec<u32> {
    if !cfg.bootstrap {
        return vec![1; n];
    }
    let mut rng = rng_from(cfg.seed, &[stream::FOREST_TREE, tree as u64]);
    let mut w = vec![0u32; n];
    for _ in 0..n {
        w[rng.gen_range(0..n)] += 1;
    }
    w
}

pub fn fit_forest(x: &DesignMatrix, y: &[f64], cfg: &ForestConfig) -> Result<ForestFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::data("response length differs from design rows"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite response"));
    }
    if cfg.n_trees == 0 {
        return Err(Error::config("forest needs at least one tree"));
    }
    if cfg.min_leaf == 0 || n < 2 * cfg.min_leaf {
        return Err(Error::config(format!(
            "forest needs n >= 2 * min_leaf (n = {n}, min_leaf = {})",
            cfg.min_leaf
        )));
    }
    if x.ncols() > u16::MAX as usize {
        return Err(Error::config("too many features"));
    }
    let binned = bin_features(x);
    let trees: Vec<Tree> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let w = bootstrap_weights(n, cfg, t);
            let mut rows: Vec<u32> = (0..n as u32).filter(|&r| w[r as usize] > 0).collect();
            let mut b = Builder {
                binned: &binned,
                y,
                w: &w,
                max_depth: cfg.max_depth,
                min_leaf: cfg.min_leaf as f64,
                nodes: Vec::new(),
            };
            b.build(&mut rows, 0);
            Tree { nodes: b.nodes }
        })
        .collect();

    let oob_error = (cfg.compute_oob && cfg.bootstrap).then(|| {
        let mut sum = vec![0.0; n];
        let mut cnt = vec![0u32; n];
        for (t, tree) in trees.iter().enumerate() {
            let w = bootstrap_weights(n, cfg, t);
            for i in (0..n).filter(|&i| w[i] == 0) {
                sum[i] += tree.predict_row(x.row(i));
                cnt[i] += 1;
            }
        }
        let (mut se, mut m) = (0.0, 0usize);
        for i in (0..n).filter(|&i| cnt[i] > 0) {
            se += (sum[i] / cnt[i] as f64 - y[i]).powi(2);
            m += 1;
        }
        if m > 0 {
            se / m as f64
        } else {
            f64::NAN
        }
    });

    Ok(ForestFit {
        trees,
        max_depth: cfg.max_depth,
        min_leaf_size: cfg.min_leaf,
        feature_subsample_rule: FeatureSubsample::All,
        oob_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg(n_trees: usize, max_depth: usize, min_leaf: usize) -> ForestConfig {
        ForestConfig {
            n_trees,
            max_depth,
            min_leaf,
            ..ForestConfig::default()
        }
    }

    #[test]
    fn constant_target_single_leaf() {
        let xv: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let x = DesignMatrix::from_columns(&[("x", &xv)], 50).unwrap();
        let f = fit_forest(&x, &[2.5; 50], &cfg(20, 5, 2)).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
        assert!(f.predict(&x).iter().all(|&p| p == 2.5));
    }

    #[test]
    fn single_stump_matches_group_means() {
        let xv: Vec<f64> = (0..40).map(|i| f64::from(i % 2 == 0)).collect();
        let y: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 3.0 + (i % 3) as f64 } else { -1.0 + (i % 5) as f64 }).collect();
        let x = DesignMatrix::from_columns(&[("d", &xv)], 40).unwrap();
        let c = ForestConfig {
            bootstrap: false,
            ..cfg(1, 1, 1)
        };
        let f = fit_forest(&x, &y, &c).unwrap();
        let mean = |flag: f64| {
            let v: Vec<f64> = (0..40).filter(|&i| xv[i] == flag).map(|i| y[i]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let p = f.predict(&x);
        for i in 0..40 {
            assert!((p[i] - mean(xv[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn learns_a_step() {
        let mut rng = rng_from(8, &[]);
        let n = 2000;
        let xv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = xv.iter().map(|&v| f64::from(v > 0.0)).collect();
        let x = DesignMatrix::from_columns(&[("x", &xv)], n).unwrap();
        let f = fit_forest(&x, &y, &cfg(100, 3, 5)).unwrap();
        let p = f.predict(&x);
        let mse = p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
        assert!(mse < 0.05, "mse {mse}");
    }

    #[test]
    fn oob_error_reported() {
        let mut rng = rng_from(9, &[]);
        let xv: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = xv.iter().map(|v| 2.0 * v).collect();
        let x = DesignMatrix::from_columns(&[("x", &xv)], 300).unwrap();
        let f = fit_forest(&x, &y, &ForestConfig { compute_oob: true, ..cfg(50, 5, 5) }).unwrap();
        let oob = f.oob_error.unwrap();
        assert!(oob > 0.0 && oob < 0.1, "oob {oob}");
    }

    #[test]
    fn quantile_bins_for_many_values() {
        let xv: Vec<f64> = (0..1000).map(|i| (i as f64).sqrt()).collect();
        let x = DesignMatrix::from_columns(&[("x", &xv)], 1000).unwrap();
        let b = bin_features(&x);
        assert!(b.thresholds[0].len() < MAX_BINS);
        assert!(b.codes[0].windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_too_few_rows() {
        let x = DesignMatrix::from_columns(&[("x", &[1.0, 2.0, 3.0])], 3).unwrap();
        assert!(fit_forest(&x, &[1.0, 2.0, 3.0], &cfg(1, 2, 2)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn leaves_predictions_and_determinism(
            seed in any::<u64>(),
            depth in 1usize..6,
            min_leaf in 1usize..15,
        ) {
            let mut rng = rng_from(seed, &[]);
            let n = 120;
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..4))).collect();
            let y: Vec<f64> = (0..n).map(|i| a[i].sin() + b[i] + rng.gen_range(-0.5..0.5)).collect();
            let x = DesignMatrix::from_columns(&[("a", &a), ("b", &b)], n).unwrap();
            let c = ForestConfig { seed, ..cfg(10, depth, min_leaf) };
            let f = fit_forest(&x, &y, &c).unwrap();
            for t in &f.trees {
                prop_assert!(t.depth() <= depth);
                for (_, w) in t.leaves() {
                    prop_assert!(w as usize >= min_leaf);
                }
            }
            let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let p = f.predict(&x);
            prop_assert!(p.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
            prop_assert_eq!(f, fit_forest(&x, &y, &c).unwrap());
        }
    }
}

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{rng_from, stream};

/// Fold assignment for `n` indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Folds {
    k: usize,
    assignment: Vec<usize>,
}

impl Folds {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Held-out indices of fold `f`, ascending.
    pub fn test(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == f)
            .collect()
    }

    /// Training indices for fold `f`, ascending.
    pub fn train(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != f)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.assignment {
            s[f] += 1;
        }
        s
    }
}

fn check(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::config(format!("{n} observations cannot fill {k} folds")));
    }
    Ok(())
}

/// Random partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Folds> {
    check(n, k)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from(seed, &[stream::FOLDS]));
    let mut assignment = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(Folds { k, assignment })
}

/// Like [`kfold_split`], but every stratum is spread as evenly as possible
/// over the folds. Overall fold sizes still differ by at most one.
pub fn stratified_kfold(strata: &[u32], k: usize, seed: u64) -> Result<Folds> {
    let n = strata.len();
    check(n, k)?;
    let mut rng = rng_from(seed, &[stream::FOLDS]);
    let mut labels: Vec<u32> = strata.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let mut assignment = vec![0; n];
    let mut next = 0usize;
    for s in labels {
        let mut members: Vec<usize> = (0..n).filter(|&i| strata[i] == s).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok(Folds { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    #[test]
    fn ten_into_five() {
        let f = kfold_split(10, 5, 1).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(kfold_split(3, 1, 0).is_err());
        assert!(kfold_split(3, 4, 0).is_err());
    }

    #[test]
    fn permutations_uniform() {
        // n = K = 3: each split is a permutation of three fold labels.
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let reps = 1000;
        for seed in 0..reps {
            let f = kfold_split(3, 3, seed).unwrap();
            *counts.entry(f.assignment().to_vec()).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = reps as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99.9% quantile of chi-square with 5 degrees of freedom.
        assert!(chi2 < 20.52, "chi2 = {chi2}");
    }

    #[test]
    fn stratified_balances_each_stratum() {
        let strata: Vec<u32> = (0..103).map(|i| (i % 4) as u32).collect();
        let f = stratified_kfold(&strata, 5, 3).unwrap();
        let s = f.sizes();
        assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
        for label in 0..4 {
            let mut per = vec![0; 5];
            for (i, &st) in strata.iter().enumerate() {
                if st == label {
                    per[f.assignment()[i]] += 1;
                }
            }
            assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
    }

    proptest! {
        #[test]
        fn partition_properties(n in 2usize..300, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let f = kfold_split(n, k, seed).unwrap();
            let s = f.sizes();
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
            let mut all: Vec<usize> = (0..k).flat_map(|j| f.test(j)).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(f, kfold_split(n, k, seed).unwrap());
        }
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assignment of rows to `L` folds whose sizes differ by at most one.
///
/// Rows are shuffled with a seeded generator and then cut into contiguous
/// blocks, so the plan is a pure function of `(n, L, seed)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    folds: usize,
    seed: u64,
    assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn new(n: usize, folds: usize, seed: u64) -> Result<Self> {
        if folds == 0 {
            return Err(Error::Config("folds must be at least 1".into()));
        }
        if n < 2 * folds {
            return Err(Error::Config(format!("{n} rows are too few for {folds} folds (need at least {})", 2 * folds)));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (base, extra) = (n / folds, n % folds);
        let mut assignment = vec![0; n];
        let mut pos = 0;
        for fold in 0..folds {
            let size = base + usize::from(fold < extra);
            for &row in &order[pos..pos + size] {
                assignment[row] = fold;
            }
            pos += size;
        }
        Ok(Self {
            folds,
            seed,
            assignment,
        })
    }

    /// Plan from an explicit assignment; fold sizes must differ by at most
    /// one and every fold must be non-empty.
    pub fn from_assignment(assignment: Vec<usize>, folds: usize, seed: u64) -> Result<Self> {
        let plan = Self {
            folds,
            seed,
            assignment,
        };
        if let Some(&bad) = plan.assignment.iter().find(|&&f| f >= folds) {
            return Err(Error::Config(format!("fold id {bad} out of range for {folds} folds")));
        }
        let sizes = plan.sizes();
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyFold { fold: empty });
        }
        let (lo, hi) = (sizes.iter().min().copied(), sizes.iter().max().copied());
        if let (Some(lo), Some(hi)) = (lo, hi) {
            if hi - lo > 1 {
                return Err(Error::Config(format!("fold sizes range from {lo} to {hi}")));
            }
        }
        Ok(plan)
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of rows covered.
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    #[inline]
    pub fn fold_of(&self, row: usize) -> usize {
        self.assignment[row]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// Rows in fold `fold`, ascending.
    pub fn indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    /// Rows outside fold `fold`, ascending.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    /// The plan for data whose row `i` is original row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            folds: self.folds,
            seed: self.seed,
            assignment: perm.iter().map(|&p| self.assignment[p]).collect(),
        }
    }
}

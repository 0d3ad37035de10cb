use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{self, Target, Tree, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    #[serde(with = "super::limit::depth")]
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` examines every feature at each split.
    #[serde(with = "super::limit::features")]
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    /// 300 trees, ⌈√21⌉ = 5 features per split, leaves of at least 2.
    fn default() -> Self {
        Self {
            n_trees: 300,
            max_depth: None,
            min_samples_leaf: 2,
            max_features: Some(5),
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_trees: usize,
    #[serde(with = "super::limit::depth")]
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    #[serde(with = "super::limit::features")]
    pub max_features: Option<usize>,
    pub oob_available: bool,
    pub seed: u64,
}

impl ForestModel {
    /// Wraps pre-built trees (no training metadata).
    pub fn from_trees(trees: Vec<Tree>) -> Self {
        Self {
            n_trees: trees.len(),
            trees,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
            oob_available: false,
            seed: 0,
        }
    }

    /// Mean of per-tree leaf probabilities.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }
}

pub(super) fn fit_single_tree(rows: &[&[f64]], labels: &[u8], params: TreeParams, seed: u64) -> Tree {
    let mut sample: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tree::fit(rows, Target::Class(labels), &mut sample, params, &mut rng)
}

/// Tree `i` is seeded with `seed + i`, so the result does not depend on how
/// trees are scheduled.
pub(super) fn fit(rows: &[&[f64]], labels: &[u8], p: &ForestParams, seed: u64) -> ForestModel {
    let params = TreeParams {
        max_depth: p.max_depth,
        min_samples_leaf: p.min_samples_leaf,
        max_features: p.max_features,
    };
    let n = rows.len();
    let trees = crate::par::map_indexed(p.n_trees, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let mut sample: Vec<usize> = if p.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        tree::fit(rows, Target::Class(labels), &mut sample, params, &mut rng)
    });
    ForestModel {
        trees,
        n_trees: p.n_trees,
        max_depth: p.max_depth,
        min_samples_leaf: p.min_samples_leaf,
        max_features: p.max_features,
        oob_available: p.bootstrap,
        seed,
    }
}

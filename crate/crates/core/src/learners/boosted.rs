use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sigmoid;
use super::tree::{self, Target, Tree, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for BoostedParams {
    fn default() -> Self {
        Self {
            n_rounds: 200,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 5,
        }
    }
}

/// Log-loss gradient boosting over regression trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub n_rounds: usize,
    /// Log-odds of the training prevalence.
    pub base_score: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl BoostedModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

pub(super) fn fit(rows: &[&[f64]], labels: &[u8], p: &BoostedParams, seed: u64) -> BoostedModel {
    let n = rows.len();
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let prior = (pos / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_score = libm::log(prior / (1.0 - prior));
    let params = TreeParams {
        max_depth: Some(p.max_depth),
        min_samples_leaf: p.min_samples_leaf,
        max_features: None,
    };
    let mut margin = alloc::vec![base_score; n];
    let mut grad = alloc::vec![0.0; n];
    let mut hess = alloc::vec![0.0; n];
    let mut trees = Vec::with_capacity(p.n_rounds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..p.n_rounds {
        for i in 0..n {
            let prob = sigmoid(margin[i]);
            grad[i] = f64::from(labels[i]) - prob;
            hess[i] = prob * (1.0 - prob);
        }
        let mut sample: Vec<usize> = (0..n).collect();
        let t = tree::fit(
            rows,
            Target::Gradient {
                grad: &grad,
                hess: &hess,
                labels,
            },
            &mut sample,
            params,
            &mut rng,
        );
        for (i, m) in margin.iter_mut().enumerate() {
            *m += p.learning_rate * t.predict(rows[i]);
        }
        trees.push(t);
    }
    BoostedModel {
        trees,
        learning_rate: p.learning_rate,
        n_rounds: p.n_rounds,
        base_score,
        max_depth: p.max_depth,
        min_samples_leaf: p.min_samples_leaf,
    }
}

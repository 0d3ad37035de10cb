//! Candidate classifiers and their training entry point.

mod boosted;
mod forest;
mod grid;
pub(crate) mod limit;
mod logistic;
pub mod tree;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use boosted::{BoostedModel, BoostedParams};
pub use forest::{ForestModel, ForestParams};
pub use grid::{grid_search, CellResult, GridResult, GridSpec, HyperGrid, SelectionMetric};
pub use logistic::{LogisticFit, LogisticModel, LogisticParams};
pub use tree::{Node, Tree, TreeParams};

use crate::data::{is_missing, Dataset};
use crate::error::{Error, Result};

/// Anything that maps a scaled record to a probability of CKD.
pub trait Classifier: Sync {
    fn predict_proba(&self, x: &[f64]) -> f64;

    /// Trees whose leaf values average to the prediction, when the model is
    /// such an ensemble. Enables exact path-based attribution.
    fn averaged_trees(&self) -> Option<&[Tree]> {
        None
    }
}

impl<F> Classifier for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn predict_proba(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Logistic,
    Tree,
    Forest,
    Boosted,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 4] = [
        LearnerKind::Logistic,
        LearnerKind::Tree,
        LearnerKind::Forest,
        LearnerKind::Boosted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Logistic => "logistic",
            LearnerKind::Tree => "tree",
            LearnerKind::Forest => "forest",
            LearnerKind::Boosted => "boosted",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub tree: Tree,
    pub params: TreeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Logistic(LogisticModel),
    Tree(TreeModel),
    Forest(ForestModel),
    Boosted(BoostedModel),
}

impl Model {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Model::Logistic(_) => LearnerKind::Logistic,
            Model::Tree(_) => LearnerKind::Tree,
            Model::Forest(_) => LearnerKind::Forest,
            Model::Boosted(_) => LearnerKind::Boosted,
        }
    }

    /// Parameter/node count used to break grid-search ties toward smaller
    /// models.
    pub fn size(&self) -> usize {
        match self {
            Model::Logistic(m) => m.weights.len() + 1,
            Model::Tree(m) => m.tree.n_nodes(),
            Model::Forest(m) => m.trees.iter().map(Tree::n_nodes).sum(),
            Model::Boosted(m) => m.trees.iter().map(Tree::n_nodes).sum(),
        }
    }

    pub fn n_features(&self) -> Option<usize> {
        match self {
            Model::Logistic(m) => Some(m.weights.len()),
            _ => None,
        }
    }

    /// Validated prediction: rejects missing or non-finite values.
    pub fn predict_checked(&self, x: &[f64], n_features: usize) -> Result<f64> {
        if x.len() != n_features {
            return Err(Error::SchemaMismatch(format!(
                "record has {} values, model expects {n_features}",
                x.len()
            )));
        }
        if let Some(i) = x.iter().position(|v| is_missing(*v) || !v.is_finite()) {
            return Err(Error::MissingValue {
                record: 0,
                feature: format!("#{i}"),
            });
        }
        Ok(self.predict_proba(x))
    }
}

impl Classifier for Model {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            Model::Logistic(m) => m.predict_proba(x),
            Model::Tree(m) => m.tree.predict(x),
            Model::Forest(m) => m.predict_proba(x),
            Model::Boosted(m) => m.predict_proba(x),
        }
    }

    fn averaged_trees(&self) -> Option<&[Tree]> {
        match self {
            Model::Tree(m) => Some(core::slice::from_ref(&m.tree)),
            Model::Forest(m) => Some(&m.trees),
            _ => None,
        }
    }
}

impl Classifier for ForestModel {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        ForestModel::predict_proba(self, x)
    }

    fn averaged_trees(&self) -> Option<&[Tree]> {
        Some(&self.trees)
    }
}

impl Classifier for Tree {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        self.predict(x)
    }

    fn averaged_trees(&self) -> Option<&[Tree]> {
        Some(core::slice::from_ref(self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparams {
    Logistic(LogisticParams),
    Tree(TreeParams),
    Forest(ForestParams),
    Boosted(BoostedParams),
}

impl Hyperparams {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Hyperparams::Logistic(_) => LearnerKind::Logistic,
            Hyperparams::Tree(_) => LearnerKind::Tree,
            Hyperparams::Forest(_) => LearnerKind::Forest,
            Hyperparams::Boosted(_) => LearnerKind::Boosted,
        }
    }

    pub fn min_samples_leaf(&self) -> usize {
        match self {
            Hyperparams::Logistic(_) => 1,
            Hyperparams::Tree(p) => p.min_samples_leaf,
            Hyperparams::Forest(p) => p.min_samples_leaf,
            Hyperparams::Boosted(p) => p.min_samples_leaf,
        }
    }

    /// Compact `key=value` description for reports.
    pub fn describe(&self) -> String {
        fn depth(d: Option<usize>) -> String {
            d.map_or_else(|| "none".into(), |d| format!("{d}"))
        }
        match self {
            Hyperparams::Logistic(p) => format!("l2={}", p.l2_penalty),
            Hyperparams::Tree(p) => format!(
                "max_depth={} min_samples_leaf={}",
                depth(p.max_depth),
                p.min_samples_leaf
            ),
            Hyperparams::Forest(p) => format!(
                "n_trees={} max_depth={} min_samples_leaf={} max_features={} bootstrap={}",
                p.n_trees,
                depth(p.max_depth),
                p.min_samples_leaf,
                p.max_features.map_or_else(|| "all".into(), |m| format!("{m}")),
                p.bootstrap
            ),
            Hyperparams::Boosted(p) => format!(
                "n_rounds={} learning_rate={} max_depth={} min_samples_leaf={}",
                p.n_rounds, p.learning_rate, p.max_depth, p.min_samples_leaf
            ),
        }
    }
}

/// Training-set problems that are tolerated but worth reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainWarning {
    SingleClass,
}

/// Validates a training set; errors on empty or non-finite input and warns
/// on a single-class set.
pub fn check_training_set(train: &Dataset) -> Result<Vec<TrainWarning>> {
    if train.is_empty() {
        return Err(Error::Empty { module: "learners" });
    }
    train.ensure_complete()?;
    train.labels()?;
    let c = train.class_counts();
    Ok(if c[0] == 0 || c[1] == 0 {
        alloc::vec![TrainWarning::SingleClass]
    } else {
        Vec::new()
    })
}

/// Fits the learner described by `params`. Deterministic for a fixed seed.
pub fn train(params: &Hyperparams, train: &Dataset, seed: u64) -> Result<Model> {
    check_training_set(train)?;
    let rows = train.rows();
    let labels: Vec<u8> = train
        .labels()?
        .into_iter()
        .map(|c| u8::from(c.is_positive()))
        .collect();
    Ok(match params {
        Hyperparams::Logistic(p) => Model::Logistic(logistic::fit(&rows, &labels, p).model),
        Hyperparams::Tree(p) => Model::Tree(TreeModel {
            tree: forest::fit_single_tree(&rows, &labels, *p, seed),
            params: *p,
        }),
        Hyperparams::Forest(p) => Model::Forest(forest::fit(&rows, &labels, p, seed)),
        Hyperparams::Boosted(p) => Model::Boosted(boosted::fit(&rows, &labels, p, seed)),
    })
}

/// Logistic regression with its per-iteration loss trace.
pub fn train_logistic_traced(params: &LogisticParams, train: &Dataset) -> Result<LogisticFit> {
    check_training_set(train)?;
    let rows = train.rows();
    let labels: Vec<u8> = train
        .labels()?
        .into_iter()
        .map(|c| u8::from(c.is_positive()))
        .collect();
    Ok(logistic::fit(&rows, &labels, params))
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

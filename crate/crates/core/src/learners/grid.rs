//! Cross-validated hyperparameter search with SMOTE-NC applied inside each
//! fold's training portion.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{
    train, BoostedParams, ForestParams, Hyperparams, LearnerKind, LogisticParams, TreeParams,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{choose_threshold, EvalMetrics, ThresholdPolicy};
use crate::resample::{smote_nc, ResampleConfig};
use crate::schema::Class;
use crate::stats::mix_seed;
use crate::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    Sensitivity,
    Rocauc,
}

/// Candidate values per hyperparameter; cells are the cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    Logistic {
        l2_penalty: Vec<f64>,
    },
    Tree {
        #[serde(with = "super::limit::depth_vec")]
        max_depth: Vec<Option<usize>>,
        min_samples_leaf: Vec<usize>,
    },
    Forest {
        n_trees: Vec<usize>,
        #[serde(with = "super::limit::depth_vec")]
        max_depth: Vec<Option<usize>>,
        min_samples_leaf: Vec<usize>,
        #[serde(with = "super::limit::features_vec")]
        max_features: Vec<Option<usize>>,
    },
    Boosted {
        n_rounds: Vec<usize>,
        learning_rate: Vec<f64>,
        max_depth: Vec<usize>,
        min_samples_leaf: Vec<usize>,
    },
}

impl GridSpec {
    /// Grids centred on each learner's defaults.
    pub fn default_for(kind: LearnerKind) -> Self {
        match kind {
            LearnerKind::Logistic => GridSpec::Logistic {
                l2_penalty: vec![1e-4, 1e-2, 1.0],
            },
            LearnerKind::Tree => GridSpec::Tree {
                max_depth: vec![Some(3), Some(5), None],
                min_samples_leaf: vec![2, 5],
            },
            LearnerKind::Forest => GridSpec::Forest {
                n_trees: vec![300],
                max_depth: vec![None],
                min_samples_leaf: vec![2, 5],
                max_features: vec![Some(3), Some(5), Some(8)],
            },
            LearnerKind::Boosted => GridSpec::Boosted {
                n_rounds: vec![100, 200],
                learning_rate: vec![0.1],
                max_depth: vec![2, 3],
                min_samples_leaf: vec![5],
            },
        }
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            GridSpec::Logistic { .. } => LearnerKind::Logistic,
            GridSpec::Tree { .. } => LearnerKind::Tree,
            GridSpec::Forest { .. } => LearnerKind::Forest,
            GridSpec::Boosted { .. } => LearnerKind::Boosted,
        }
    }

    /// Cartesian product in declaration order, last list varying fastest.
    pub fn cells(&self) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        match self {
            GridSpec::Logistic { l2_penalty } => {
                for &l2 in l2_penalty {
                    out.push(Hyperparams::Logistic(LogisticParams {
                        l2_penalty: l2,
                        ..LogisticParams::default()
                    }));
                }
            }
            GridSpec::Tree {
                max_depth,
                min_samples_leaf,
            } => {
                for &d in max_depth {
                    for &m in min_samples_leaf {
                        out.push(Hyperparams::Tree(TreeParams {
                            max_depth: d,
                            min_samples_leaf: m,
                            max_features: None,
                        }));
                    }
                }
            }
            GridSpec::Forest {
                n_trees,
                max_depth,
                min_samples_leaf,
                max_features,
            } => {
                for &n in n_trees {
                    for &d in max_depth {
                        for &m in min_samples_leaf {
                            for &f in max_features {
                                out.push(Hyperparams::Forest(ForestParams {
                                    n_trees: n,
                                    max_depth: d,
                                    min_samples_leaf: m,
                                    max_features: f,
                                    bootstrap: true,
                                }));
                            }
                        }
                    }
                }
            }
            GridSpec::Boosted {
                n_rounds,
                learning_rate,
                max_depth,
                min_samples_leaf,
            } => {
                for &n in n_rounds {
                    for &lr in learning_rate {
                        for &d in max_depth {
                            for &m in min_samples_leaf {
                                out.push(Hyperparams::Boosted(BoostedParams {
                                    n_rounds: n,
                                    learning_rate: lr,
                                    max_depth: d,
                                    min_samples_leaf: m,
                                }));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub spec: GridSpec,
    pub cv_folds: usize,
    pub selection_metric: SelectionMetric,
    /// Threshold applied to the pooled out-of-fold scores of each cell.
    pub threshold_policy: ThresholdPolicy,
    /// `None` disables in-fold resampling.
    pub smote: Option<ResampleConfig>,
}

impl HyperGrid {
    pub fn default_for(kind: LearnerKind) -> Self {
        Self {
            spec: GridSpec::default_for(kind),
            cv_folds: 5,
            selection_metric: SelectionMetric::Sensitivity,
            threshold_policy: ThresholdPolicy::default(),
            smote: Some(ResampleConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub params: Hyperparams,
    /// Metrics over the pooled out-of-fold scores at the policy threshold.
    pub metrics: EvalMetrics,
    pub floor_unattainable: bool,
    /// Mean parameter/node count of the fold models.
    pub mean_model_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub kind: LearnerKind,
    pub cells: Vec<CellResult>,
    pub best: usize,
}

impl GridResult {
    pub fn best_cell(&self) -> &CellResult {
        &self.cells[self.best]
    }
}

/// Index of the winning cell: highest metric, then higher ROC-AUC, then
/// smaller model, then first.
pub fn pick_best(cells: &[CellResult], metric: SelectionMetric) -> Option<usize> {
    let primary = |c: &CellResult| match metric {
        SelectionMetric::Sensitivity => c.metrics.sensitivity,
        SelectionMetric::Rocauc => c.metrics.rocauc,
    };
    let cmp = |a: &CellResult, b: &CellResult| {
        primary(a)
            .total_cmp(&primary(b))
            .then(a.metrics.rocauc.total_cmp(&b.metrics.rocauc))
            .then(b.mean_model_size.total_cmp(&a.mean_model_size))
    };
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if best.is_none_or(|b| cmp(c, &cells[b]) == Ordering::Greater) {
            best = Some(i);
        }
    }
    best
}

/// Runs stratified k-fold CV over every cell of `grid`. Validation folds are
/// drawn from `train` before resampling, so they only ever hold original
/// records; this is re-checked per fold.
pub fn grid_search(grid: &HyperGrid, train_set: &Dataset, seed: u64) -> Result<GridResult> {
    if grid.cv_folds < 2 {
        return Err(crate::error::invalid("learners", "grid search needs at least 2 folds"));
    }
    let cells = grid.spec.cells();
    if cells.is_empty() {
        return Err(crate::error::invalid("learners", "hyperparameter grid is empty"));
    }
    let folds = crate::data::stratified_folds(train_set, grid.cv_folds, seed)?;
    let labels = train_set.labels()?;

    let mut fold_sets = Vec::with_capacity(folds.len());
    for (f, val) in folds.iter().enumerate() {
        if let Some(&r) = val.iter().find(|&&i| train_set.records[i].synthetic) {
            return Err(Error::SyntheticInValidation { fold: f, record: r });
        }
        let mut in_val = vec![false; train_set.len()];
        for &i in val {
            in_val[i] = true;
        }
        let fit_idx: Vec<usize> = (0..train_set.len()).filter(|&i| !in_val[i]).collect();
        let mut fit = train_set.subset(&fit_idx);
        if let Some(cfg) = &grid.smote {
            let cfg = ResampleConfig {
                seed: mix_seed(cfg.seed, f as u64),
                ..cfg.clone()
            };
            fit = smote_nc(&fit, &cfg).map_err(|e| Error::GridCell {
                cell: 0,
                reason: format!("fold {f}: {e}"),
            })?;
        }
        fold_sets.push(fit);
    }

    for (c, params) in cells.iter().enumerate() {
        let need = 2 * params.min_samples_leaf();
        if let Some(fit) = fold_sets.iter().find(|d| d.len() < need) {
            return Err(Error::GridCell {
                cell: c,
                reason: format!(
                    "min_samples_leaf={} cannot split a fold of {} records",
                    params.min_samples_leaf(),
                    fit.len()
                ),
            });
        }
    }

    let n_folds = folds.len();
    let jobs = crate::par::map_indexed(cells.len() * n_folds, |j| {
        let (c, f) = (j / n_folds, j % n_folds);
        let model = train(&cells[c], &fold_sets[f], mix_seed(seed, f as u64))?;
        let scores: Vec<f64> = folds[f]
            .iter()
            .map(|&i| model.predict_proba(&train_set.records[i].values))
            .collect();
        Ok::<_, Error>((scores, model.size()))
    });
    let mut jobs = jobs.into_iter();

    let mut results = Vec::with_capacity(cells.len());
    for (c, params) in cells.into_iter().enumerate() {
        let mut scores = Vec::with_capacity(train_set.len());
        let mut ys: Vec<Class> = Vec::with_capacity(train_set.len());
        let mut size = 0usize;
        for fold in &folds {
            let (s, sz) = jobs
                .next()
                .expect("one job per cell and fold")
                .map_err(|e| Error::GridCell {
                    cell: c,
                    reason: format!("{e}"),
                })?;
            size += sz;
            scores.extend(s);
            ys.extend(fold.iter().map(|&i| labels[i]));
        }
        let choice = choose_threshold(&scores, &ys, grid.threshold_policy)?;
        results.push(CellResult {
            params,
            metrics: EvalMetrics::compute(&scores, &ys, choice.threshold)?,
            floor_unattainable: choice.floor_unattainable,
            mean_model_size: size as f64 / n_folds as f64,
        });
    }
    let best = pick_best(&results, grid.selection_metric).expect("grid is non-empty");
    Ok(GridResult {
        kind: grid.spec.kind(),
        cells: results,
        best,
    })
}

//! End-to-end training: impute, split, scale, search, select, refit, test.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{
    apply_scaler, ckd_imputation_rules, fit_scaler, impute_with_rules, split_stratified, Dataset, ImputationRule,
    ScalerParams,
};
use crate::error::{invalid, Result};
use crate::evaluation::{select_model, EvalMetrics, Selection, ThresholdPolicy};
use crate::learners::{grid_search, GridResult, GridSpec, Hyperparams, HyperGrid, LearnerKind, SelectionMetric};
use crate::resample::{smote_nc, ResampleConfig};
use crate::Classifier;
use crate::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub test_fraction: f64,
    pub imputation: Vec<ImputationRule>,
    /// One grid per competing learner family.
    pub grids: Vec<GridSpec>,
    pub cv_folds: usize,
    pub selection_metric: SelectionMetric,
    pub threshold_policy: ThresholdPolicy,
    /// `None` trains on the imbalanced partition as is.
    pub smote: Option<ResampleConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            test_fraction: 0.2,
            imputation: ckd_imputation_rules(),
            grids: LearnerKind::ALL.iter().map(|&k| GridSpec::default_for(k)).collect(),
            cv_folds: 5,
            selection_metric: SelectionMetric::Sensitivity,
            threshold_policy: ThresholdPolicy::default(),
            smote: Some(ResampleConfig::default()),
        }
    }
}

impl PipelineConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let Some(s) = &mut self.smote {
            s.seed = seed;
        }
        self
    }

    fn hyper_grid(&self, spec: &GridSpec) -> HyperGrid {
        HyperGrid {
            spec: spec.clone(),
            cv_folds: self.cv_folds,
            selection_metric: self.selection_metric,
            threshold_policy: self.threshold_policy,
            smote: self.smote.clone(),
        }
    }
}

/// Test-partition result of one family's best cell, refit on the full
/// training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub kind: LearnerKind,
    pub params: Hyperparams,
    pub cv_metrics: EvalMetrics,
    pub test_metrics: EvalMetrics,
    pub floor_unattainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    /// [no CKD, CKD].
    pub train: [usize; 2],
    pub test: [usize; 2],
    /// Training partition after resampling.
    pub train_resampled: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub champion: Model,
    pub champion_params: Hyperparams,
    /// Operating threshold, chosen on pooled out-of-fold scores.
    pub threshold: f64,
    pub selection: Selection,
    pub grids: Vec<GridResult>,
    pub families: Vec<FamilyResult>,
    pub test_metrics: EvalMetrics,
    pub scaler: ScalerParams,
    /// Scaled, imputed, not resampled.
    pub train: Dataset,
    pub test: Dataset,
    /// The same partitions in raw units.
    pub train_raw: Dataset,
    pub test_raw: Dataset,
    pub counts: SplitCounts,
}

impl TrainOutcome {
    pub fn champion_family(&self) -> &FamilyResult {
        &self.families[self.selection.index]
    }
}

fn refit(params: &Hyperparams, train: &Dataset, cfg: &PipelineConfig) -> Result<(Model, Dataset)> {
    let fit = match &cfg.smote {
        Some(s) => smote_nc(train, s)?,
        None => train.clone(),
    };
    Ok((crate::learners::train(params, &fit, cfg.seed)?, fit))
}

/// Runs the full training pipeline on a raw labeled dataset.
///
/// The champion family is chosen on cross-validation metrics; the test
/// partition is touched only for the final report.
pub fn run_training(raw: &Dataset, cfg: &PipelineConfig) -> Result<TrainOutcome> {
    if cfg.grids.is_empty() {
        return Err(invalid("pipeline", "no learner grids configured"));
    }
    let imputed = impute_with_rules(raw, &cfg.imputation)?;
    let (train_raw, test_raw) = split_stratified(&imputed, cfg.test_fraction, cfg.seed)?;
    let scaler = fit_scaler(&train_raw)?;
    let train_set = apply_scaler(&train_raw, &scaler)?;
    let test_set = apply_scaler(&test_raw, &scaler)?;
    let n_test = test_set.len();
    let test_labels = test_set.labels()?;

    let mut grids = Vec::with_capacity(cfg.grids.len());
    let mut families = Vec::with_capacity(cfg.grids.len());
    let mut models = Vec::with_capacity(cfg.grids.len());
    let mut resampled_counts = train_set.class_counts();
    for spec in &cfg.grids {
        let g = grid_search(&cfg.hyper_grid(spec), &train_set, cfg.seed)?;
        let best = g.best_cell().clone();
        let (model, fit) = refit(&best.params, &train_set, cfg)?;
        resampled_counts = fit.class_counts();
        let scores: Vec<f64> = test_set.records.iter().map(|r| model.predict_proba(&r.values)).collect();
        families.push(FamilyResult {
            kind: g.kind,
            params: best.params.clone(),
            cv_metrics: best.metrics,
            test_metrics: EvalMetrics::compute(&scores, &test_labels, best.metrics.threshold)?,
            floor_unattainable: best.floor_unattainable,
        });
        models.push(model);
        grids.push(g);
    }
    let cv: Vec<EvalMetrics> = families.iter().map(|f| f.cv_metrics).collect();
    let selection = select_model(&cv)?;
    let fam = &families[selection.index];
    if test_set.len() != n_test || test_set.records.iter().any(|r| r.synthetic) {
        return Err(invalid("pipeline", format!("test partition changed during training ({n_test} records)")));
    }
    Ok(TrainOutcome {
        champion: models.swap_remove(selection.index),
        champion_params: fam.params.clone(),
        threshold: fam.cv_metrics.threshold,
        test_metrics: fam.test_metrics,
        selection,
        counts: SplitCounts {
            train: train_set.class_counts(),
            test: test_set.class_counts(),
            train_resampled: resampled_counts,
        },
        grids,
        families,
        scaler,
        train: train_set,
        test: test_set,
        train_raw,
        test_raw,
    })
}

/// Refits `params` on `train` exactly as the pipeline's final step does.
pub fn final_fit(params: &Hyperparams, train_set: &Dataset, cfg: &PipelineConfig) -> Result<Model> {
    Ok(refit(params, train_set, cfg)?.0)
}

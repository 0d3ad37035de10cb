//! Records, datasets, group-mean imputation, min-max scaling and stratified
//! partitioning.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::schema::{Class, FeatureSchema};

/// Marker for a missing numeric cell.
pub const MISSING: f64 = f64::NAN;

pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    /// One value per schema feature, in schema order. [`MISSING`] marks an
    /// absent numeric cell.
    pub values: Vec<f64>,
    pub label: Option<Class>,
    /// Set on records produced by the resampler.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub synthetic: bool,
}

impl PatientRecord {
    pub fn new(values: Vec<f64>, label: Option<Class>) -> Self {
        Self {
            values,
            label,
            synthetic: false,
        }
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| is_missing(*v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Raw,
    Imputed,
    Scaled,
    Resampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledFeature {
    pub index: usize,
    pub min: f64,
    pub max: f64,
}

/// Per-numeric-feature min/max, fitted on a training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub n_features: usize,
    pub features: Vec<ScaledFeature>,
}

impl ScalerParams {
    fn lookup(&self, index: usize) -> Option<&ScaledFeature> {
        self.features.iter().find(|f| f.index == index)
    }

    pub fn scale_value(&self, index: usize, v: f64) -> f64 {
        match self.lookup(index) {
            Some(f) => (v - f.min) / (f.max - f.min),
            None => v,
        }
    }

    pub fn invert_value(&self, index: usize, v: f64) -> f64 {
        match self.lookup(index) {
            Some(f) => v * (f.max - f.min) + f.min,
            None => v,
        }
    }

    pub fn scale_record(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(i, &v)| self.scale_value(i, v))
            .collect()
    }

    pub fn invert_record(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .enumerate()
            .map(|(i, &v)| self.invert_value(i, v))
            .collect()
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if self.n_features != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "scaler covers {} features, schema has {}",
                self.n_features,
                schema.len()
            )));
        }
        for f in &self.features {
            if f.index >= schema.len() || schema.spec(f.index).is_binary() {
                return Err(Error::SchemaMismatch(format!(
                    "scaler entry {} is not a numeric schema feature",
                    f.index
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub records: Vec<PatientRecord>,
    pub scaler: Option<ScalerParams>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, records: Vec<PatientRecord>, provenance: Provenance) -> Self {
        Self {
            schema,
            records,
            scaler: None,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `[no CKD, CKD]` counts over labeled records.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0usize; 2];
        for r in &self.records {
            if let Some(l) = r.label {
                c[l.index()] += 1;
            }
        }
        c
    }

    pub fn positive_fraction(&self) -> f64 {
        let c = self.class_counts();
        let n = c[0] + c[1];
        if n == 0 {
            0.0
        } else {
            c[1] as f64 / n as f64
        }
    }

    pub fn rows(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.values.as_slice()).collect()
    }

    pub fn labels(&self) -> Result<Vec<Class>> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| r.label.ok_or(Error::Unlabeled(i)))
            .collect()
    }

    /// Raw-unit copy of record `i` (identity when unscaled).
    pub fn raw_values(&self, i: usize) -> Vec<f64> {
        match &self.scaler {
            Some(s) => s.invert_record(&self.records[i].values),
            None => self.records[i].values.clone(),
        }
    }

    /// Dataset restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            scaler: self.scaler.clone(),
            provenance: self.provenance,
        }
    }

    /// Errors on any missing or non-finite value.
    pub fn ensure_complete(&self) -> Result<()> {
        for (ri, r) in self.records.iter().enumerate() {
            if r.values.len() != self.schema.len() {
                return Err(Error::SchemaMismatch(format!(
                    "record {ri} has {} values, schema has {}",
                    r.values.len(),
                    self.schema.len()
                )));
            }
            for (fi, v) in r.values.iter().enumerate() {
                if is_missing(*v) {
                    return Err(Error::MissingValue {
                        record: ri,
                        feature: self.schema.name(fi).to_owned(),
                    });
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        record: ri,
                        feature: self.schema.name(fi).to_owned(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// A numeric feature imputed by the mean of records sharing a binary group
/// feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationRule {
    pub target: alloc::string::String,
    pub group_by: alloc::string::String,
}

/// HbA1C by diabetic status, TG by dyslipidemia status.
pub fn ckd_imputation_rules() -> Vec<ImputationRule> {
    alloc::vec![
        ImputationRule {
            target: "HbA1C".into(),
            group_by: "DM".into(),
        },
        ImputationRule {
            target: "TG".into(),
            group_by: "DLP".into(),
        },
    ]
}

/// Fills missing values of each rule's target with the mean over donors
/// sharing the record's group value. Non-missing cells are never touched.
pub fn impute_group_mean(ds: &Dataset) -> Result<Dataset> {
    impute_with_rules(ds, &ckd_imputation_rules())
}

pub fn impute_with_rules(ds: &Dataset, rules: &[ImputationRule]) -> Result<Dataset> {
    let mut out = ds.clone();
    for rule in rules {
        let t = ds.schema.require(&rule.target)?;
        let g = ds.schema.require(&rule.group_by)?;
        let mut sum = [0.0f64; 2];
        let mut count = [0usize; 2];
        let mut needs = [false; 2];
        for (ri, r) in ds.records.iter().enumerate() {
            let gv = r.values[g];
            if is_missing(gv) {
                return Err(Error::MissingValue {
                    record: ri,
                    feature: rule.group_by.clone(),
                });
            }
            let gi = usize::from(gv >= 0.5);
            if is_missing(r.values[t]) {
                needs[gi] = true;
            } else {
                sum[gi] += r.values[t];
                count[gi] += 1;
            }
        }
        for gi in 0..2 {
            if needs[gi] && count[gi] == 0 {
                return Err(Error::ImputationImpossible {
                    target: rule.target.clone(),
                    group: rule.group_by.clone(),
                    value: gi as u8,
                });
            }
        }
        let mean = [
            sum[0] / count[0].max(1) as f64,
            sum[1] / count[1].max(1) as f64,
        ];
        for r in &mut out.records {
            if is_missing(r.values[t]) {
                r.values[t] = mean[usize::from(r.values[g] >= 0.5)];
            }
        }
    }
    out.provenance = Provenance::Imputed;
    Ok(out)
}

/// Min/max of every numeric feature; binary features are excluded.
pub fn fit_scaler(ds: &Dataset) -> Result<ScalerParams> {
    if ds.is_empty() {
        return Err(Error::Empty { module: "data" });
    }
    ds.ensure_complete()?;
    let mut features = Vec::new();
    for i in ds.schema.numeric_indices() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in &ds.records {
            lo = lo.min(r.values[i]);
            hi = hi.max(r.values[i]);
        }
        if hi <= lo {
            return Err(Error::DegenerateFeature(ds.schema.name(i).to_owned()));
        }
        features.push(ScaledFeature {
            index: i,
            min: lo,
            max: hi,
        });
    }
    Ok(ScalerParams {
        n_features: ds.schema.len(),
        features,
    })
}

pub fn apply_scaler(ds: &Dataset, s: &ScalerParams) -> Result<Dataset> {
    s.check_schema(&ds.schema)?;
    let mut out = ds.clone();
    for r in &mut out.records {
        r.values = s.scale_record(&r.values);
    }
    out.scaler = Some(s.clone());
    out.provenance = Provenance::Scaled;
    Ok(out)
}

/// Maps a scaled dataset back to raw units.
pub fn invert_scaler(ds: &Dataset) -> Dataset {
    let mut out = ds.clone();
    if let Some(s) = &ds.scaler {
        for r in &mut out.records {
            r.values = s.invert_record(&r.values);
        }
    }
    out.scaler = None;
    out
}

fn per_class_indices(ds: &Dataset) -> Result<[Vec<usize>; 2]> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in ds.records.iter().enumerate() {
        let l = r.label.ok_or(Error::Unlabeled(i))?;
        by_class[l.index()].push(i);
    }
    Ok(by_class)
}

/// Stratified train/test partition; both sides keep the input order.
pub fn split_stratified(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid("data", "test_fraction must lie in (0, 1)"));
    }
    let by_class = per_class_indices(ds)?;
    for (ci, idx) in by_class.iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::TooFewInClass(if ci == 1 { Class::Ckd } else { Class::NoCkd }));
        }
    }
    // Largest-remainder allocation keeps the overall test size at
    // round(test_fraction * n) and each class within one record of its share.
    let n_total = libm::round(test_fraction * ds.len() as f64) as usize;
    let exact: [f64; 2] = [0, 1].map(|c| test_fraction * by_class[c].len() as f64);
    let mut take: [usize; 2] = exact.map(|e| libm::floor(e) as usize);
    let mut remaining = n_total.saturating_sub(take[0] + take[1]);
    let mut order = [0usize, 1];
    // Larger remainder first; on ties the minority class goes first.
    order.sort_by(|&a, &b| {
        let ra = exact[a] - take[a] as f64;
        let rb = exact[b] - take[b] as f64;
        rb.total_cmp(&ra)
            .then(by_class[a].len().cmp(&by_class[b].len()))
    });
    for &c in &order {
        if remaining > 0 {
            take[c] += 1;
            remaining -= 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = alloc::vec![false; ds.len()];
    for (c, idx) in by_class.iter().enumerate() {
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng);
        let n_test = take[c].clamp(1, idx.len() - 1);
        for &i in &shuffled[..n_test] {
            is_test[i] = true;
        }
    }
    let train: Vec<usize> = (0..ds.len()).filter(|&i| !is_test[i]).collect();
    let test: Vec<usize> = (0..ds.len()).filter(|&i| is_test[i]).collect();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Stratified k-fold assignment: returns, for each fold, the sorted indices
/// of its validation records.
pub fn stratified_folds(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(invalid("data", "cross-validation needs at least 2 folds"));
    }
    let by_class = per_class_indices(ds)?;
    for idx in &by_class {
        if idx.len() < k {
            return Err(invalid(
                "data",
                format!("class has {} records, fewer than {k} folds", idx.len()),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = (0..k).map(|_| Vec::new()).collect();
    let mut offset = 0;
    for idx in &by_class {
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng);
        for (j, &i) in shuffled.iter().enumerate() {
            folds[(j + offset) % k].push(i);
        }
        offset += idx.len();
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

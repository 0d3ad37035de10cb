//! Prototype selection and dataset-drawn counterfactuals.

use alloc::borrow::Cow;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::learners::Classifier;
use crate::schema::{Class, FeatureKind};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericScale {
    Mad,
    Std,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceConfig {
    pub numeric_scale: NumericScale,
    pub categorical_mismatch_cost: f64,
    pub norm: Norm,
    /// Use 1.0 for a numeric feature whose spread is zero instead of failing.
    pub zero_scale_fallback: bool,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            numeric_scale: NumericScale::Mad,
            categorical_mismatch_cost: 1.0,
            norm: Norm::L1,
            zero_scale_fallback: true,
        }
    }
}

/// Per-feature denominators fitted on a reference dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub kinds: Vec<FeatureKind>,
    /// Divisor per feature; 1.0 for binary features.
    pub scales: Vec<f64>,
    /// Numeric features whose spread was zero and fell back to 1.0.
    pub fallbacks: Vec<usize>,
}

impl DistanceStats {
    pub fn fit(ds: &Dataset, cfg: &DistanceConfig) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Empty { module: "local_explain" });
        }
        let kinds = ds.schema.kinds();
        let mut scales = vec![1.0; kinds.len()];
        let mut fallbacks = Vec::new();
        for (f, kind) in kinds.iter().enumerate() {
            if *kind != FeatureKind::Numeric {
                continue;
            }
            let col: Vec<f64> = ds.records.iter().map(|r| r.values[f]).collect();
            let s = match cfg.numeric_scale {
                NumericScale::Mad => stats::mad(&col),
                NumericScale::Std => stats::std_dev(&col),
            };
            if s > 0.0 {
                scales[f] = s;
            } else if cfg.zero_scale_fallback {
                fallbacks.push(f);
            } else {
                return Err(Error::ZeroScale(ds.schema.name(f).into()));
            }
        }
        Ok(Self {
            kinds,
            scales,
            fallbacks,
        })
    }
}

/// Scaled L1 or L2 distance; each differing binary feature costs
/// `categorical_mismatch_cost` (squared inside the root for L2).
pub fn distance(a: &[f64], b: &[f64], cfg: &DistanceConfig, st: &DistanceStats) -> f64 {
    let mut acc = 0.0;
    for (f, kind) in st.kinds.iter().enumerate() {
        let term = match kind {
            FeatureKind::Numeric => libm::fabs(a[f] - b[f]) / st.scales[f],
            FeatureKind::Binary => {
                if a[f] != b[f] {
                    cfg.categorical_mismatch_cost
                } else {
                    0.0
                }
            }
        };
        acc += match cfg.norm {
            Norm::L1 => term,
            Norm::L2 => term * term,
        };
    }
    match cfg.norm {
        Norm::L1 => acc,
        Norm::L2 => libm::sqrt(acc),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrototypeConfig {
    pub m: usize,
    /// Coverage radius; `None` picks the 15th percentile of pairwise
    /// distances over a seeded subsample of up to 200 records.
    pub epsilon: Option<f64>,
    /// Subtracted per other-class record inside a candidate's ball.
    pub other_class_penalty: f64,
    pub seed: u64,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        Self {
            m: 10,
            epsilon: None,
            other_class_penalty: 1.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    /// Index into the dataset.
    pub index: usize,
    pub values: Vec<f64>,
    pub raw_values: Vec<f64>,
    /// Same-class records newly covered when this prototype was added.
    pub covered_count: usize,
    pub class: Class,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub members: Vec<Prototype>,
    pub epsilon: f64,
    /// Greedy gain at each step.
    pub objective_trace: Vec<f64>,
}

/// 15th percentile (nearest rank) of pairwise distances over a seeded
/// subsample of at most 200 records.
pub fn default_epsilon(ds: &Dataset, cfg: &DistanceConfig, st: &DistanceStats, seed: u64) -> f64 {
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    if idx.len() > 200 {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(200);
    }
    let mut d = Vec::with_capacity(idx.len() * idx.len() / 2);
    for (k, &i) in idx.iter().enumerate() {
        for &j in &idx[k + 1..] {
            d.push(distance(&ds.records[i].values, &ds.records[j].values, cfg, st));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    stats::nearest_rank(&d, 0.15)
}

fn predicted_classes<M: Classifier + ?Sized>(model: &M, ds: &Dataset, threshold: f64) -> Vec<Class> {
    crate::par::map_indexed(ds.len(), |i| {
        Class::from_positive(model.predict_proba(&ds.records[i].values) >= threshold)
    })
}

/// Greedy set cover with an other-class penalty. Record classes come from
/// the model's thresholded predictions.
pub fn select_prototypes<M: Classifier + ?Sized>(
    ds: &Dataset,
    model: &M,
    threshold: f64,
    cfg: &PrototypeConfig,
    dist: &DistanceConfig,
) -> Result<PrototypeSet> {
    if ds.is_empty() {
        return Err(Error::Empty { module: "local_explain" });
    }
    if cfg.m == 0 {
        return Err(invalid("local_explain", "m must be at least 1"));
    }
    let st = DistanceStats::fit(ds, dist)?;
    let epsilon = cfg
        .epsilon
        .unwrap_or_else(|| default_epsilon(ds, dist, &st, cfg.seed));
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(invalid("local_explain", "epsilon must be positive"));
    }
    let classes = predicted_classes(model, ds, threshold);
    let n = ds.len();
    // balls[j]: records within epsilon of j.
    let balls: Vec<Vec<usize>> = crate::par::map_indexed(n, |j| {
        (0..n)
            .filter(|&i| distance(&ds.records[j].values, &ds.records[i].values, dist, &st) <= epsilon)
            .collect()
    });
    let penalties: Vec<f64> = (0..n)
        .map(|j| cfg.other_class_penalty * balls[j].iter().filter(|&&i| classes[i] != classes[j]).count() as f64)
        .collect();
    let mut covered = vec![false; n];
    let mut chosen = vec![false; n];
    let mut members = Vec::new();
    let mut trace = Vec::new();
    while members.len() < cfg.m {
        let mut best: Option<(f64, usize, usize)> = None;
        for j in (0..n).filter(|&j| !chosen[j]) {
            let fresh = balls[j]
                .iter()
                .filter(|&&i| !covered[i] && classes[i] == classes[j])
                .count();
            let gain = fresh as f64 - penalties[j];
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, j, fresh));
            }
        }
        let Some((gain, j, fresh)) = best else { break };
        if gain <= 0.0 {
            break;
        }
        chosen[j] = true;
        for &i in &balls[j] {
            if classes[i] == classes[j] {
                covered[i] = true;
            }
        }
        trace.push(gain);
        members.push(Prototype {
            index: j,
            values: ds.records[j].values.clone(),
            raw_values: ds.raw_values(j),
            covered_count: fresh,
            class: classes[j],
        });
    }
    Ok(PrototypeSet {
        members,
        epsilon,
        objective_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangedFeature {
    pub feature: String,
    pub reference: f64,
    pub counterfactual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualPair {
    pub reference: Vec<f64>,
    pub counterfactual: Vec<f64>,
    /// Index of the counterfactual within the pool.
    pub pool_index: usize,
    pub distance: f64,
    pub reference_prediction: Class,
    pub counterfactual_prediction: Class,
    pub reference_probability: f64,
    pub counterfactual_probability: f64,
    /// Raw-unit values of every feature that differs.
    pub changed_features: Vec<ChangedFeature>,
}

/// Pool records with their precomputed CKD probabilities, so repeated
/// queries do not rescore the pool.
#[derive(Debug, Clone)]
pub struct ScoredPool<'a> {
    pub pool: Cow<'a, Dataset>,
    pub probabilities: Vec<f64>,
    pub stats: DistanceStats,
}

impl<'a> ScoredPool<'a> {
    pub fn new<M: Classifier + ?Sized>(pool: &'a Dataset, model: &M, cfg: &DistanceConfig) -> Result<Self> {
        Self::build(Cow::Borrowed(pool), model, cfg)
    }

    /// Owning variant for long-lived holders such as a server.
    pub fn owned<M: Classifier + ?Sized>(pool: Dataset, model: &M, cfg: &DistanceConfig) -> Result<ScoredPool<'static>> {
        ScoredPool::build(Cow::Owned(pool), model, cfg)
    }

    fn build<M: Classifier + ?Sized>(pool: Cow<'a, Dataset>, model: &M, cfg: &DistanceConfig) -> Result<Self> {
        let stats = DistanceStats::fit(&pool, cfg)?;
        let probabilities = crate::par::map_indexed(pool.len(), |i| model.predict_proba(&pool.records[i].values));
        Ok(Self {
            pool,
            probabilities,
            stats,
        })
    }

    /// Nearest pool record whose thresholded prediction differs from the
    /// reference's; `None` when every pool record agrees.
    pub fn nearest_opposite(
        &self,
        reference: &[f64],
        reference_probability: f64,
        threshold: f64,
        cfg: &DistanceConfig,
    ) -> Result<Option<CounterfactualPair>> {
        if reference.len() != self.pool.schema.len() {
            return Err(Error::SchemaMismatch(alloc::format!(
                "reference has {} values, pool schema has {}",
                reference.len(),
                self.pool.schema.len()
            )));
        }
        let ref_class = Class::from_positive(reference_probability >= threshold);
        let mut best: Option<(f64, usize)> = None;
        for (i, rec) in self.pool.records.iter().enumerate() {
            if Class::from_positive(self.probabilities[i] >= threshold) == ref_class {
                continue;
            }
            let d = distance(reference, &rec.values, cfg, &self.stats);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let Some((d, i)) = best else { return Ok(None) };
        let cf = &self.pool.records[i].values;
        let (ref_raw, cf_raw) = match &self.pool.scaler {
            Some(s) => (s.invert_record(reference), s.invert_record(cf)),
            None => (reference.to_vec(), cf.clone()),
        };
        let changed_features = (0..reference.len())
            .filter(|&f| reference[f] != cf[f])
            .map(|f| ChangedFeature {
                feature: self.pool.schema.name(f).into(),
                reference: ref_raw[f],
                counterfactual: cf_raw[f],
            })
            .collect();
        Ok(Some(CounterfactualPair {
            reference: reference.to_vec(),
            counterfactual: cf.clone(),
            pool_index: i,
            distance: d,
            reference_prediction: ref_class,
            counterfactual_prediction: ref_class.opposite(),
            reference_probability,
            counterfactual_probability: self.probabilities[i],
            changed_features,
        }))
    }
}

/// Nearest opposite-prediction record in `pool`, or `None`.
pub fn find_counterfactual<M: Classifier + ?Sized>(
    reference: &[f64],
    pool: &Dataset,
    model: &M,
    threshold: f64,
    cfg: &DistanceConfig,
) -> Result<Option<CounterfactualPair>> {
    if pool.is_empty() {
        return Err(Error::Empty { module: "local_explain" });
    }
    let scored = ScoredPool::new(pool, model, cfg)?;
    scored.nearest_opposite(reference, model.predict_proba(reference), threshold, cfg)
}

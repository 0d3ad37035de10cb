//! Interventional Shapley attributions.
//!
//! The value of a coalition S is the mean, over background rows b, of the
//! model evaluated on the hybrid record taking features in S from the
//! instance and the rest from b. Tree ensembles are attributed exactly by
//! walking each tree once per background row; other models use subset
//! enumeration when small and antithetic permutation sampling otherwise.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{Classifier, Node, Tree};
use crate::stats::mix_seed;

/// Largest feature count accepted by the subset-enumeration oracle.
pub const ORACLE_MAX_FEATURES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapConfig {
    /// Background rows kept when subsampling.
    pub background_size: usize,
    pub seed: u64,
    /// Total permutation budget for sampled attributions.
    pub permutations: usize,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self {
            background_size: 128,
            seed: 42,
            permutations: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    TreePath,
    Enumeration,
    /// `per_row` antithetic permutation pairs' worth of orderings per
    /// background row.
    Permutation { per_row: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub base_value: f64,
    pub phis: Vec<f64>,
    pub instance: Vec<f64>,
    pub background_size: usize,
    pub method: Method,
}

impl Attribution {
    /// `base_value + Σ phis`.
    pub fn total(&self) -> f64 {
        self.base_value + self.phis.iter().sum::<f64>()
    }

    /// Feature indices by descending |phi|, ties by index.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.phis.len()).collect();
        idx.sort_by(|&a, &b| {
            libm::fabs(self.phis[b])
                .total_cmp(&libm::fabs(self.phis[a]))
                .then(a.cmp(&b))
        });
        idx
    }
}

/// Seeded subsample of at most `cfg.background_size` rows, in input order.
pub fn background_rows(ds: &Dataset, cfg: &ShapConfig) -> Vec<Vec<f64>> {
    if ds.len() <= cfg.background_size {
        return ds.records.iter().map(|r| r.values.clone()).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(cfg.background_size);
    idx.sort_unstable();
    idx.into_iter().map(|i| ds.records[i].values.clone()).collect()
}

fn check_inputs<R: AsRef<[f64]>>(instance: &[f64], background: &[R]) -> Result<()> {
    if background.is_empty() {
        return Err(Error::Empty { module: "shap_engine" });
    }
    if let Some(r) = background.iter().find(|r| r.as_ref().len() != instance.len()) {
        return Err(Error::SchemaMismatch(alloc::format!(
            "background row has {} features, instance has {}",
            r.as_ref().len(),
            instance.len()
        )));
    }
    Ok(())
}

fn base_value<M: Classifier + ?Sized, R: AsRef<[f64]>>(model: &M, background: &[R]) -> f64 {
    background.iter().map(|b| model.predict_proba(b.as_ref())).sum::<f64>() / background.len() as f64
}

/// Interventional Shapley values of `model` at `instance`.
pub fn attribute<M, R>(model: &M, instance: &[f64], background: &[R], cfg: &ShapConfig) -> Result<Attribution>
where
    M: Classifier + ?Sized,
    R: AsRef<[f64]>,
{
    check_inputs(instance, background)?;
    if let Some(trees) = model.averaged_trees() {
        return Ok(attribute_trees(trees, model, instance, background));
    }
    if instance.len() <= ORACLE_MAX_FEATURES {
        let mut a = attribute_oracle(model, instance, background)?;
        a.method = Method::Enumeration;
        return Ok(a);
    }
    Ok(attribute_permutation(model, instance, background, cfg))
}

fn attribute_trees<M, R>(trees: &[Tree], model: &M, instance: &[f64], background: &[R]) -> Attribution
where
    M: Classifier + ?Sized,
    R: AsRef<[f64]>,
{
    let n = instance.len();
    let weights = PathWeights::new(n);
    let mut phis = vec![0.0; n];
    let mut a = Vec::new();
    let mut b = Vec::new();
    for tree in trees {
        for row in background {
            walk(tree, 0, instance, row.as_ref(), &mut a, &mut b, &weights, &mut phis);
        }
    }
    let scale = (trees.len() * background.len()) as f64;
    for p in &mut phis {
        *p /= scale;
    }
    Attribution {
        base_value: base_value(model, background),
        phis,
        instance: instance.to_vec(),
        background_size: background.len(),
        method: Method::TreePath,
    }
}

/// Leaf weights for features decided by the instance (`a` of them) or the
/// background row (`b`): (a−1)!·b!/(a+b)! and a!·(b−1)!/(a+b)!.
struct PathWeights {
    fact: Vec<f64>,
}

impl PathWeights {
    fn new(n: usize) -> Self {
        let mut fact = vec![1.0; n + 2];
        for i in 1..fact.len() {
            fact[i] = fact[i - 1] * i as f64;
        }
        Self { fact }
    }

    fn instance_weight(&self, a: usize, b: usize) -> f64 {
        self.fact[a - 1] * self.fact[b] / self.fact[a + b]
    }

    fn background_weight(&self, a: usize, b: usize) -> f64 {
        self.fact[a] * self.fact[b - 1] / self.fact[a + b]
    }
}

#[allow(clippy::too_many_arguments)]
fn walk(
    tree: &Tree,
    node: usize,
    x: &[f64],
    z: &[f64],
    a: &mut Vec<u32>,
    b: &mut Vec<u32>,
    w: &PathWeights,
    phis: &mut [f64],
) {
    match tree.nodes[node] {
        Node::Leaf { value, .. } => {
            if !a.is_empty() {
                let wa = value * w.instance_weight(a.len(), b.len());
                for &f in a.iter() {
                    phis[f as usize] += wa;
                }
            }
            if !b.is_empty() {
                let wb = value * w.background_weight(a.len(), b.len());
                for &f in b.iter() {
                    phis[f as usize] -= wb;
                }
            }
        }
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let child = |v: f64| (if v <= threshold { left } else { right }) as usize;
            let f = feature as usize;
            let cx = child(x[f]);
            let cz = child(z[f]);
            if a.contains(&feature) {
                walk(tree, cx, x, z, a, b, w, phis);
            } else if b.contains(&feature) || cx == cz {
                walk(tree, cz, x, z, a, b, w, phis);
            } else {
                a.push(feature);
                walk(tree, cx, x, z, a, b, w, phis);
                a.pop();
                b.push(feature);
                walk(tree, cz, x, z, a, b, w, phis);
                b.pop();
            }
        }
    }
}

/// Coalition value: mean model output over hybrids of `x` (features in
/// `mask`) and each background row.
fn coalition_value<M, R>(model: &M, x: &[f64], background: &[R], mask: u32, buf: &mut [f64]) -> f64
where
    M: Classifier + ?Sized,
    R: AsRef<[f64]>,
{
    let mut total = 0.0;
    for row in background {
        let row = row.as_ref();
        for (f, slot) in buf.iter_mut().enumerate() {
            *slot = if mask & (1 << f) != 0 { x[f] } else { row[f] };
        }
        total += model.predict_proba(buf);
    }
    total / background.len() as f64
}

/// Exact Shapley values by enumerating all 2ⁿ coalitions with weights
/// |S|!(n−|S|−1)!/n!. Refuses more than [`ORACLE_MAX_FEATURES`] features.
pub fn attribute_oracle<M, R>(model: &M, instance: &[f64], background: &[R]) -> Result<Attribution>
where
    M: Classifier + ?Sized,
    R: AsRef<[f64]>,
{
    check_inputs(instance, background)?;
    let n = instance.len();
    if n > ORACLE_MAX_FEATURES {
        return Err(Error::TooManyFeatures(n));
    }
    let mut buf = vec![0.0; n];
    let values: Vec<f64> = (0..1u32 << n)
        .map(|mask| coalition_value(model, instance, background, mask, &mut buf))
        .collect();
    let w = PathWeights::new(n);
    let mut phis = vec![0.0; n];
    for (mask, &v) in values.iter().enumerate() {
        let s = (mask as u32).count_ones() as usize;
        for (i, phi) in phis.iter_mut().enumerate() {
            if mask & (1 << i) == 0 {
                let weight = w.fact[s] * w.fact[n - s - 1] / w.fact[n];
                *phi += weight * (values[mask | (1 << i)] - v);
            }
        }
    }
    Ok(Attribution {
        base_value: values[0],
        phis,
        instance: instance.to_vec(),
        background_size: background.len(),
        method: Method::Enumeration,
    })
}

fn attribute_permutation<M, R>(model: &M, instance: &[f64], background: &[R], cfg: &ShapConfig) -> Attribution
where
    M: Classifier + ?Sized,
    R: AsRef<[f64]>,
{
    let n = instance.len();
    // Equal, even count per row keeps every row's marginals telescoping to
    // f(x) − f(b), so additivity is exact.
    let per_row = cfg.permutations.div_ceil(background.len()).max(2).next_multiple_of(2);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x5A4B));
    let mut phis = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut buf = vec![0.0; n];
    for row in background {
        let row = row.as_ref();
        for k in 0..per_row {
            if k % 2 == 0 {
                order.shuffle(&mut rng);
            } else {
                order.reverse();
            }
            buf.copy_from_slice(row);
            let mut prev = model.predict_proba(&buf);
            for &f in &order {
                buf[f] = instance[f];
                let cur = model.predict_proba(&buf);
                phis[f] += cur - prev;
                prev = cur;
            }
        }
    }
    let scale = (per_row * background.len()) as f64;
    for p in &mut phis {
        *p /= scale;
    }
    Attribution {
        base_value: base_value(model, background),
        phis,
        instance: instance.to_vec(),
        background_size: background.len(),
        method: Method::Permutation { per_row },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: String,
    pub mean_abs_phi: f64,
    /// One (phi, raw feature value) pair per explained record.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummary {
    pub base_value: f64,
    pub features: Vec<FeatureSummary>,
    /// Feature indices by descending mean |phi|, ties by index.
    pub ranking: Vec<usize>,
}

impl GlobalSummary {
    pub fn rank_of(&self, feature: usize) -> usize {
        self.ranking.iter().position(|&f| f == feature).expect("ranking is a permutation")
    }

    pub fn top(&self, k: usize) -> Vec<&str> {
        self.ranking
            .iter()
            .take(k)
            .map(|&f| self.features[f].feature.as_str())
            .collect()
    }
}

/// Attributes every record of `explain_set` and aggregates mean |phi|.
pub fn global_summary<M, R>(
    model: &M,
    explain_set: &Dataset,
    background: &[R],
    cfg: &ShapConfig,
) -> Result<GlobalSummary>
where
    M: Classifier + ?Sized,
    R: AsRef<[f64]> + Sync,
{
    if explain_set.is_empty() {
        return Err(Error::Empty { module: "shap_engine" });
    }
    let attributions = crate::par::map_indexed(explain_set.len(), |i| {
        attribute(model, &explain_set.records[i].values, background, cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n = explain_set.schema.len();
    let m = attributions.len() as f64;
    let mut features: Vec<FeatureSummary> = (0..n)
        .map(|f| FeatureSummary {
            feature: explain_set.schema.name(f).into(),
            mean_abs_phi: 0.0,
            points: Vec::with_capacity(attributions.len()),
        })
        .collect();
    for (i, a) in attributions.iter().enumerate() {
        let raw = explain_set.raw_values(i);
        for (f, s) in features.iter_mut().enumerate() {
            s.mean_abs_phi += libm::fabs(a.phis[f]) / m;
            s.points.push((a.phis[f], raw[f]));
        }
    }
    let mut ranking: Vec<usize> = (0..n).collect();
    ranking.sort_by(|&a, &b| {
        features[b]
            .mean_abs_phi
            .total_cmp(&features[a].mean_abs_phi)
            .then(a.cmp(&b))
    });
    Ok(GlobalSummary {
        base_value: attributions[0].base_value,
        features,
        ranking,
    })
}

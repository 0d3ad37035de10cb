//! SMOTE-NC oversampling of the minority class.
//!
//! Neighbours are found by exact search under the SMOTE-NC metric: Euclidean
//! distance over continuous features, with each mismatched categorical
//! feature adding the squared median of the minority class's continuous
//! standard deviations.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PatientRecord, Provenance};
use crate::error::{invalid, Error, Result};
use crate::schema::{Class, FeatureKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResampleConfig {
    pub k_neighbors: usize,
    /// Minority/majority ratio after resampling.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            target_ratio: 1.0,
            seed: 42,
        }
    }
}

/// Per-feature geometry shared by neighbour search and synthesis.
#[derive(Debug, Clone)]
pub struct NcMetric {
    kinds: Vec<FeatureKind>,
    /// Squared categorical mismatch penalty.
    penalty_sq: f64,
}

impl NcMetric {
    pub fn fit(kinds: Vec<FeatureKind>, minority: &[&[f64]]) -> Self {
        let mut stds: Vec<f64> = Vec::new();
        for (f, kind) in kinds.iter().enumerate() {
            if *kind != FeatureKind::Numeric {
                continue;
            }
            let n = minority.len() as f64;
            let mean = minority.iter().map(|r| r[f]).sum::<f64>() / n;
            let var = minority.iter().map(|r| (r[f] - mean) * (r[f] - mean)).sum::<f64>() / n;
            stds.push(libm::sqrt(var));
        }
        let med = median(&mut stds);
        Self {
            kinds,
            penalty_sq: med * med,
        }
    }

    pub fn penalty(&self) -> f64 {
        libm::sqrt(self.penalty_sq)
    }

    pub fn distance_sq(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut d = 0.0;
        for (f, kind) in self.kinds.iter().enumerate() {
            match kind {
                FeatureKind::Numeric => d += (a[f] - b[f]) * (a[f] - b[f]),
                FeatureKind::Binary => {
                    if a[f] != b[f] {
                        d += self.penalty_sq;
                    }
                }
            }
        }
        d
    }
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

/// Indices (into `points`) of the `k` nearest other points to `points[i]`;
/// ties broken by index.
pub fn nearest_neighbors(metric: &NcMetric, points: &[&[f64]], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, p)| (metric.distance_sq(points[i], p), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// One synthetic point: continuous features interpolate `base → neighbor`
/// by `u`; categorical features take the majority over `neighbors`, with
/// ties going to the base value.
pub fn synthesize(kinds: &[FeatureKind], base: &[f64], neighbor: &[f64], neighbors: &[&[f64]], u: f64) -> Vec<f64> {
    kinds
        .iter()
        .enumerate()
        .map(|(f, kind)| match kind {
            FeatureKind::Numeric => base[f] + u * (neighbor[f] - base[f]),
            FeatureKind::Binary => {
                let ones = neighbors.iter().filter(|n| n[f] >= 0.5).count();
                let zeros = neighbors.len() - ones;
                match ones.cmp(&zeros) {
                    core::cmp::Ordering::Greater => 1.0,
                    core::cmp::Ordering::Less => 0.0,
                    core::cmp::Ordering::Equal => base[f],
                }
            }
        })
        .collect()
}

/// Provenance record of one synthetic sample, for geometry checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOrigin {
    /// Index into the input dataset.
    pub base: usize,
    pub neighbor: usize,
    pub neighbors: Vec<usize>,
    pub u: f64,
}

#[derive(Debug, Clone)]
pub struct Resampled {
    pub dataset: Dataset,
    /// One entry per synthetic record, aligned with the tail of
    /// `dataset.records`.
    pub origins: Vec<SyntheticOrigin>,
}

/// Oversamples the minority class up to `target_ratio` of the majority.
/// All input records come first and unchanged.
pub fn smote_nc(train: &Dataset, cfg: &ResampleConfig) -> Result<Dataset> {
    smote_nc_traced(train, cfg).map(|r| r.dataset)
}

pub fn smote_nc_traced(train: &Dataset, cfg: &ResampleConfig) -> Result<Resampled> {
    if train.provenance != Provenance::Scaled {
        return Err(invalid("resampler", "input must be scaled before resampling"));
    }
    train.ensure_complete()?;
    let counts = train.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::SingleClass { module: "resampler" });
    }
    let minority_class = if counts[1] <= counts[0] { Class::Ckd } else { Class::NoCkd };
    let n_min = counts[minority_class.index()];
    let n_maj = counts[minority_class.opposite().index()];
    if cfg.k_neighbors == 0 || cfg.k_neighbors >= n_min {
        return Err(invalid(
            "resampler",
            alloc::format!("k_neighbors={} needs 1 ≤ k < minority count {n_min}", cfg.k_neighbors),
        ));
    }
    let current = n_min as f64 / n_maj as f64;
    if !(cfg.target_ratio > current && cfg.target_ratio <= 1.0) {
        return Err(invalid(
            "resampler",
            alloc::format!("target_ratio {} must lie in ({current:.4}, 1]", cfg.target_ratio),
        ));
    }
    let target = libm::round(cfg.target_ratio * n_maj as f64) as usize;
    let n_new = target.saturating_sub(n_min);

    let min_idx: Vec<usize> = (0..train.len())
        .filter(|&i| train.records[i].label == Some(minority_class))
        .collect();
    let points: Vec<&[f64]> = min_idx.iter().map(|&i| train.records[i].values.as_slice()).collect();
    let kinds = train.schema.kinds();
    let metric = NcMetric::fit(kinds.clone(), &points);
    let knn: Vec<Vec<usize>> = (0..points.len())
        .map(|i| nearest_neighbors(&metric, &points, i, cfg.k_neighbors))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = train.clone();
    let mut origins = Vec::with_capacity(n_new);
    for _ in 0..n_new {
        let b = rng.random_range(0..points.len());
        let nb = knn[b][rng.random_range(0..knn[b].len())];
        let u: f64 = rng.random();
        let neigh: Vec<&[f64]> = knn[b].iter().map(|&j| points[j]).collect();
        let values = synthesize(&kinds, points[b], points[nb], &neigh, u);
        out.records.push(PatientRecord {
            values,
            label: Some(minority_class),
            synthetic: true,
        });
        origins.push(SyntheticOrigin {
            base: min_idx[b],
            neighbor: min_idx[nb],
            neighbors: knn[b].iter().map(|&j| min_idx[j]).collect(),
            u,
        });
    }
    out.provenance = Provenance::Resampled;
    Ok(Resampled {
        dataset: out,
        origins,
    })
}

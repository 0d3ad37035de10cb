//! Partial dependence of the CKD probability on one feature.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::learners::Classifier;
use crate::schema::FeatureKind;
use crate::stats::quantile_linear;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PdGrid {
    /// `n_points` quantiles at levels k/(n_points+1) plus the observed
    /// min and max. Binary features always use {0, 1}.
    Auto { n_points: usize },
    /// Values in model (scaled) units.
    Scaled { values: Vec<f64> },
    /// Values in clinical units, scaled with the dataset's scaler.
    Raw { values: Vec<f64> },
}

impl Default for PdGrid {
    fn default() -> Self {
        PdGrid::Auto { n_points: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdCurve {
    pub feature: String,
    pub feature_index: usize,
    pub kind: FeatureKind,
    pub grid_scaled: Vec<f64>,
    pub grid_raw: Vec<f64>,
    pub pd_values: Vec<f64>,
    pub n_averaged: usize,
}

impl PdCurve {
    /// Rows of (raw value, scaled value, pd).
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.pd_values.len()).map(|i| (self.grid_raw[i], self.grid_scaled[i], self.pd_values[i]))
    }
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Grid in scaled units for `feature`.
pub fn resolve_grid(ds: &Dataset, feature: usize, grid: &PdGrid) -> Result<Vec<f64>> {
    let values = match grid {
        PdGrid::Auto { n_points } => {
            if ds.schema.spec(feature).kind == FeatureKind::Binary {
                vec![0.0, 1.0]
            } else {
                let col = sorted_unique_col(ds, feature);
                if col.is_empty() {
                    Vec::new()
                } else {
                    let mut v = vec![col[0], col[col.len() - 1]];
                    let n = *n_points;
                    let mut sorted: Vec<f64> = ds.records.iter().map(|r| r.values[feature]).collect();
                    sorted.sort_by(f64::total_cmp);
                    for k in 1..=n {
                        v.push(quantile_linear(&sorted, k as f64 / (n + 1) as f64));
                    }
                    sorted_unique(v)
                }
            }
        }
        PdGrid::Scaled { values } => sorted_unique(values.clone()),
        PdGrid::Raw { values } => sorted_unique(match &ds.scaler {
            Some(s) => values.iter().map(|&v| s.scale_value(feature, v)).collect(),
            None => values.clone(),
        }),
    };
    if values.is_empty() {
        return Err(invalid("dependence", "empty grid"));
    }
    Ok(values)
}

fn sorted_unique_col(ds: &Dataset, feature: usize) -> Vec<f64> {
    sorted_unique(ds.records.iter().map(|r| r.values[feature]).collect())
}

/// pd(v) = mean over records of the model on the record with `feature := v`.
pub fn pd_curve<M: Classifier + ?Sized>(model: &M, ds: &Dataset, feature: &str, grid: &PdGrid) -> Result<PdCurve> {
    let f = ds
        .schema
        .index_of(feature)
        .ok_or_else(|| Error::UnknownFeature(feature.into()))?;
    if ds.is_empty() {
        return Err(Error::Empty { module: "dependence" });
    }
    let grid_scaled = resolve_grid(ds, f, grid)?;
    let pd_values = crate::par::map_indexed(grid_scaled.len(), |g| {
        let mut buf = vec![0.0; ds.schema.len()];
        let mut total = 0.0;
        for r in &ds.records {
            buf.copy_from_slice(&r.values);
            buf[f] = grid_scaled[g];
            total += model.predict_proba(&buf);
        }
        total / ds.len() as f64
    });
    let grid_raw = match &ds.scaler {
        Some(s) => grid_scaled.iter().map(|&v| s.invert_value(f, v)).collect(),
        None => grid_scaled.clone(),
    };
    Ok(PdCurve {
        feature: ds.schema.name(f).into(),
        feature_index: f,
        kind: ds.schema.spec(f).kind,
        grid_scaled,
        grid_raw,
        pd_values,
        n_averaged: ds.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PatientRecord, Provenance};
    use crate::learners::{Node, Tree};
    use crate::schema::{FeatureSchema, FeatureSpec};
    use proptest::prelude::*;

    fn ds(rows: &[Vec<f64>]) -> Dataset {
        let n = rows[0].len();
        let mut specs: Vec<FeatureSpec> = (0..n - 1)
            .map(|i| FeatureSpec::numeric(&alloc::format!("f{i}"), "", (-1e9, 1e9)))
            .collect();
        specs.push(FeatureSpec::binary("g"));
        Dataset::new(
            FeatureSchema::new(specs, "Label").unwrap(),
            rows.iter().map(|r| PatientRecord::new(r.clone(), None)).collect(),
            Provenance::Scaled,
        )
    }

    #[test]
    fn ignored_feature_is_flat_at_mean_prediction() {
        let d = ds(&[vec![0.1, 0.5, 0.0], vec![0.4, 0.2, 1.0], vec![0.9, 0.7, 0.0]]);
        let model = |x: &[f64]| 0.3 * x[0] + 0.2 * x[2];
        let c = pd_curve(&model, &d, "f1", &PdGrid::default()).unwrap();
        let mean = d.records.iter().map(|r| model(&r.values)).sum::<f64>() / 3.0;
        assert!(c.pd_values.iter().all(|&v| v == c.pd_values[0]));
        assert!((c.pd_values[0] - mean).abs() < 1e-15);
        assert!(c.grid_scaled.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn stump_hand_average() {
        let d = ds(&[vec![0.1, 0.0, 0.0], vec![0.6, 0.0, 1.0], vec![0.8, 0.0, 1.0]]);
        let t = Tree {
            nodes: vec![
                Node::Split {
                    feature: 2,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                },
                Node::Split {
                    feature: 0,
                    threshold: 0.5,
                    left: 3,
                    right: 4,
                },
                Node::Leaf {
                    value: 0.9,
                    n_neg: 0,
                    n_pos: 0,
                },
                Node::Leaf {
                    value: 0.1,
                    n_neg: 0,
                    n_pos: 0,
                },
                Node::Leaf {
                    value: 0.5,
                    n_neg: 0,
                    n_pos: 0,
                },
            ],
        };
        let c = pd_curve(&t, &d, "g", &PdGrid::default()).unwrap();
        assert_eq!(c.grid_scaled, vec![0.0, 1.0]);
        // g=0: leaves 0.1, 0.5, 0.5; g=1: all 0.9.
        assert!((c.pd_values[0] - 1.1 / 3.0).abs() < 1e-15);
        assert!((c.pd_values[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let d = ds(&[vec![0.1, 0.0, 0.0]]);
        let model = |_: &[f64]| 0.5;
        assert!(matches!(pd_curve(&model, &d, "nope", &PdGrid::default()), Err(Error::UnknownFeature(_))));
        assert!(pd_curve(&model, &d, "f0", &PdGrid::Scaled { values: vec![] }).is_err());
    }

    proptest! {
        #[test]
        fn singleton_collapse_and_duplication(rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..10), v in 0.0f64..1.0) {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|mut r| { r[2] = (r[2] > 0.5) as u8 as f64; r }).collect();
            let model = |x: &[f64]| crate::learners::sigmoid(x[0] - 2.0 * x[1] + x[2]);
            let grid = PdGrid::Scaled { values: vec![v] };
            let one = ds(&rows[..1]);
            let c = pd_curve(&model, &one, "f0", &grid).unwrap();
            let mut sub = rows[0].clone();
            sub[0] = v;
            prop_assert_eq!(c.pd_values[0], model(&sub));
            let d = ds(&rows);
            let mut doubled = rows.clone();
            doubled.extend(rows.iter().cloned());
            let grid = PdGrid::Scaled { values: vec![0.0, v, 1.0] };
            let a = pd_curve(&model, &d, "f1", &grid).unwrap();
            let b = pd_curve(&model, &ds(&doubled), "f1", &grid).unwrap();
            prop_assert_eq!(&a.grid_scaled, &b.grid_scaled);
            for (x, y) in a.pd_values.iter().zip(&b.pd_values) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

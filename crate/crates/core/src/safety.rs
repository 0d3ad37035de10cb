//! Declarative edge-case suites and misprediction analysis.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ScalerParams};
use crate::learners::Classifier;
use crate::local::{DistanceConfig, ScoredPool};
use crate::schema::{Class, FeatureSchema};
use crate::shap::{attribute, ShapConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Blocking,
}

/// Probability window on P(`of`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub of: Class,
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "warning")]
    pub severity: Severity,
}

fn warning() -> Severity {
    Severity::Warning
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub class: Class,
    #[serde(default)]
    pub band: Option<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyCase {
    pub id: String,
    #[serde(default)]
    pub description: String,
    /// Applies to the class expectation.
    pub severity: Severity,
    pub expect: Expectation,
    /// Raw clinical values keyed by feature name.
    pub input: BTreeMap<String, f64>,
}

/// `P(of | higher) ≥ P(of | lower)` across two cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingAssertion {
    pub higher: String,
    pub lower: String,
    pub of: Class,
    pub severity: Severity,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SafetySuite {
    #[serde(default, rename = "case")]
    pub cases: Vec<SafetyCase>,
    #[serde(default, rename = "ordering")]
    pub orderings: Vec<OrderingAssertion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub id: String,
    pub description: String,
    pub severity: Severity,
    pub status: Status,
    pub expected_class: Class,
    pub predicted_class: Option<Class>,
    pub probability_ckd: Option<f64>,
    pub class_ok: Option<bool>,
    pub band_ok: Option<bool>,
    /// |P(CKD) − threshold|.
    pub margin: Option<f64>,
    pub error: Option<String>,
    pub blocking_failure: bool,
}

impl CaseVerdict {
    pub fn pass(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingVerdict {
    pub higher: String,
    pub lower: String,
    pub of: Class,
    pub severity: Severity,
    pub higher_probability: Option<f64>,
    pub lower_probability: Option<f64>,
    pub holds: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub threshold: f64,
    /// Sorted by case id.
    pub verdicts: Vec<CaseVerdict>,
    pub orderings: Vec<OrderingVerdict>,
    pub n_pass: usize,
    pub n_fail: usize,
    pub n_error: usize,
    /// False iff any blocking expectation failed or errored.
    pub passed: bool,
}

impl SafetyReport {
    pub fn verdict(&self, id: &str) -> Option<&CaseVerdict> {
        self.verdicts.iter().find(|v| v.id == id)
    }
}

/// Scales a raw case input; errors name the offending feature.
pub fn prepare_case(case: &SafetyCase, schema: &FeatureSchema, scaler: &ScalerParams) -> Result<Vec<f64>, String> {
    let (raw, _warnings) = schema
        .record_from_map(case.input.iter().map(|(k, v)| (k.as_str(), *v)))
        .map_err(|e| format!("{e}"))?;
    scaler.check_schema(schema).map_err(|e| format!("{e}"))?;
    Ok(scaler.scale_record(&raw))
}

fn judge<M: Classifier + ?Sized>(
    case: &SafetyCase,
    model: &M,
    schema: &FeatureSchema,
    scaler: &ScalerParams,
    threshold: f64,
) -> CaseVerdict {
    let mut v = CaseVerdict {
        id: case.id.clone(),
        description: case.description.clone(),
        severity: case.severity,
        status: Status::Error,
        expected_class: case.expect.class,
        predicted_class: None,
        probability_ckd: None,
        class_ok: None,
        band_ok: None,
        margin: None,
        error: None,
        blocking_failure: false,
    };
    if let Some(b) = &case.expect.band {
        if !(0.0 <= b.lo && b.lo <= b.hi && b.hi <= 1.0) {
            v.error = Some(format!("band [{}, {}] is not within [0, 1] with lo ≤ hi", b.lo, b.hi));
            v.blocking_failure = case.severity == Severity::Blocking;
            return v;
        }
    }
    let x = match prepare_case(case, schema, scaler) {
        Ok(x) => x,
        Err(e) => {
            v.error = Some(e);
            v.blocking_failure = case.severity == Severity::Blocking;
            return v;
        }
    };
    let p = model.predict_proba(&x);
    let predicted = Class::from_positive(p >= threshold);
    let class_ok = predicted == case.expect.class;
    let band_ok = case.expect.band.as_ref().map(|b| {
        let q = b.of.probability(p);
        b.lo <= q && q <= b.hi
    });
    v.predicted_class = Some(predicted);
    v.probability_ckd = Some(p);
    v.class_ok = Some(class_ok);
    v.band_ok = band_ok;
    v.margin = Some(libm::fabs(p - threshold));
    let ok = class_ok && band_ok != Some(false);
    v.status = if ok { Status::Pass } else { Status::Fail };
    let band_blocks = case.expect.band.as_ref().is_some_and(|b| b.severity == Severity::Blocking);
    v.blocking_failure =
        (!class_ok && case.severity == Severity::Blocking) || (band_ok == Some(false) && band_blocks);
    v
}

/// Scores and judges every case; malformed cases become error verdicts
/// without stopping the suite.
pub fn run_suite<M: Classifier + ?Sized>(
    suite: &SafetySuite,
    model: &M,
    schema: &FeatureSchema,
    scaler: &ScalerParams,
    threshold: f64,
) -> SafetyReport {
    let mut verdicts: Vec<CaseVerdict> = suite
        .cases
        .iter()
        .map(|c| judge(c, model, schema, scaler, threshold))
        .collect();
    verdicts.sort_by(|a, b| a.id.cmp(&b.id));
    let orderings: Vec<OrderingVerdict> = suite
        .orderings
        .iter()
        .map(|o| {
            let find = |id: &str| {
                verdicts
                    .iter()
                    .find(|v| v.id == id)
                    .ok_or_else(|| format!("no case with id `{id}`"))
                    .and_then(|v| {
                        v.probability_ckd
                            .map(|p| o.of.probability(p))
                            .ok_or_else(|| format!("case `{id}` could not be scored"))
                    })
            };
            let (hi, lo) = (find(&o.higher), find(&o.lower));
            let error = hi.as_ref().err().or(lo.as_ref().err()).cloned();
            OrderingVerdict {
                higher: o.higher.clone(),
                lower: o.lower.clone(),
                of: o.of,
                severity: o.severity,
                higher_probability: hi.as_ref().ok().copied(),
                lower_probability: lo.as_ref().ok().copied(),
                holds: matches!((&hi, &lo), (Ok(h), Ok(l)) if h >= l),
                error,
            }
        })
        .collect();
    let count = |s: Status| verdicts.iter().filter(|v| v.status == s).count();
    let passed = !verdicts.iter().any(|v| v.blocking_failure)
        && !orderings
            .iter()
            .any(|o| !o.holds && o.severity == Severity::Blocking);
    SafetyReport {
        threshold,
        n_pass: count(Status::Pass),
        n_fail: count(Status::Fail),
        n_error: count(Status::Error),
        verdicts,
        orderings,
        passed,
    }
}

/// Comorbidity flags reported as present or absent in error analyses.
pub const RISK_FACTORS: [&str; 7] = ["DM", "CHD", "Vascular_disease", "smoking", "HT", "DLP", "Obesity"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopAttribution {
    pub feature: String,
    pub phi: f64,
    pub raw_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnalysis {
    /// Index into the labeled dataset.
    pub record: usize,
    pub truth: Class,
    pub prediction: Class,
    pub probability_ckd: f64,
    /// (P(no CKD), P(CKD)).
    pub probability_ratio: (f64, f64),
    pub margin: f64,
    pub top_attributions: Vec<TopAttribution>,
    pub counterfactual_distance: Option<f64>,
    pub dominant_feature: String,
    pub risk_factors_present: Vec<String>,
    pub risk_factors_absent: Vec<String>,
}

pub struct ErrorAnalysisInputs<'a, 'p> {
    pub background: &'a [Vec<f64>],
    pub shap: &'a ShapConfig,
    pub pool: Option<&'a ScoredPool<'p>>,
    pub distance: &'a DistanceConfig,
}

/// One entry per mispredicted record: false negatives first, then false
/// positives, each group by record index.
pub fn analyze_errors<M: Classifier + ?Sized>(
    model: &M,
    labeled: &Dataset,
    threshold: f64,
    inputs: &ErrorAnalysisInputs<'_, '_>,
) -> crate::Result<Vec<ErrorAnalysis>> {
    let labels = labeled.labels()?;
    let mut wrong: Vec<(usize, f64)> = Vec::new();
    for (i, r) in labeled.records.iter().enumerate() {
        let p = model.predict_proba(&r.values);
        if Class::from_positive(p >= threshold) != labels[i] {
            wrong.push((i, p));
        }
    }
    wrong.sort_by_key(|&(i, _)| (labels[i] != Class::Ckd, i));
    let schema = &labeled.schema;
    let mut out = Vec::with_capacity(wrong.len());
    for (i, p) in wrong {
        let x = &labeled.records[i].values;
        let raw = labeled.raw_values(i);
        let a = attribute(model, x, inputs.background, inputs.shap)?;
        let top_attributions: Vec<TopAttribution> = a
            .ranked()
            .into_iter()
            .take(5)
            .map(|f| TopAttribution {
                feature: schema.name(f).into(),
                phi: a.phis[f],
                raw_value: raw[f],
            })
            .collect();
        let counterfactual_distance = match inputs.pool {
            Some(pool) => pool
                .nearest_opposite(x, p, threshold, inputs.distance)?
                .map(|c| c.distance),
            None => None,
        };
        let (mut present, mut absent) = (Vec::new(), Vec::new());
        for name in RISK_FACTORS {
            if let Some(f) = schema.index_of(name) {
                if raw[f] >= 0.5 {
                    present.push(name.into());
                } else {
                    absent.push(name.into());
                }
            }
        }
        out.push(ErrorAnalysis {
            record: i,
            truth: labels[i],
            prediction: labels[i].opposite(),
            probability_ckd: p,
            probability_ratio: (1.0 - p, p),
            margin: libm::fabs(p - threshold),
            dominant_feature: top_attributions[0].feature.clone(),
            top_attributions,
            counterfactual_distance,
            risk_factors_present: present,
            risk_factors_absent: absent,
        });
    }
    Ok(out)
}

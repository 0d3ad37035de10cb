//! Report documents (JSON) and their plain-text renderings.

use std::fmt::Write as _;

use nephroscope_core::anchors::AnchorRule;
use nephroscope_core::dependence::PdCurve;
use nephroscope_core::evaluation::{EvalMetrics, Selection};
use nephroscope_core::learners::{GridResult, Hyperparams, LearnerKind};
use nephroscope_core::local::{CounterfactualPair, PrototypeSet};
use nephroscope_core::pipeline::{FamilyResult, SplitCounts};
use nephroscope_core::safety::{ErrorAnalysis, SafetyReport, Status};
use nephroscope_core::shap::GlobalSummary;
use nephroscope_core::FeatureSchema;
use serde::Serialize;

use crate::csv_io::IngestReport;
use crate::model_file::RunManifest;

/// Left-aligned first column, right-aligned rest.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let n = headers.len();
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate().take(n) {
            width[i] = width[i].max(c.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, c) in cells.enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let pad = width[i] - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_owned()
    };
    let mut out = line(&mut headers.iter().copied());
    out.push('\n');
    out.push_str(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for r in rows {
        out.push_str(&line(&mut r.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}

fn f3(v: f64) -> String {
    format!("{v:.3}")
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

/// Up to 4 decimals without trailing zeros; hides inverse-scaling noise
/// such as `1.9299999999999997`.
fn short(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub params: Hyperparams,
    pub description: String,
    pub sensitivity: f64,
    pub specificity: f64,
    pub rocauc: f64,
    pub threshold: f64,
    pub floor_unattainable: bool,
    pub mean_model_size: f64,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridTable {
    pub kind: LearnerKind,
    pub rows: Vec<GridRow>,
}

impl From<&GridResult> for GridTable {
    fn from(g: &GridResult) -> Self {
        GridTable {
            kind: g.kind,
            rows: g
                .cells
                .iter()
                .enumerate()
                .map(|(i, c)| GridRow {
                    params: c.params.clone(),
                    description: c.params.describe(),
                    sensitivity: c.metrics.sensitivity,
                    specificity: c.metrics.specificity,
                    rocauc: c.metrics.rocauc,
                    threshold: c.metrics.threshold,
                    floor_unattainable: c.floor_unattainable,
                    mean_model_size: c.mean_model_size,
                    best: i == g.best,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Champion {
    pub kind: LearnerKind,
    pub params: Hyperparams,
    pub threshold: f64,
    /// Set when `select_model` fell back to input order.
    pub full_tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub manifest_digest: String,
    pub manifest: RunManifest,
    pub ingest: IngestReport,
    pub split: SplitCounts,
    pub grids: Vec<GridTable>,
    pub families: Vec<FamilyResult>,
    pub champion: Champion,
    pub test_metrics: EvalMetrics,
}

impl TrainReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        manifest: RunManifest,
        ingest: IngestReport,
        split: SplitCounts,
        grids: &[GridResult],
        families: Vec<FamilyResult>,
        selection: Selection,
        threshold: f64,
        test_metrics: EvalMetrics,
    ) -> Self {
        let fam = &families[selection.index];
        TrainReport {
            manifest_digest: manifest.digest(),
            champion: Champion {
                kind: fam.kind,
                params: fam.params.clone(),
                threshold,
                full_tie: selection.full_tie,
            },
            manifest,
            ingest,
            split,
            grids: grids.iter().map(GridTable::from).collect(),
            families,
            test_metrics,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "manifest {}", self.manifest_digest);
        let _ = writeln!(
            s,
            "records {} (no CKD {}, CKD {}); train {:?}, test {:?}, train after resampling {:?}\n",
            self.ingest.rows,
            self.ingest.label_counts[0],
            self.ingest.label_counts[1],
            self.split.train,
            self.split.test,
            self.split.train_resampled
        );
        if !self.ingest.missing_by_feature.is_empty() {
            let m: Vec<String> = self.ingest.missing_by_feature.iter().map(|(k, v)| format!("{k} {v}")).collect();
            let _ = writeln!(s, "imputed {}", m.join(", "));
        }
        for n in &self.ingest.out_of_range {
            let _ = writeln!(s, "warning: row {} {} = {} is outside its allowed range", n.row, n.feature, short(n.value));
        }
        if !self.ingest.missing_by_feature.is_empty() || !self.ingest.out_of_range.is_empty() {
            s.push('\n');
        }
        s.push_str("Cross-validation, best cell per family\n");
        let rows: Vec<Vec<String>> = self
            .families
            .iter()
            .map(|f| {
                vec![
                    f.kind.to_string(),
                    f3(f.cv_metrics.sensitivity),
                    f3(f.cv_metrics.specificity),
                    f3(f.cv_metrics.rocauc),
                    f4(f.cv_metrics.threshold),
                ]
            })
            .collect();
        s.push_str(&table(&["model", "sensitivity", "specificity", "roc_auc", "threshold"], &rows));
        s.push_str("\nTest partition\n");
        let rows: Vec<Vec<String>> = self
            .families
            .iter()
            .map(|f| {
                vec![
                    if f.kind == self.champion.kind {
                        format!("{} *", f.kind)
                    } else {
                        f.kind.to_string()
                    },
                    f3(f.test_metrics.sensitivity),
                    f3(f.test_metrics.specificity),
                    f3(f.test_metrics.rocauc),
                ]
            })
            .collect();
        s.push_str(&table(&["model", "sensitivity", "specificity", "roc_auc"], &rows));
        let _ = writeln!(
            s,
            "\nchampion {} ({}) at threshold {}",
            self.champion.kind,
            self.champion.params.describe(),
            f4(self.champion.threshold)
        );
        for g in &self.grids {
            let _ = writeln!(s, "\nGrid: {}", g.kind);
            let rows: Vec<Vec<String>> = g
                .rows
                .iter()
                .map(|r| {
                    vec![
                        format!("{}{}", if r.best { "* " } else { "  " }, r.description),
                        f3(r.sensitivity),
                        f3(r.specificity),
                        f3(r.rocauc),
                    ]
                })
                .collect();
            s.push_str(&table(&["params", "sensitivity", "specificity", "roc_auc"], &rows));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingRow {
    pub feature: String,
    pub mean_abs_phi: f64,
    pub rank: usize,
}

pub fn ranking_rows(g: &GlobalSummary) -> Vec<RankingRow> {
    g.ranking
        .iter()
        .enumerate()
        .map(|(r, &f)| RankingRow {
            feature: g.features[f].feature.clone(),
            mean_abs_phi: g.features[f].mean_abs_phi,
            rank: r + 1,
        })
        .collect()
}

pub fn global_text(g: &GlobalSummary) -> String {
    let rows: Vec<Vec<String>> = ranking_rows(g)
        .into_iter()
        .map(|r| vec![r.rank.to_string(), r.feature, format!("{:.5}", r.mean_abs_phi)])
        .collect();
    format!(
        "base value {}\n{}",
        f4(g.base_value),
        table(&["rank", "feature", "mean_abs_phi"], &rows)
    )
}

fn fmt_raw(schema: &FeatureSchema, f: usize, v: f64) -> String {
    if schema.spec(f).is_binary() {
        schema.binary_label(f, v).to_owned()
    } else {
        short(v)
    }
}

/// Feature rows, one column per prototype.
pub fn prototypes_text(schema: &FeatureSchema, set: &PrototypeSet) -> String {
    let mut headers = vec!["feature".to_owned()];
    headers.extend(set.members.iter().enumerate().map(|(i, p)| format!("P{} (#{})", i + 1, p.index)));
    let mut rows: Vec<Vec<String>> = (0..schema.len())
        .map(|f| {
            let mut r = vec![schema.name(f).to_owned()];
            r.extend(set.members.iter().map(|p| fmt_raw(schema, f, p.raw_values[f])));
            r
        })
        .collect();
    let mut class_row = vec!["predicted".to_owned()];
    class_row.extend(set.members.iter().map(|p| p.class.to_string()));
    rows.push(class_row);
    let mut cov = vec!["covered".to_owned()];
    cov.extend(set.members.iter().map(|p| p.covered_count.to_string()));
    rows.push(cov);
    let h: Vec<&str> = headers.iter().map(String::as_str).collect();
    format!("epsilon {}\n{}", f4(set.epsilon), table(&h, &rows))
}

/// Reference and counterfactual side by side; changed rows are starred.
pub fn counterfactual_text(schema: &FeatureSchema, reference_raw: &[f64], cf_raw: &[f64], pair: &CounterfactualPair) -> String {
    let rows: Vec<Vec<String>> = (0..schema.len())
        .map(|f| {
            let changed = pair.reference[f] != pair.counterfactual[f];
            vec![
                format!("{}{}", if changed { "* " } else { "  " }, schema.name(f)),
                fmt_raw(schema, f, reference_raw[f]),
                fmt_raw(schema, f, cf_raw[f]),
            ]
        })
        .chain([vec![
            "  prediction".to_owned(),
            format!("{} ({})", pair.reference_prediction, f3(pair.reference_probability)),
            format!("{} ({})", pair.counterfactual_prediction, f3(pair.counterfactual_probability)),
        ]])
        .collect();
    format!(
        "distance {} (pool record {})\n{}",
        f4(pair.distance),
        pair.pool_index,
        table(&["feature", "reference", "counterfactual"], &rows)
    )
}

pub fn pdp_text(c: &PdCurve) -> String {
    let rows: Vec<Vec<String>> = c
        .rows()
        .map(|(raw, scaled, pd)| vec![short(raw), format!("{scaled:.6}"), format!("{pd:.6}")])
        .collect();
    format!(
        "partial dependence of P(CKD) on {} over {} records\n{}",
        c.feature,
        c.n_averaged,
        table(&["feature_value_raw", "feature_value_scaled", "pd"], &rows)
    )
}

pub fn anchor_text(rule: &AnchorRule) -> String {
    let mut s = format!("{rule}\n");
    if !rule.meets_target {
        s.push_str("(no rule reached the precision target; best lower bound shown)\n");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyDocument {
    pub manifest_digest: String,
    pub report: SafetyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_analysis: Option<Vec<ErrorAnalysis>>,
}

pub fn safety_text(doc: &SafetyDocument) -> String {
    let r = &doc.report;
    let rows: Vec<Vec<String>> = r
        .verdicts
        .iter()
        .map(|v| {
            let status = match v.status {
                Status::Pass => "pass",
                Status::Fail if !v.blocking_failure => "warn",
                Status::Fail => "FAIL",
                Status::Error => "ERROR",
            };
            vec![
                v.id.clone(),
                format!("{:?}", v.severity).to_lowercase(),
                v.expected_class.to_string(),
                v.predicted_class.map_or("-".into(), |c| c.to_string()),
                v.probability_ckd.map_or("-".into(), f3),
                v.band_ok.map_or("-".into(), |b| if b { "in" } else { "out" }.into()),
                v.margin.map_or("-".into(), f3),
                status.to_owned(),
            ]
        })
        .collect();
    let mut s = format!("threshold {}\n", f4(r.threshold));
    s.push_str(&table(
        &["case", "severity", "expected", "predicted", "p_ckd", "band", "margin", "status"],
        &rows,
    ));
    for v in r.verdicts.iter().filter(|v| v.error.is_some()) {
        let _ = writeln!(s, "{}: {}", v.id, v.error.as_deref().unwrap_or_default());
    }
    for o in &r.orderings {
        let _ = writeln!(
            s,
            "ordering P({}) {} >= {}: {}{}",
            o.of,
            o.higher,
            o.lower,
            if o.holds { "holds" } else { "VIOLATED" },
            o.error.as_ref().map_or(String::new(), |e| format!(" ({e})"))
        );
    }
    let _ = writeln!(
        s,
        "{} pass, {} fail, {} error; {}",
        r.n_pass,
        r.n_fail,
        r.n_error,
        if r.passed { "suite passed" } else { "BLOCKING FAILURE" }
    );
    if let Some(errs) = &doc.error_analysis {
        let _ = writeln!(s, "\nMispredictions ({})", errs.len());
        let rows: Vec<Vec<String>> = errs
            .iter()
            .map(|e| {
                vec![
                    e.record.to_string(),
                    e.truth.to_string(),
                    format!("{:.2}:{:.2}", e.probability_ratio.0, e.probability_ratio.1),
                    e.dominant_feature.clone(),
                    e.counterfactual_distance.map_or("-".into(), f3),
                    e.risk_factors_present.join(" "),
                ]
            })
            .collect();
        s.push_str(&table(
            &["record", "truth", "no_ckd:ckd", "dominant", "cf_distance", "risk_factors"],
            &rows,
        ));
    }
    s
}

//! Command implementations shared by the CLI and the integration tests.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nephroscope_core::anchors::{induce_anchor, AnchorRule, PerturbationSpace};
use nephroscope_core::data::{apply_scaler, impute_with_rules, Dataset};
use nephroscope_core::dependence::{pd_curve, PdCurve, PdGrid};
use nephroscope_core::local::{select_prototypes, CounterfactualPair, PrototypeSet, ScoredPool};
use nephroscope_core::pipeline::{run_training, TrainOutcome};
use nephroscope_core::safety::{analyze_errors, run_suite, ErrorAnalysisInputs, SafetySuite};
use nephroscope_core::shap::{background_rows, global_summary, GlobalSummary};
use nephroscope_core::{Classifier, FeatureSchema};
use serde::Serialize;

use crate::config::AppConfig;
use crate::csv_io::{read_dataset, read_dataset_from, write_dataset};
use crate::fsio::{sha256_hex, to_json, write_atomic, write_json};
use crate::model_file::{schema_hash, ModelFile, RunManifest};
use crate::report::{self, SafetyDocument, TrainReport};
use crate::{AppError, AppResult};

pub const MODEL_FILE: &str = "model.json";
pub const POOL_FILE: &str = "pool.csv";
pub const TEST_FILE: &str = "test.csv";
pub const TRAIN_REPORT_JSON: &str = "train_report.json";
pub const TRAIN_REPORT_TEXT: &str = "train_report.txt";
pub const RUN_FILE: &str = "run.json";

pub struct TrainArtifacts {
    pub model: ModelFile,
    pub report: TrainReport,
    pub outcome: TrainOutcome,
}

/// Wall-clock record of a run. Kept out of the model file and reports so
/// those stay byte-identical across reruns.
#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    manifest_digest: &'a str,
    started_unix_s: u64,
    finished_unix_s: u64,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Ingest → impute → split → scale → grid search (resampling inside folds)
/// → select → refit → test; writes the model, the partitions and reports.
pub fn train(data: &Path, cfg: &AppConfig, out_dir: &Path) -> AppResult<TrainArtifacts> {
    let started = unix_now();
    let bytes = std::fs::read(data).map_err(|e| AppError::io(data, e))?;
    let schema = FeatureSchema::ckd();
    let (raw, ingest) = read_dataset_from(bytes.as_slice(), &schema)?;
    if !ingest.labeled {
        return Err(AppError::Data(format!(
            "{}: training data needs a `{}` column",
            data.display(),
            schema.target_name()
        )));
    }
    let outcome = run_training(&raw, &cfg.pipeline)?;
    let fam = outcome.champion_family();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_digest: cfg.digest(),
        dataset_digest: sha256_hex(&bytes),
        seed: cfg.pipeline.seed,
        schema_hash: schema_hash(&schema),
        champion: format!("{} {}", fam.kind, fam.params.describe()),
        threshold: outcome.threshold,
    };
    let model = ModelFile::new(
        schema,
        outcome.scaler.clone(),
        outcome.threshold,
        cfg.pipeline.threshold_policy,
        outcome.champion_params.clone(),
        outcome.champion.clone(),
        manifest.clone(),
    );
    let report = TrainReport::new(
        manifest,
        ingest,
        outcome.counts.clone(),
        &outcome.grids,
        outcome.families.clone(),
        outcome.selection,
        outcome.threshold,
        outcome.test_metrics,
    );
    write_dataset(&out_dir.join(POOL_FILE), &outcome.train_raw)?;
    write_dataset(&out_dir.join(TEST_FILE), &outcome.test_raw)?;
    write_json(&out_dir.join(TRAIN_REPORT_JSON), &report)?;
    write_atomic(&out_dir.join(TRAIN_REPORT_TEXT), report.to_text().as_bytes())?;
    model.save(&out_dir.join(MODEL_FILE))?;
    write_json(
        &out_dir.join(RUN_FILE),
        &RunRecord {
            manifest_digest: &model.manifest_digest,
            started_unix_s: started,
            finished_unix_s: unix_now(),
        },
    )?;
    Ok(TrainArtifacts { model, report, outcome })
}

/// `pool.csv` next to the model file.
pub fn default_pool_path(model_path: &Path) -> PathBuf {
    model_path.parent().unwrap_or(Path::new(".")).join(POOL_FILE)
}

/// Reads a raw CSV and fills gaps with the configured group means.
pub fn load_complete(path: &Path, schema: &FeatureSchema, cfg: &AppConfig) -> AppResult<Dataset> {
    let (raw, _) = read_dataset(path, schema)?;
    if raw.records.iter().any(|r| r.has_missing()) {
        Ok(impute_with_rules(&raw, &cfg.pipeline.imputation)?)
    } else {
        Ok(raw)
    }
}

/// [`load_complete`], then the model's scaler.
pub fn load_scaled(path: &Path, model: &ModelFile, cfg: &AppConfig) -> AppResult<Dataset> {
    Ok(apply_scaler(&load_complete(path, &model.schema, cfg)?, &model.scaler)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExplainMode {
    Global,
    Prototypes,
    Counterfactual { row: usize },
    Pdp { feature: String },
    Anchor { row: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExplainOutput {
    Global {
        summary: GlobalSummary,
        ranking: Vec<report::RankingRow>,
    },
    Prototypes {
        prototypes: PrototypeSet,
    },
    Counterfactual {
        row: usize,
        counterfactual: Option<CounterfactualPair>,
    },
    Pdp {
        curve: PdCurve,
    },
    Anchor {
        row: usize,
        rule: AnchorRule,
        rule_text: String,
    },
}

fn check_row(data: &Dataset, row: usize) -> AppResult<()> {
    if row >= data.len() {
        return Err(AppError::Usage(format!(
            "row {row} is out of range (data has {} records)",
            data.len()
        )));
    }
    Ok(())
}

/// `data` supplies the explained records, `pool` the background,
/// counterfactual candidates and perturbation distribution.
pub fn explain(model: &ModelFile, data: &Dataset, pool: &Dataset, mode: &ExplainMode, cfg: &AppConfig) -> AppResult<ExplainOutput> {
    let m = &model.model;
    Ok(match mode {
        ExplainMode::Global => {
            let bg = background_rows(pool, &cfg.shap);
            let summary = global_summary(m, data, &bg, &cfg.shap)?;
            ExplainOutput::Global {
                ranking: report::ranking_rows(&summary),
                summary,
            }
        }
        ExplainMode::Prototypes => ExplainOutput::Prototypes {
            prototypes: select_prototypes(data, m, model.threshold, &cfg.prototypes, &cfg.distance)?,
        },
        ExplainMode::Counterfactual { row } => {
            check_row(data, *row)?;
            let x = &data.records[*row].values;
            let scored = ScoredPool::new(pool, m, &cfg.distance)?;
            ExplainOutput::Counterfactual {
                row: *row,
                counterfactual: scored.nearest_opposite(x, m.predict_proba(x), model.threshold, &cfg.distance)?,
            }
        }
        ExplainMode::Pdp { feature } => {
            if model.schema.index_of(feature).is_none() {
                return Err(AppError::Usage(format!("unknown feature `{feature}`")));
            }
            ExplainOutput::Pdp {
                curve: pd_curve(m, data, feature, &PdGrid::Auto { n_points: cfg.pdp.n_points })?,
            }
        }
        ExplainMode::Anchor { row } => {
            check_row(data, *row)?;
            let space = PerturbationSpace::new(pool)?;
            let rule = induce_anchor(m, &data.records[*row].values, &space, model.threshold, &cfg.anchors)?;
            ExplainOutput::Anchor {
                row: *row,
                rule_text: rule.to_string(),
                rule,
            }
        }
    })
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn raw_table(schema: &FeatureSchema, columns: &[(String, Vec<f64>)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["feature".to_owned()];
    header.extend(columns.iter().map(|(h, _)| h.clone()));
    w.write_record(&header).expect("in-memory csv");
    for f in 0..schema.len() {
        let mut row = vec![schema.name(f).to_owned()];
        row.extend(columns.iter().map(|(_, v)| format!("{}", v[f])));
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Plain-text rendering of an explanation.
pub fn explain_text(model: &ModelFile, out: &ExplainOutput) -> String {
    let schema = &model.schema;
    match out {
        ExplainOutput::Global { summary, .. } => report::global_text(summary),
        ExplainOutput::Prototypes { prototypes } => report::prototypes_text(schema, prototypes),
        ExplainOutput::Counterfactual { counterfactual: None, .. } => {
            "no record in the pool receives the opposite prediction\n".into()
        }
        ExplainOutput::Counterfactual {
            counterfactual: Some(p),
            ..
        } => report::counterfactual_text(
            schema,
            &model.scaler.invert_record(&p.reference),
            &model.scaler.invert_record(&p.counterfactual),
            p,
        ),
        ExplainOutput::Pdp { curve } => report::pdp_text(curve),
        ExplainOutput::Anchor { rule, .. } => report::anchor_text(rule),
    }
}

/// Writes the JSON document plus the tabular exports for `out`; returns
/// the written paths.
pub fn write_explain(out_dir: &Path, model: &ModelFile, out: &ExplainOutput) -> AppResult<Vec<PathBuf>> {
    #[derive(Serialize)]
    struct Doc<'a> {
        manifest_digest: &'a str,
        #[serde(flatten)]
        output: &'a ExplainOutput,
    }
    let schema = &model.schema;
    let stem = match out {
        ExplainOutput::Global { .. } => "global".to_owned(),
        ExplainOutput::Prototypes { .. } => "prototypes".to_owned(),
        ExplainOutput::Counterfactual { row, .. } => format!("counterfactual_{row}"),
        ExplainOutput::Pdp { curve } => format!("pdp_{}", curve.feature),
        ExplainOutput::Anchor { row, .. } => format!("anchor_{row}"),
    };
    let mut files: Vec<(PathBuf, Vec<u8>)> = vec![(
        out_dir.join(format!("{stem}.json")),
        to_json(&Doc {
            manifest_digest: &model.manifest_digest,
            output: out,
        })
        .into_bytes(),
    )];
    match out {
        ExplainOutput::Global { summary, ranking } => {
            files.push((out_dir.join("global_ranking.csv"), csv_bytes(ranking)));
            #[derive(Serialize)]
            struct Point<'a> {
                instance_id: usize,
                feature: &'a str,
                phi: f64,
                raw_value: f64,
            }
            let points = summary.features.iter().flat_map(|f| {
                f.points.iter().enumerate().map(|(i, &(phi, raw))| Point {
                    instance_id: i,
                    feature: &f.feature,
                    phi,
                    raw_value: raw,
                })
            });
            files.push((out_dir.join("global_points.csv"), csv_bytes(points)));
        }
        ExplainOutput::Prototypes { prototypes } => {
            let cols: Vec<(String, Vec<f64>)> = prototypes
                .members
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("P{}", i + 1), p.raw_values.clone()))
                .collect();
            files.push((out_dir.join("prototypes.csv"), raw_table(schema, &cols)));
        }
        ExplainOutput::Counterfactual {
            counterfactual: Some(p),
            ..
        } => {
            let cols = vec![
                ("reference".to_owned(), model.scaler.invert_record(&p.reference)),
                ("counterfactual".to_owned(), model.scaler.invert_record(&p.counterfactual)),
            ];
            files.push((out_dir.join(format!("{stem}.csv")), raw_table(schema, &cols)));
        }
        ExplainOutput::Counterfactual { counterfactual: None, .. } => {}
        ExplainOutput::Pdp { curve } => {
            #[derive(Serialize)]
            struct Row {
                feature_value_raw: f64,
                feature_value_scaled: f64,
                pd: f64,
            }
            let rows = curve.rows().map(|(r, s, pd)| Row {
                feature_value_raw: r,
                feature_value_scaled: s,
                pd,
            });
            files.push((out_dir.join(format!("{stem}.csv")), csv_bytes(rows)));
        }
        ExplainOutput::Anchor { rule_text, .. } => {
            files.push((out_dir.join(format!("{stem}.txt")), format!("{rule_text}\n").into_bytes()));
        }
    }
    for (p, b) in &files {
        write_atomic(p, b)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Runs `suite`; with labeled `data`, also analyzes mispredictions.
pub fn safety(
    model: &ModelFile,
    suite: &SafetySuite,
    data: Option<&Dataset>,
    pool: Option<&Dataset>,
    cfg: &AppConfig,
) -> AppResult<SafetyDocument> {
    let report = run_suite(suite, &model.model, &model.schema, &model.scaler, model.threshold);
    let error_analysis = match data {
        Some(d) => {
            let bg_source = pool.unwrap_or(d);
            let bg = background_rows(bg_source, &cfg.shap);
            let scored = match pool {
                Some(p) => Some(ScoredPool::new(p, &model.model, &cfg.distance)?),
                None => None,
            };
            let inputs = ErrorAnalysisInputs {
                background: &bg,
                shap: &cfg.shap,
                pool: scored.as_ref(),
                distance: &cfg.distance,
            };
            Some(analyze_errors(&model.model, d, model.threshold, &inputs)?)
        }
        None => None,
    };
    Ok(SafetyDocument {
        manifest_digest: model.manifest_digest.clone(),
        report,
        error_analysis,
    })
}

pub const SAFETY_REPORT_JSON: &str = "safety_report.json";
pub const SAFETY_REPORT_TEXT: &str = "safety_report.txt";

pub fn write_safety(out_dir: &Path, doc: &SafetyDocument) -> AppResult<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| AppError::io(out_dir, e))?;
    write_json(&out_dir.join(SAFETY_REPORT_JSON), doc)?;
    write_atomic(&out_dir.join(SAFETY_REPORT_TEXT), report::safety_text(doc).as_bytes())
}

#[derive(Debug, Serialize)]
pub struct ModelCard<'a> {
    pub format: &'a str,
    pub format_version: u32,
    pub schema_hash: &'a str,
    pub manifest_digest: &'a str,
    pub manifest: &'a RunManifest,
    pub threshold: f64,
    pub model_kind: String,
    pub model_size: usize,
    pub features: Vec<&'a str>,
}

pub fn model_card(m: &ModelFile) -> ModelCard<'_> {
    ModelCard {
        format: &m.format,
        format_version: m.format_version,
        schema_hash: &m.schema_hash,
        manifest_digest: &m.manifest_digest,
        manifest: &m.manifest,
        threshold: m.threshold,
        model_kind: m.model.kind().to_string(),
        model_size: m.model.size(),
        features: (0..m.schema.len()).map(|i| m.schema.name(i)).collect(),
    }
}

pub fn model_card_text(m: &ModelFile) -> String {
    let c = model_card(m);
    let fields = [
        ("model", format!("{} ({} nodes/weights)", c.model_kind, c.model_size)),
        ("champion", c.manifest.champion.clone()),
        ("threshold", format!("{:.4}", c.threshold)),
        ("seed", c.manifest.seed.to_string()),
        ("dataset digest", c.manifest.dataset_digest.clone()),
        ("config digest", c.manifest.config_digest.clone()),
        ("schema hash", c.schema_hash.into()),
        ("manifest digest", c.manifest_digest.into()),
    ];
    fields.iter().map(|(k, v)| format!("{k:<16} {v}\n")).collect()
}

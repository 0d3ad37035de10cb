//! Command-line front end. [`run`] returns the process exit code:
//! 0 success, 1 usage error, 2 data or file error, 3 blocking safety failure.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nephroscope_core::safety::Severity;
use nephroscope_core::synth::{generate, SynthConfig};
use serde::Serialize;

use crate::commands::{self, ExplainMode};
use crate::config::{parse_threshold_policy, AppConfig};
use crate::csv_io::write_dataset;
use crate::fsio::to_json;
use crate::model_file::ModelFile;
use crate::report::safety_text;
use crate::service::{self, ServiceState};
use crate::suite::{default_suite, load_suite};
use crate::{AppError, AppResult};

#[derive(Debug, Parser)]
#[command(name = "nephroscope", version, about = "Explainable CKD screening: train, explain, audit, serve")]
struct Cli {
    /// TOML configuration; absent keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grid-search every learner family, select a champion, write the model.
    Train(TrainArgs),
    /// Global, local or dependence explanations for a trained model.
    Explain(ExplainArgs),
    /// Run the edge-case suite (and error analysis when --data is given).
    Safety(SafetyArgs),
    /// Serve predictions and explanations over HTTP.
    Serve(ServeArgs),
    /// Summarize a model file.
    Report(ReportArgs),
    /// Write a synthetic cohort with planted effects.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// max-sensitivity[:floor] or fixed:<t>
    #[arg(long)]
    threshold_policy: Option<String>,
    #[arg(long)]
    smote_k: Option<usize>,
    /// Minority/majority ratio after resampling.
    #[arg(long)]
    smote_ratio: Option<f64>,
    /// Train on the imbalanced data as is.
    #[arg(long, conflicts_with_all = ["smote_k", "smote_ratio"])]
    no_smote: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Global,
    Prototypes,
    Counterfactual,
    Pdp,
    Anchor,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(value_enum)]
    mode: Mode,
    #[arg(long)]
    model: PathBuf,
    /// Records to explain (raw CSV; the label column is optional).
    #[arg(long)]
    data: PathBuf,
    /// Background and counterfactual pool; defaults to pool.csv beside the model.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Record index for counterfactual and anchor.
    #[arg(long)]
    row: Option<usize>,
    /// Feature for pdp.
    #[arg(long)]
    feature: Option<String>,
    /// Also write JSON plus CSV/TXT exports here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SafetyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Suite file; the bundled edge cases when omitted.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Labeled records for error analysis.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, conflicts_with = "no_pool")]
    pool: Option<PathBuf>,
    /// Predictions only; explanation endpoints answer 503.
    #[arg(long)]
    no_pool: bool,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Directory of a built UI to host at `/`.
    #[arg(long)]
    serve_ui: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n: Option<usize>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> AppResult<AppConfig> {
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn emit<T: Serialize>(format: Format, value: &T, text: impl FnOnce() -> String) {
    let s = match format {
        Format::Json => to_json(value),
        Format::Text => text(),
    };
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(s.as_bytes());
    let _ = out.flush();
}

fn dispatch(cli: Cli) -> AppResult<()> {
    let mut cfg = load_config(&cli)?;
    let format = cli.format;
    match cli.command {
        Command::Train(a) => {
            if let Some(p) = &a.threshold_policy {
                cfg.pipeline.threshold_policy = parse_threshold_policy(p).map_err(AppError::Usage)?;
            }
            if a.no_smote {
                cfg.pipeline.smote = None;
            } else if a.smote_k.is_some() || a.smote_ratio.is_some() {
                let s = cfg.pipeline.smote.get_or_insert_with(Default::default);
                if let Some(k) = a.smote_k {
                    s.k_neighbors = k;
                }
                if let Some(r) = a.smote_ratio {
                    if !(r > 0.0 && r <= 1.0) {
                        return Err(AppError::Usage(format!("--smote-ratio {r} must be in (0, 1]")));
                    }
                    s.target_ratio = r;
                }
            }
            let art = commands::train(&a.data, &cfg, &a.out_dir)?;
            emit(format, &art.report, || art.report.to_text());
        }
        Command::Explain(a) => {
            let mode = match a.mode {
                Mode::Global => ExplainMode::Global,
                Mode::Prototypes => ExplainMode::Prototypes,
                Mode::Counterfactual => ExplainMode::Counterfactual { row: need_row(a.row)? },
                Mode::Anchor => ExplainMode::Anchor { row: need_row(a.row)? },
                Mode::Pdp => ExplainMode::Pdp {
                    feature: a
                        .feature
                        .clone()
                        .ok_or_else(|| AppError::Usage("pdp needs --feature".into()))?,
                },
            };
            let model = ModelFile::load(&a.model)?;
            let data = commands::load_scaled(&a.data, &model, &cfg)?;
            let pool_path = a.pool.clone().unwrap_or_else(|| commands::default_pool_path(&a.model));
            let pool = if a.pool.is_some() || pool_path.exists() {
                commands::load_scaled(&pool_path, &model, &cfg)?
            } else {
                data.clone()
            };
            let out = commands::explain(&model, &data, &pool, &mode, &cfg)?;
            if let Some(dir) = &a.out_dir {
                commands::write_explain(dir, &model, &out)?;
            }
            emit(format, &out, || commands::explain_text(&model, &out));
        }
        Command::Safety(a) => {
            let model = ModelFile::load(&a.model)?;
            let suite = match &a.suite {
                Some(p) => load_suite(p)?,
                None => default_suite(),
            };
            let data = a.data.as_deref().map(|p| commands::load_scaled(p, &model, &cfg)).transpose()?;
            let pool = a.pool.as_deref().map(|p| commands::load_scaled(p, &model, &cfg)).transpose()?;
            if data.as_ref().is_some_and(|d| d.labels().is_err()) {
                return Err(AppError::Data("error analysis needs labeled --data".into()));
            }
            let doc = commands::safety(&model, &suite, data.as_ref(), pool.as_ref(), &cfg)?;
            if let Some(dir) = &a.out_dir {
                commands::write_safety(dir, &doc)?;
            }
            emit(format, &doc, || safety_text(&doc));
            let r = &doc.report;
            let blocking = r.verdicts.iter().filter(|v| v.blocking_failure).count()
                + r.orderings
                    .iter()
                    .filter(|o| !o.holds && o.severity == Severity::Blocking)
                    .count();
            if !r.passed {
                return Err(AppError::BlockingSafetyFailure(blocking));
            }
        }
        Command::Serve(a) => serve(a, cfg)?,
        Command::Report(a) => {
            let model = ModelFile::load(&a.model)?;
            emit(format, &commands::model_card(&model), || commands::model_card_text(&model));
        }
        Command::Synth(a) => {
            let sc = SynthConfig {
                n: a.n.unwrap_or(cfg.synth.n),
                ..cfg.synth.clone()
            };
            let cohort = generate(&sc)?;
            write_dataset(&a.out, &cohort.dataset)?;
            let [neg, pos] = cohort.dataset.class_counts();
            eprintln!("wrote {} records ({pos} CKD, {neg} no CKD) to {}", cohort.dataset.len(), a.out.display());
        }
    }
    Ok(())
}

fn need_row(row: Option<usize>) -> AppResult<usize> {
    row.ok_or_else(|| AppError::Usage("this mode needs --row".into()))
}

fn serve(a: ServeArgs, cfg: AppConfig) -> AppResult<()> {
    let model = ModelFile::load(&a.model)?;
    let pool = if a.no_pool {
        None
    } else {
        let path = a.pool.clone().unwrap_or_else(|| commands::default_pool_path(&a.model));
        if a.pool.is_none() && !path.exists() {
            eprintln!("warning: {} not found; serving predictions only", path.display());
            None
        } else {
            Some(commands::load_complete(&path, &model.schema, &cfg)?)
        }
    };
    if let Some(dir) = &a.serve_ui {
        if !dir.is_dir() {
            return Err(AppError::Usage(format!("--serve-ui {} is not a directory", dir.display())));
        }
    }
    let addr = SocketAddr::new(a.host, a.port.unwrap_or(cfg.service.port));
    let state = Arc::new(ServiceState::new(model, pool, cfg)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::io(Path::new("<runtime>"), e))?;
    eprintln!("listening on http://{addr}");
    rt.block_on(service::serve(state, addr, a.serve_ui.as_deref()))
        .map_err(|e| AppError::io(Path::new(&addr.to_string()), e))
}

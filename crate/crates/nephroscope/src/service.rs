//! Read-only HTTP facade over a loaded model.
//!
//! Everything the handlers touch is built once at startup and shared
//! immutably: the model, the scored counterfactual pool, the SHAP
//! background and one partial-dependence curve per feature.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nephroscope_core::data::Dataset;
use nephroscope_core::dependence::{pd_curve, PdCurve, PdGrid};
use nephroscope_core::local::{CounterfactualPair, ScoredPool};
use nephroscope_core::schema::{InputIssue, RangeWarning};
use nephroscope_core::shap::{attribute, background_rows, Attribution};
use nephroscope_core::{Class, Classifier, FeatureKind};
use serde::Serialize;
use serde_json::Value;

use crate::config::AppConfig;
use crate::model_file::{ModelFile, RunManifest};
use crate::AppResult;

/// Version tag of the published response schema (docs/service.schema.json).
pub const API_VERSION: &str = "nephroscope-service/1";

struct Pool {
    raw: Dataset,
    scored: ScoredPool<'static>,
}

pub struct ServiceState {
    model: ModelFile,
    cfg: AppConfig,
    pool: Option<Pool>,
    background: Vec<Vec<f64>>,
    curves: BTreeMap<String, PdCurve>,
}

impl ServiceState {
    /// `pool_raw` is the imputed raw training partition; pass `None` to
    /// serve predictions only.
    pub fn new(model: ModelFile, pool_raw: Option<Dataset>, cfg: AppConfig) -> AppResult<Self> {
        let (pool, background, curves) = match pool_raw {
            Some(raw) => {
                let scaled = nephroscope_core::data::apply_scaler(&raw, &model.scaler)?;
                let background = background_rows(&scaled, &cfg.shap);
                let mut curves = BTreeMap::new();
                for f in 0..model.schema.len() {
                    let name = model.schema.name(f);
                    let grid = PdGrid::Auto {
                        n_points: cfg.pdp.n_points,
                    };
                    curves.insert(name.to_owned(), pd_curve(&model.model, &scaled, name, &grid)?);
                }
                let scored = ScoredPool::owned(scaled, &model.model, &cfg.distance)?;
                (Some(Pool { raw, scored }), background, curves)
            }
            None => (None, Vec::new(), BTreeMap::new()),
        };
        Ok(Self {
            model,
            cfg,
            pool,
            background,
            curves,
        })
    }

    pub fn model(&self) -> &ModelFile {
        &self.model
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    issue: Option<InputIssue>,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: msg.into(),
            feature: None,
            issue: None,
        }),
    )
        .into_response()
}

fn bad_field(feature: &str, msg: String, issue: Option<InputIssue>) -> Response {
    (
        StatusCode::BAD_REQUEST,
        Json(ErrorBody {
            error: msg,
            feature: Some(feature.to_owned()),
            issue,
        }),
    )
        .into_response()
}

struct Validated {
    raw: Vec<f64>,
    scaled: Vec<f64>,
    warnings: Vec<RangeWarning>,
}

/// Parses a JSON feature map; 400 names the first offending field.
fn validate(st: &ServiceState, body: &[u8]) -> Result<Validated, Box<Response>> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| Box::new(error(StatusCode::BAD_REQUEST, format!("body is not valid JSON: {e}"))))?;
    let Value::Object(map) = value else {
        return Err(Box::new(error(
            StatusCode::BAD_REQUEST,
            "body must be a JSON object of feature values",
        )));
    };
    let mut entries = Vec::with_capacity(map.len());
    for (k, v) in &map {
        match v.as_f64() {
            Some(x) => entries.push((k.as_str(), x)),
            None => return Err(Box::new(bad_field(k, format!("feature `{k}` must be a number"), None))),
        }
    }
    let (raw, warnings) = st
        .model
        .schema
        .record_from_map(entries)
        .map_err(|issue| Box::new(bad_field(issue.feature(), issue.to_string(), Some(issue.clone()))))?;
    Ok(Validated {
        scaled: st.model.scale(&raw),
        raw,
        warnings,
    })
}

/// 422 when any value was out of range; the payload is returned either way.
fn respond<T: Serialize>(warnings: &[RangeWarning], body: T) -> Response {
    let status = if warnings.is_empty() {
        StatusCode::OK
    } else {
        StatusCode::UNPROCESSABLE_ENTITY
    };
    (status, Json(body)).into_response()
}

#[derive(Debug, Serialize)]
struct PredictResponse<'a> {
    probability_ckd: f64,
    predicted_class: Class,
    threshold: f64,
    model_digest: &'a str,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    warnings: &'a [RangeWarning],
}

async fn predict(State(st): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let v = match validate(&st, &body) {
        Ok(v) => v,
        Err(r) => return *r,
    };
    let p = st.model.model.predict_proba(&v.scaled);
    respond(
        &v.warnings,
        PredictResponse {
            probability_ckd: p,
            predicted_class: Class::from_positive(p >= st.model.threshold),
            threshold: st.model.threshold,
            model_digest: &st.model.manifest_digest,
            warnings: &v.warnings,
        },
    )
}

/// Runs CPU-bound work off the async workers within the request budget.
/// A result that arrives late is discarded too, so the budget is a hard
/// bound rather than a timer granularity.
async fn budgeted<T, F>(st: &Arc<ServiceState>, f: F) -> Result<T, Response>
where
    T: Send + 'static,
    F: FnOnce(&ServiceState) -> T + Send + 'static,
{
    let budget = Duration::from_millis(st.cfg.service.request_budget_ms);
    let start = Instant::now();
    let st2 = Arc::clone(st);
    let over = || {
        error(
            StatusCode::SERVICE_UNAVAILABLE,
            format!("request budget of {} ms exceeded", budget.as_millis()),
        )
    };
    match tokio::time::timeout(budget, tokio::task::spawn_blocking(move || f(&st2))).await {
        Ok(Ok(_)) if start.elapsed() > budget => Err(over()),
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(error(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}"))),
        Err(_) => Err(over()),
    }
}

fn no_pool() -> Response {
    error(
        StatusCode::SERVICE_UNAVAILABLE,
        "no background pool loaded (start the service with --pool)",
    )
}

#[derive(Debug, Serialize)]
struct FeatureAttribution {
    feature: String,
    phi: f64,
    raw_value: f64,
}

#[derive(Debug, Serialize)]
struct ExplainResponse {
    #[serde(flatten)]
    attribution: Attribution,
    /// Feature names in schema order, aligned with `phis`.
    features: Vec<String>,
    /// Descending |phi|.
    ranked: Vec<FeatureAttribution>,
    probability_ckd: f64,
    predicted_class: Class,
    threshold: f64,
    model_digest: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<RangeWarning>,
}

async fn explain(State(st): State<Arc<ServiceState>>, body: Bytes) -> Response {
    if st.pool.is_none() {
        return no_pool();
    }
    let v = match validate(&st, &body) {
        Ok(v) => v,
        Err(r) => return *r,
    };
    let res = budgeted(&st, move |st| {
        let a = attribute(&st.model.model, &v.scaled, &st.background, &st.cfg.shap)?;
        let p = st.model.model.predict_proba(&v.scaled);
        let schema = &st.model.schema;
        Ok::<_, nephroscope_core::Error>((
            v.warnings,
            ExplainResponse {
                features: (0..schema.len()).map(|f| schema.name(f).to_owned()).collect(),
                ranked: a
                    .ranked()
                    .into_iter()
                    .map(|f| FeatureAttribution {
                        feature: schema.name(f).to_owned(),
                        phi: a.phis[f],
                        raw_value: v.raw[f],
                    })
                    .collect(),
                attribution: a,
                probability_ckd: p,
                predicted_class: Class::from_positive(p >= st.model.threshold),
                threshold: st.model.threshold,
                model_digest: st.model.manifest_digest.clone(),
                warnings: Vec::new(),
            },
        ))
    })
    .await;
    match res {
        Ok(Ok((warnings, mut body))) => {
            body.warnings = warnings;
            respond(&body.warnings.clone(), body)
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(r) => r,
    }
}

#[derive(Debug, Serialize)]
struct CounterfactualResponse {
    #[serde(flatten)]
    pair: CounterfactualPair,
    /// Raw-unit feature maps of both records.
    reference_raw: BTreeMap<String, f64>,
    counterfactual_raw: BTreeMap<String, f64>,
    threshold: f64,
    model_digest: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<RangeWarning>,
}

#[derive(Debug, Serialize)]
struct NotFound {
    error: &'static str,
    counterfactual: Option<()>,
}

async fn counterfactual(State(st): State<Arc<ServiceState>>, body: Bytes) -> Response {
    if st.pool.is_none() {
        return no_pool();
    }
    let v = match validate(&st, &body) {
        Ok(v) => v,
        Err(r) => return *r,
    };
    let res = budgeted(&st, move |st| {
        let pool = st.pool.as_ref().expect("checked above");
        let m = &st.model.model;
        let p = m.predict_proba(&v.scaled);
        let found = pool.scored.nearest_opposite(&v.scaled, p, st.model.threshold, &st.cfg.distance)?;
        let schema = &st.model.schema;
        let named = |vals: &[f64]| -> BTreeMap<String, f64> {
            (0..schema.len()).map(|f| (schema.name(f).to_owned(), vals[f])).collect()
        };
        Ok::<_, nephroscope_core::Error>(found.map(|pair| CounterfactualResponse {
            reference_raw: named(&v.raw),
            counterfactual_raw: named(&pool.raw.records[pair.pool_index].values),
            pair,
            threshold: st.model.threshold,
            model_digest: st.model.manifest_digest.clone(),
            warnings: v.warnings,
        }))
    })
    .await;
    match res {
        Ok(Ok(Some(body))) => respond(&body.warnings.clone(), body),
        Ok(Ok(None)) => (
            StatusCode::NOT_FOUND,
            Json(NotFound {
                error: "no counterfactual found",
                counterfactual: None,
            }),
        )
            .into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(r) => r,
    }
}

async fn pdp(State(st): State<Arc<ServiceState>>, Query(q): Query<HashMap<String, String>>) -> Response {
    let Some(name) = q.get("feature") else {
        return error(StatusCode::BAD_REQUEST, "missing query parameter `feature`");
    };
    let Some(f) = st.model.schema.index_of_ci(name) else {
        return error(StatusCode::NOT_FOUND, format!("unknown feature `{name}`"));
    };
    if st.pool.is_none() {
        return no_pool();
    }
    Json(&st.curves[st.model.schema.name(f)]).into_response()
}

#[derive(Debug, Serialize)]
struct MetaFeature<'a> {
    name: &'a str,
    kind: FeatureKind,
    unit: &'a str,
    allowed_range: Option<(f64, f64)>,
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    api_version: &'a str,
    features: Vec<MetaFeature<'a>>,
    target: &'a str,
    threshold: f64,
    model_kind: String,
    schema_hash: &'a str,
    manifest: &'a RunManifest,
    manifest_digest: &'a str,
    pool_size: usize,
    pdp_features: Vec<&'a str>,
}

async fn meta(State(st): State<Arc<ServiceState>>) -> Response {
    let m = &st.model;
    Json(Meta {
        api_version: API_VERSION,
        features: m
            .schema
            .specs()
            .iter()
            .map(|s| MetaFeature {
                name: &s.name,
                kind: s.kind,
                unit: &s.unit,
                allowed_range: s.allowed_range,
            })
            .collect(),
        target: m.schema.target_name(),
        threshold: m.threshold,
        model_kind: m.model.kind().to_string(),
        schema_hash: &m.schema_hash,
        manifest: &m.manifest,
        manifest_digest: &m.manifest_digest,
        pool_size: st.pool.as_ref().map_or(0, |p| p.raw.len()),
        pdp_features: st.curves.keys().map(String::as_str).collect(),
    })
    .into_response()
}

async fn health() -> &'static str {
    "ok"
}

/// The service routes; `ui_dir` adds static hosting of a built UI at `/`.
pub fn router(state: Arc<ServiceState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/predict", post(predict))
        .route("/explain", post(explain))
        .route("/counterfactual", post(counterfactual))
        .route("/pdp", get(pdp))
        .route("/meta", get(meta))
        .route("/health", get(health))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr, ui_dir: Option<&Path>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

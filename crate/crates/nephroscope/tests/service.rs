mod common;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::{assert_matches_def, fixture, load_schema};
use nephroscope::commands::load_complete;
use nephroscope::config::AppConfig;
use nephroscope::service::{router, ServiceState};
use nephroscope::suite::default_suite;
use nephroscope_core::Classifier;
use serde_json::{json, Value};
use tower::ServiceExt;

fn state() -> Arc<ServiceState> {
    static S: OnceLock<Arc<ServiceState>> = OnceLock::new();
    S.get_or_init(|| {
        let f = fixture();
        let pool = load_complete(&f.pool_path(), &f.model.schema, &f.cfg).unwrap();
        Arc::new(ServiceState::new(f.model.clone(), Some(pool), f.cfg.clone()).unwrap())
    })
    .clone()
}

fn app() -> Router {
    router(state(), None)
}

async fn send(app: Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b)),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

async fn post(app: Router, uri: &str, body: &Value) -> (StatusCode, Value) {
    let (s, b) = send(app, "POST", uri, Some(body.to_string())).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn get(app: Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = send(app, "GET", uri, None).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn case(id: &str) -> Value {
    let suite = default_suite();
    let c = suite.cases.iter().find(|c| c.id == id).unwrap();
    serde_json::to_value(&c.input).unwrap()
}

#[tokio::test]
async fn predict_matches_the_model_file() {
    let body = case("edge-2");
    let (s, v) = post(app(), "/predict", &body).await;
    assert_eq!(s, StatusCode::OK);
    assert_matches_def(&load_schema("docs/service.schema.json"), "predict", &v);
    let m = &fixture().model;
    let input: BTreeMap<String, f64> = serde_json::from_value(body).unwrap();
    let (raw, _) = m.schema.record_from_map(input.iter().map(|(k, v)| (k.as_str(), *v))).unwrap();
    let p = m.model.predict_proba(&m.scale(&raw));
    assert_eq!(v["probability_ckd"].as_f64().unwrap(), p);
    assert_eq!(v["model_digest"], m.manifest_digest.as_str());
    assert!(v.get("warnings").is_none());
}

#[tokio::test]
async fn bad_fields_are_named() {
    let mut body = case("edge-1");
    body["gender"] = json!("female");
    let (s, v) = post(app(), "/predict", &body).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["feature"], "gender");
    assert_matches_def(&load_schema("docs/service.schema.json"), "error", &v);

    let mut body = case("edge-1");
    body.as_object_mut().unwrap().remove("eGFR");
    let (s, v) = post(app(), "/explain", &body).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["feature"], "eGFR");
    assert_eq!(v["issue"]["issue"], "missing");

    let mut body = case("edge-1");
    body["DM"] = json!(2);
    let (s, v) = post(app(), "/counterfactual", &body).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["issue"]["issue"], "not_binary");

    let mut body = case("edge-1");
    body["potassium"] = json!(4.0);
    let (s, v) = post(app(), "/predict", &body).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["feature"], "potassium");

    let (s, _) = send(app(), "POST", "/predict", Some("[1, 2]".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = send(app(), "POST", "/predict", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn out_of_range_values_warn_but_still_predict() {
    let mut body = case("edge-1");
    body["age"] = json!(130);
    for ep in ["/predict", "/explain", "/counterfactual"] {
        let (s, v) = post(app(), ep, &body).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{ep}");
        assert_eq!(v["warnings"][0]["feature"], "age", "{ep}");
        assert_eq!(v["warnings"][0]["hi"], 120.0, "{ep}");
    }
    let (_, v) = post(app(), "/predict", &body).await;
    assert!(v["probability_ckd"].is_number());
}

#[tokio::test]
async fn explanation_adds_up_to_the_prediction() {
    let schema = load_schema("docs/service.schema.json");
    for id in ["edge-1", "edge-2", "edge-3", "edge-4", "edge-5"] {
        let body = case(id);
        let (s, e) = post(app(), "/explain", &body).await;
        assert_eq!(s, StatusCode::OK);
        assert_matches_def(&schema, "explain", &e);
        let (_, p) = post(app(), "/predict", &body).await;
        let total: f64 = e["base_value"].as_f64().unwrap()
            + e["phis"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum::<f64>();
        let prob = p["probability_ckd"].as_f64().unwrap();
        assert!((total - prob).abs() <= 1e-9, "{id}: {total} vs {prob}");
        assert_eq!(e["probability_ckd"], p["probability_ckd"]);
        assert_eq!(e["method"]["kind"], "tree_path");
        let ranked = e["ranked"].as_array().unwrap();
        assert_eq!(ranked.len(), 21);
        let mags: Vec<f64> = ranked.iter().map(|r| r["phi"].as_f64().unwrap().abs()).collect();
        assert!(mags.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[tokio::test]
async fn counterfactual_flips_the_prediction_when_resubmitted() {
    let schema = load_schema("docs/service.schema.json");
    for id in ["edge-1", "edge-2", "edge-5"] {
        let (s, c) = post(app(), "/counterfactual", &case(id)).await;
        assert_eq!(s, StatusCode::OK, "{id}");
        assert_matches_def(&schema, "counterfactual", &c);
        assert_ne!(c["reference_prediction"], c["counterfactual_prediction"]);
        let (s, p) = post(app(), "/predict", &c["counterfactual_raw"]).await;
        assert!(s == StatusCode::OK || s == StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(p["predicted_class"], c["counterfactual_prediction"], "{id}");
        assert_eq!(p["probability_ckd"], c["counterfactual_probability"], "{id}");
        // Every changed feature is listed, nothing else.
        let changed: Vec<&str> = c["changed_features"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x["feature"].as_str().unwrap())
            .collect();
        for (k, v) in c["reference_raw"].as_object().unwrap() {
            let differs = c["counterfactual_raw"][k] != *v;
            assert_eq!(differs, changed.contains(&k.as_str()), "{id} {k}");
        }
    }
}

#[tokio::test]
async fn no_counterfactual_is_404_with_an_empty_result() {
    let f = fixture();
    let m = &f.model;
    let mut pool = load_complete(&f.pool_path(), &m.schema, &f.cfg).unwrap();
    // Keep only records the model calls CKD, then ask about a CKD case.
    pool.records
        .retain(|r| m.model.predict_proba(&m.scale(&r.values)) >= m.threshold);
    let st = Arc::new(ServiceState::new(m.clone(), Some(pool), f.cfg.clone()).unwrap());
    let (s, v) = post(router(st, None), "/counterfactual", &case("edge-2")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["counterfactual"].is_null());
    assert_matches_def(&load_schema("docs/service.schema.json"), "no_counterfactual", &v);
}

#[tokio::test]
async fn pdp_lookup() {
    let (s, v) = get(app(), "/pdp?feature=egfr").await;
    assert_eq!(s, StatusCode::OK);
    assert_matches_def(&load_schema("docs/service.schema.json"), "pdp", &v);
    assert_eq!(v["feature"], "eGFR");
    let (s, v) = get(app(), "/pdp?feature=DM").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["grid_scaled"], json!([0.0, 1.0]));
    let (s, v) = get(app(), "/pdp?feature=creatinine_kinase").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["error"].as_str().unwrap().contains("creatinine_kinase"));
    let (s, _) = get(app(), "/pdp").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn meta_describes_the_loaded_model() {
    let (s, v) = get(app(), "/meta").await;
    assert_eq!(s, StatusCode::OK);
    assert_matches_def(&load_schema("docs/service.schema.json"), "meta", &v);
    let m = &fixture().model;
    assert_eq!(v["features"].as_array().unwrap().len(), 21);
    assert_eq!(v["features"][17]["name"], "eGFR");
    assert_eq!(v["threshold"].as_f64().unwrap(), m.threshold);
    assert_eq!(v["manifest_digest"], m.manifest_digest.as_str());
    assert_eq!(v["pdp_features"].as_array().unwrap().len(), 21);
    assert!(v["pool_size"].as_u64().unwrap() > 300);
    let (s, b) = send(app(), "GET", "/health", None).await;
    assert_eq!((s, b.as_slice()), (StatusCode::OK, b"ok".as_slice()));
}

#[tokio::test]
async fn without_a_pool_only_prediction_works() {
    let f = fixture();
    let st = Arc::new(ServiceState::new(f.model.clone(), None, f.cfg.clone()).unwrap());
    let body = case("edge-3");
    let (s, _) = post(router(st.clone(), None), "/predict", &body).await;
    assert_eq!(s, StatusCode::OK);
    for ep in ["/explain", "/counterfactual"] {
        let (s, _) = post(router(st.clone(), None), ep, &body).await;
        assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE, "{ep}");
    }
    let (s, _) = get(router(st.clone(), None), "/pdp?feature=age").await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    let (_, v) = get(router(st, None), "/meta").await;
    assert_eq!(v["pool_size"], 0);
}

#[tokio::test]
async fn identical_requests_give_identical_bytes() {
    let body = case("edge-4").to_string();
    for ep in ["/predict", "/explain", "/counterfactual"] {
        let a = send(app(), "POST", ep, Some(body.clone())).await;
        let b = send(app(), "POST", ep, Some(body.clone())).await;
        assert_eq!(a, b, "{ep}");
    }
}

#[tokio::test]
async fn exhausted_budget_is_503() {
    let f = fixture();
    let pool = load_complete(&f.pool_path(), &f.model.schema, &f.cfg).unwrap();
    let mut cfg: AppConfig = f.cfg.clone();
    cfg.service.request_budget_ms = 0;
    let st = Arc::new(ServiceState::new(f.model.clone(), Some(pool), cfg).unwrap());
    let (s, v) = post(router(st, None), "/explain", &case("edge-1")).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert!(v["error"].as_str().unwrap().contains("budget"));
}

#[tokio::test]
async fn serves_a_static_ui_beside_the_api() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<!doctype html><title>ui</title>").unwrap();
    let app = router(state(), Some(ui.path()));
    let (s, b) = send(app.clone(), "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(b).unwrap().contains("<title>ui</title>"));
    let (s, _) = send(app.clone(), "GET", "/meta", None).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = send(app, "GET", "/missing.js", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

//! Shared fixtures: a small forest trained once per test binary, and a
//! JSON-schema checker covering the keywords the published schemas use.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use nephroscope::commands::{self, MODEL_FILE, POOL_FILE, TEST_FILE};
use nephroscope::config::AppConfig;
use nephroscope::csv_io::write_dataset;
use nephroscope::model_file::ModelFile;
use nephroscope_core::synth::{generate, SynthConfig};
use serde_json::Value;

/// Small and quick, still a tree ensemble so SHAP is exact.
pub const FAST_CONFIG: &str = r#"
[pipeline]
cv_folds = 3

[[pipeline.grids]]
kind = "forest"
n_trees = [40]
max_depth = ["none"]
min_samples_leaf = [5]
max_features = [3]

[shap]
background_size = 32

[pdp]
n_points = 8
"#;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub data: PathBuf,
    pub config: PathBuf,
    pub cfg: AppConfig,
    pub out: PathBuf,
    pub model: ModelFile,
}

impl Fixture {
    pub fn model_path(&self) -> PathBuf {
        self.out.join(MODEL_FILE)
    }

    pub fn pool_path(&self) -> PathBuf {
        self.out.join(POOL_FILE)
    }

    pub fn test_path(&self) -> PathBuf {
        self.out.join(TEST_FILE)
    }
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("synthetic.csv");
        write_dataset(&data, &generate(&SynthConfig::default()).unwrap().dataset).unwrap();
        let config = dir.path().join("fast.toml");
        std::fs::write(&config, FAST_CONFIG).unwrap();
        let cfg = AppConfig::from_toml(FAST_CONFIG).unwrap();
        let out = dir.path().join("out");
        let art = commands::train(&data, &cfg, &out).unwrap();
        Fixture {
            dir,
            data,
            config,
            cfg,
            out,
            model: art.model,
        }
    })
}

pub fn repo_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn load_schema(rel: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(repo_file(rel)).unwrap()).unwrap()
}

/// Violations of `schema` by `value`, as JSON-pointer-ish paths.
pub fn schema_errors(root: &Value, schema: &Value, value: &Value) -> Vec<String> {
    let mut errs = Vec::new();
    walk(root, schema, value, "$", &mut errs);
    errs
}

/// Checks `value` against `#/$defs/<def>` of `root`.
pub fn assert_matches_def(root: &Value, def: &str, value: &Value) {
    let errs = schema_errors(root, &root["$defs"][def], value);
    assert!(errs.is_empty(), "{def}: {errs:#?}\nvalue: {value:#}");
}

fn type_ok(t: &str, v: &Value) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        other => panic!("unsupported type `{other}`"),
    }
}

fn walk(root: &Value, s: &Value, v: &Value, path: &str, errs: &mut Vec<String>) {
    let Some(obj) = s.as_object() else {
        panic!("schema at {path} is not an object");
    };
    for (key, kw) in obj {
        match key.as_str() {
            "$ref" => {
                let r = kw.as_str().unwrap();
                let name = r.strip_prefix("#/$defs/").unwrap_or_else(|| panic!("unsupported $ref {r}"));
                walk(root, &root["$defs"][name], v, path, errs);
            }
            "type" => {
                let ok = match kw {
                    Value::String(t) => type_ok(t, v),
                    Value::Array(ts) => ts.iter().any(|t| type_ok(t.as_str().unwrap(), v)),
                    _ => panic!("bad type keyword"),
                };
                if !ok {
                    errs.push(format!("{path}: expected type {kw}, got {v}"));
                }
            }
            "enum" => {
                if !kw.as_array().unwrap().contains(v) {
                    errs.push(format!("{path}: {v} not in {kw}"));
                }
            }
            "const" => {
                if kw != v {
                    errs.push(format!("{path}: expected {kw}, got {v}"));
                }
            }
            "required" => {
                if let Some(o) = v.as_object() {
                    for r in kw.as_array().unwrap() {
                        if !o.contains_key(r.as_str().unwrap()) {
                            errs.push(format!("{path}: missing `{}`", r.as_str().unwrap()));
                        }
                    }
                }
            }
            "properties" => {
                if let Some(o) = v.as_object() {
                    for (name, sub) in kw.as_object().unwrap() {
                        if let Some(x) = o.get(name) {
                            walk(root, sub, x, &format!("{path}.{name}"), errs);
                        }
                    }
                }
            }
            "additionalProperties" => {
                if let Some(o) = v.as_object() {
                    let declared = s.get("properties").and_then(Value::as_object);
                    for (name, x) in o {
                        if declared.is_some_and(|d| d.contains_key(name)) {
                            continue;
                        }
                        if kw == &Value::Bool(false) {
                            errs.push(format!("{path}: unexpected `{name}`"));
                        } else if kw.is_object() {
                            walk(root, kw, x, &format!("{path}.{name}"), errs);
                        }
                    }
                }
            }
            "items" => {
                if let Some(a) = v.as_array() {
                    for (i, x) in a.iter().enumerate() {
                        walk(root, kw, x, &format!("{path}[{i}]"), errs);
                    }
                }
            }
            "minItems" | "maxItems" => {
                if let Some(a) = v.as_array() {
                    let n = kw.as_u64().unwrap() as usize;
                    if (key == "minItems" && a.len() < n) || (key == "maxItems" && a.len() > n) {
                        errs.push(format!("{path}: {key} {n}, got {}", a.len()));
                    }
                }
            }
            "minimum" | "maximum" => {
                if let Some(x) = v.as_f64() {
                    let b = kw.as_f64().unwrap();
                    if (key == "minimum" && x < b) || (key == "maximum" && x > b) {
                        errs.push(format!("{path}: {x} violates {key} {b}"));
                    }
                }
            }
            "pattern" => {
                assert_eq!(kw, "^[0-9a-f]{64}$", "unsupported pattern");
                if let Some(x) = v.as_str() {
                    if x.len() != 64 || !x.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
                        errs.push(format!("{path}: `{x}` is not a sha256 hex digest"));
                    }
                }
            }
            "oneOf" => {
                let n = kw
                    .as_array()
                    .unwrap()
                    .iter()
                    .filter(|sub| schema_errors(root, sub, v).is_empty())
                    .count();
                if n != 1 {
                    errs.push(format!("{path}: matches {n} oneOf branches"));
                }
            }
            "$schema" | "$id" | "$defs" | "title" | "description" => {}
            other => panic!("unsupported keyword `{other}`"),
        }
    }
}

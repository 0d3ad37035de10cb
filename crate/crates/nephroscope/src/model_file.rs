//! Self-describing model file: one JSON document carrying the schema, its
//! hash, the scaler, the fitted model and the run manifest. Floats are
//! written with round-trip precision, so a reload predicts identically.
//!
//! No wall-clock time is stored; identical runs produce identical bytes.

use std::path::Path;

use nephroscope_core::data::ScalerParams;
use nephroscope_core::evaluation::ThresholdPolicy;
use nephroscope_core::learners::Hyperparams;
use nephroscope_core::{FeatureSchema, Model};
use serde::{Deserialize, Serialize};

use crate::fsio::{read_to_string, sha256_hex, to_json, write_atomic};
use crate::{AppError, AppResult};

pub const FORMAT: &str = "nephroscope-model";
pub const FORMAT_VERSION: u32 = 1;

pub fn schema_hash(schema: &FeatureSchema) -> String {
    sha256_hex(schema.fingerprint().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    pub dataset_digest: String,
    pub seed: u64,
    pub schema_hash: String,
    /// e.g. `forest n_trees=300 max_depth=none ...`
    pub champion: String,
    pub threshold: f64,
}

impl RunManifest {
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("manifest serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub format_version: u32,
    pub schema: FeatureSchema,
    pub schema_hash: String,
    pub scaler: ScalerParams,
    pub threshold: f64,
    pub threshold_policy: ThresholdPolicy,
    pub params: Hyperparams,
    pub model: Model,
    pub manifest: RunManifest,
    pub manifest_digest: String,
}

impl ModelFile {
    pub fn new(
        schema: FeatureSchema,
        scaler: ScalerParams,
        threshold: f64,
        threshold_policy: ThresholdPolicy,
        params: Hyperparams,
        model: Model,
        manifest: RunManifest,
    ) -> Self {
        Self {
            format: FORMAT.into(),
            format_version: FORMAT_VERSION,
            schema_hash: schema_hash(&schema),
            schema,
            scaler,
            threshold,
            threshold_policy,
            params,
            model,
            manifest_digest: manifest.digest(),
            manifest,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        to_json(self).into_bytes()
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let m: ModelFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), String> {
        if self.format != FORMAT {
            return Err(format!("not a model file (format `{}`)", self.format));
        }
        if self.format_version != FORMAT_VERSION {
            return Err(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        if schema_hash(&self.schema) != self.schema_hash {
            return Err("schema hash does not match the embedded schema".into());
        }
        if self.manifest.digest() != self.manifest_digest {
            return Err("manifest digest does not match the embedded manifest".into());
        }
        self.scaler.check_schema(&self.schema).map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        Self::parse(&read_to_string(path)?).map_err(|e| AppError::parse(path, e))
    }

    /// Scaled record from raw values.
    pub fn scale(&self, raw: &[f64]) -> Vec<f64> {
        self.scaler.scale_record(raw)
    }
}

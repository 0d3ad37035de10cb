//! Run configuration. Every algorithmic default lives here so a TOML file
//! can override any of them; absent keys keep their defaults.

use std::path::Path;

use nephroscope_core::anchors::AnchorConfig;
use nephroscope_core::evaluation::ThresholdPolicy;
use nephroscope_core::local::{DistanceConfig, PrototypeConfig};
use nephroscope_core::pipeline::PipelineConfig;
use nephroscope_core::shap::ShapConfig;
use nephroscope_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::fsio::{read_to_string, sha256_hex};
use crate::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdpConfig {
    pub n_points: usize,
}

impl Default for PdpConfig {
    fn default() -> Self {
        Self { n_points: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub port: u16,
    /// Per-request budget for explanation endpoints.
    pub request_budget_ms: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8750,
            request_budget_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub pipeline: PipelineConfig,
    pub shap: ShapConfig,
    pub distance: DistanceConfig,
    pub prototypes: PrototypeConfig,
    pub anchors: AnchorConfig,
    pub pdp: PdpConfig,
    pub synth: SynthConfig,
    pub service: ServiceConfig,
}

impl AppConfig {
    pub fn load(path: &Path) -> AppResult<Self> {
        Self::from_toml(&read_to_string(path)?).map_err(|e| AppError::parse(path, e))
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reseeds every stochastic component.
    pub fn set_seed(&mut self, seed: u64) {
        self.pipeline = std::mem::take(&mut self.pipeline).with_seed(seed);
        self.shap.seed = seed;
        self.prototypes.seed = seed;
        self.anchors.seed = seed;
        self.synth.seed = seed;
    }

    /// SHA-256 of the canonical JSON form; key order is fixed by the
    /// struct layout, so equal configs hash equal.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// `max-sensitivity`, `max-sensitivity:<floor>` or `fixed:<threshold>`.
pub fn parse_threshold_policy(s: &str) -> Result<ThresholdPolicy, String> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    let num = |a: &str| -> Result<f64, String> {
        let v: f64 = a.parse().map_err(|_| format!("`{a}` is not a number"))?;
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(format!("{v} is outside [0, 1]"))
        }
    };
    match (name, arg) {
        ("max-sensitivity", None) => Ok(ThresholdPolicy::default()),
        ("max-sensitivity", Some(a)) => Ok(ThresholdPolicy::MaxSensitivity {
            specificity_floor: num(a)?,
        }),
        ("fixed", Some(a)) => Ok(ThresholdPolicy::Fixed { threshold: num(a)? }),
        _ => Err(format!(
            "unknown threshold policy `{s}` (expected max-sensitivity[:floor] or fixed:<t>)"
        )),
    }
}

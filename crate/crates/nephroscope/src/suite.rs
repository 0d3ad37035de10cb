//! Safety suite files (TOML): `[[case]]` tables plus optional
//! `[[ordering]]` assertions.

use std::collections::BTreeSet;
use std::path::Path;

use nephroscope_core::safety::SafetySuite;

use crate::fsio::read_to_string;
use crate::{AppError, AppResult};

/// The five edge cases shipped with the tool.
pub const DEFAULT_SUITE: &str = include_str!("../assets/edge_cases.toml");

pub fn parse_suite(text: &str) -> Result<SafetySuite, String> {
    let suite: SafetySuite = toml::from_str(text).map_err(|e| e.to_string())?;
    let mut ids = BTreeSet::new();
    for c in &suite.cases {
        if !ids.insert(c.id.as_str()) {
            return Err(format!("duplicate case id `{}`", c.id));
        }
    }
    Ok(suite)
}

pub fn default_suite() -> SafetySuite {
    parse_suite(DEFAULT_SUITE).expect("bundled suite parses")
}

pub fn load_suite(path: &Path) -> AppResult<SafetySuite> {
    parse_suite(&read_to_string(path)?).map_err(|e| AppError::parse(path, e))
}

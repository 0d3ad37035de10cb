//! Feature schema for the clinical table.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bumped whenever the canonical schema changes shape.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    NoCkd,
    Ckd,
}

impl Class {
    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Class::Ckd
        } else {
            Class::NoCkd
        }
    }

    pub fn is_positive(self) -> bool {
        self == Class::Ckd
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Self {
        match self {
            Class::NoCkd => Class::Ckd,
            Class::Ckd => Class::NoCkd,
        }
    }

    /// Probability of this class given the probability of CKD.
    pub fn probability(self, p_ckd: f64) -> f64 {
        match self {
            Class::Ckd => p_ckd,
            Class::NoCkd => 1.0 - p_ckd,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::NoCkd => "no CKD",
            Class::Ckd => "CKD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    /// Encoded as exactly `0.0` or `1.0`.
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub unit: String,
    /// Plausible clinical range; values outside it are reported as warnings.
    pub allowed_range: Option<(f64, f64)>,
}

impl FeatureSpec {
    pub fn numeric(name: &str, unit: &str, range: (f64, f64)) -> Self {
        Self {
            name: name.to_owned(),
            kind: FeatureKind::Numeric,
            unit: unit.to_owned(),
            allowed_range: Some(range),
        }
    }

    pub fn binary(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            kind: FeatureKind::Binary,
            unit: String::new(),
            allowed_range: None,
        }
    }

    pub fn is_binary(&self) -> bool {
        self.kind == FeatureKind::Binary
    }

    pub fn in_range(&self, v: f64) -> bool {
        match self.allowed_range {
            Some((lo, hi)) => v >= lo && v <= hi,
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    specs: Vec<FeatureSpec>,
    target_name: String,
}

impl FeatureSchema {
    pub fn new(specs: Vec<FeatureSpec>, target_name: &str) -> Result<Self> {
        for (i, s) in specs.iter().enumerate() {
            if specs[..i].iter().any(|o| o.name.eq_ignore_ascii_case(&s.name)) {
                return Err(Error::DuplicateFeature(s.name.clone()));
            }
        }
        Ok(Self {
            specs,
            target_name: target_name.to_owned(),
        })
    }

    /// The 21-feature CKD schema, in canonical column order.
    pub fn ckd() -> Self {
        use FeatureSpec as F;
        let specs = alloc::vec![
            F::binary("gender"),
            F::numeric("age", "years", (0.0, 120.0)),
            F::binary("DM"),
            F::binary("CHD"),
            F::binary("Vascular_disease"),
            F::binary("smoking"),
            F::binary("HT"),
            F::binary("DLP"),
            F::binary("Obesity"),
            F::binary("DLP_meds"),
            F::binary("DM_meds"),
            F::binary("HT_meds"),
            F::binary("ACEI_ARB"),
            F::numeric("Chol", "mmol/L", (1.0, 15.0)),
            F::numeric("TG", "mmol/L", (0.1, 20.0)),
            F::numeric("HbA1C", "%", (3.0, 20.0)),
            F::numeric("Cr", "umol/L", (10.0, 1500.0)),
            F::numeric("eGFR", "mL/min/1.73m2", (0.0, 250.0)),
            F::numeric("SBP", "mmHg", (60.0, 260.0)),
            F::numeric("DBP", "mmHg", (30.0, 160.0)),
            F::numeric("BMI", "kg/m2", (10.0, 80.0)),
        ];
        Self::new(specs, "Label").expect("canonical schema has unique names")
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn spec(&self, index: usize) -> &FeatureSpec {
        &self.specs[index]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.specs[index].name
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.specs.iter().map(|s| s.kind).collect()
    }

    /// Exact-name lookup.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    /// Case-insensitive lookup, as used for CSV headers.
    pub fn index_of_ci(&self, name: &str) -> Option<usize> {
        self.specs
            .iter()
            .position(|s| s.name.eq_ignore_ascii_case(name.trim()))
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .or_else(|| self.index_of_ci(name))
            .ok_or_else(|| Error::UnknownFeature(name.to_owned()))
    }

    pub fn numeric_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.specs[i].is_binary()).collect()
    }

    pub fn binary_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.specs[i].is_binary()).collect()
    }

    /// Stable textual description used for schema hashing.
    pub fn fingerprint(&self) -> String {
        let mut out = String::new();
        for s in &self.specs {
            out.push_str(&s.name);
            out.push(':');
            out.push_str(match s.kind {
                FeatureKind::Numeric => "numeric",
                FeatureKind::Binary => "binary",
            });
            out.push(';');
        }
        out.push_str("target:");
        out.push_str(&self.target_name);
        out
    }

    /// Display form of a binary value for rule text and tables.
    pub fn binary_label(&self, index: usize, value: f64) -> &'static str {
        let on = value >= 0.5;
        if self.specs[index].name.eq_ignore_ascii_case("gender") {
            if on {
                "man"
            } else {
                "woman"
            }
        } else if on {
            "yes"
        } else {
            "no"
        }
    }
}

/// Why a raw feature map cannot become a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum InputIssue {
    Missing { feature: String },
    Unknown { feature: String },
    NotBinary { feature: String, value: f64 },
    NonFinite { feature: String },
}

impl InputIssue {
    pub fn feature(&self) -> &str {
        match self {
            InputIssue::Missing { feature }
            | InputIssue::Unknown { feature }
            | InputIssue::NotBinary { feature, .. }
            | InputIssue::NonFinite { feature } => feature,
        }
    }
}

impl fmt::Display for InputIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputIssue::Missing { feature } => write!(f, "missing feature `{feature}`"),
            InputIssue::Unknown { feature } => write!(f, "unknown feature `{feature}`"),
            InputIssue::NotBinary { feature, value } => {
                write!(f, "feature `{feature}` must be 0 or 1, got {value}")
            }
            InputIssue::NonFinite { feature } => write!(f, "feature `{feature}` is not a finite number"),
        }
    }
}

/// A value outside the feature's plausible clinical range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeWarning {
    pub feature: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl FeatureSchema {
    /// Raw record in schema order from a name → value map. Names match
    /// case-insensitively; every feature must be present exactly once.
    pub fn record_from_map<'a, I>(&self, entries: I) -> core::result::Result<(Vec<f64>, Vec<RangeWarning>), InputIssue>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut values = alloc::vec![f64::NAN; self.len()];
        let mut seen = alloc::vec![false; self.len()];
        for (name, v) in entries {
            let i = self.index_of_ci(name).ok_or_else(|| InputIssue::Unknown {
                feature: name.to_owned(),
            })?;
            let feature = self.specs[i].name.clone();
            if !v.is_finite() {
                return Err(InputIssue::NonFinite { feature });
            }
            if self.specs[i].is_binary() && v != 0.0 && v != 1.0 {
                return Err(InputIssue::NotBinary { feature, value: v });
            }
            values[i] = v;
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(InputIssue::Missing {
                feature: self.specs[i].name.clone(),
            });
        }
        let warnings = self
            .specs
            .iter()
            .zip(&values)
            .filter(|(s, v)| !s.in_range(**v))
            .map(|(s, &v)| {
                let (lo, hi) = s.allowed_range.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
                RangeWarning {
                    feature: s.name.clone(),
                    value: v,
                    lo,
                    hi,
                }
            })
            .collect();
        Ok((values, warnings))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_from_map_validates() {
        let s = FeatureSchema::ckd();
        let mut entries: Vec<(String, f64)> = (0..s.len()).map(|i| (s.name(i).into(), 1.0)).collect();
        entries[1].1 = 40.0;
        entries[13].1 = 5.0;
        entries[14].1 = 1.0;
        entries[15].1 = 5.5;
        entries[16].1 = 80.0;
        entries[17].1 = 300.0;
        entries[18].1 = 120.0;
        entries[19].1 = 80.0;
        entries[20].1 = 24.0;
        fn as_refs(e: &[(String, f64)]) -> Vec<(&str, f64)> {
            e.iter().map(|(k, v)| (k.as_str(), *v)).collect()
        }
        let (rec, warn) = s.record_from_map(as_refs(&entries)).unwrap();
        assert_eq!(rec[17], 300.0);
        assert_eq!(warn.len(), 1);
        assert_eq!(warn[0].feature, "eGFR");
        let mut bad = entries.clone();
        bad[0].1 = 2.0;
        assert_eq!(s.record_from_map(as_refs(&bad)).unwrap_err().feature(), "gender");
        let short = &entries[1..];
        assert_eq!(s.record_from_map(as_refs(short)).unwrap_err().feature(), "gender");
        let mut unknown = entries.clone();
        unknown.push(("Potassium".into(), 4.0));
        assert!(matches!(s.record_from_map(as_refs(&unknown)), Err(InputIssue::Unknown { .. })));
    }

    #[test]
    fn canonical_order_matches_table_layout() {
        let s = FeatureSchema::ckd();
        let names: Vec<&str> = (0..s.len()).map(|i| s.name(i)).collect();
        assert_eq!(
            names,
            [
                "gender", "age", "DM", "CHD", "Vascular_disease", "smoking", "HT", "DLP",
                "Obesity", "DLP_meds", "DM_meds", "HT_meds", "ACEI_ARB", "Chol", "TG", "HbA1C",
                "Cr", "eGFR", "SBP", "DBP", "BMI"
            ]
        );
        assert_eq!(s.numeric_indices().len(), 9);
        assert_eq!(s.binary_indices().len(), 12);
    }

    #[test]
    fn duplicate_names_rejected_case_insensitively() {
        let err = FeatureSchema::new(
            alloc::vec![FeatureSpec::binary("DM"), FeatureSpec::binary("dm")],
            "Label",
        )
        .unwrap_err();
        assert_eq!(err, Error::DuplicateFeature("dm".into()));
    }

    #[test]
    fn lookup_is_case_insensitive_for_headers() {
        let s = FeatureSchema::ckd();
        assert_eq!(s.index_of_ci(" egfr "), Some(17));
        assert_eq!(s.require("hba1c").unwrap(), 15);
        assert!(s.require("creatinine").is_err());
    }
}

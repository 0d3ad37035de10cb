use alloc::string::String;

use crate::schema::Class;

/// Errors raised by the core algorithms. Messages are prefixed with the
/// module that produced them.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("data: duplicate feature name `{0}`")]
    DuplicateFeature(String),
    #[error("data: unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("data: schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("data: missing value in record {record}, feature `{feature}`")]
    MissingValue { record: usize, feature: String },
    #[error("data: non-finite value in record {record}, feature `{feature}`")]
    NonFinite { record: usize, feature: String },
    #[error("data: imputation impossible: no donors for `{target}` in group {group}={value}")]
    ImputationImpossible {
        target: String,
        group: String,
        value: u8,
    },
    #[error("data: degenerate feature `{0}` (min == max)")]
    DegenerateFeature(String),
    #[error("data: class {0} has fewer than 2 records")]
    TooFewInClass(Class),
    #[error("data: record {0} has no label")]
    Unlabeled(usize),
    #[error("{module}: empty input")]
    Empty { module: &'static str },
    #[error("{module}: invalid parameter: {message}")]
    InvalidParameter {
        module: &'static str,
        message: String,
    },
    #[error("{module}: input contains a single class")]
    SingleClass { module: &'static str },
    #[error("local_explain: feature `{0}` has zero scale and fallback is disabled")]
    ZeroScale(String),
    #[error("shap: {0} features exceed the subset-enumeration guard of 12")]
    TooManyFeatures(usize),
    #[error("learners: grid cell {cell} cannot be fit: {reason}")]
    GridCell { cell: usize, reason: String },
    #[error("learners: fold {fold} validation contains synthetic record {record}")]
    SyntheticInValidation { fold: usize, record: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(module: &'static str, message: impl Into<String>) -> Error {
    Error::InvalidParameter {
        module,
        message: message.into(),
    }
}

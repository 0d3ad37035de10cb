//! Screening models and explanation algorithms for chronic-kidney-disease risk.
//!
//! The crate is `no_std` + `alloc`: everything here is a pure function of its
//! inputs and an explicit seed. File formats, the command line and the HTTP
//! service live in the `nephroscope` crate.
//!
//! Pipeline order is ingest → [`data::impute_group_mean`] →
//! [`data::split_stratified`] → [`data::fit_scaler`] → [`learners::grid_search`]
//! (with [`resample::smote_nc`] applied inside each fold) →
//! [`evaluation::select_model`] → final fit; see [`pipeline::run_training`].
//!
//! The explanation side covers global attribution ([`shap`]), prototypes and
//! counterfactuals ([`local`]), partial dependence ([`dependence`]), scoped
//! rules ([`anchors`]) and edge-case suites ([`safety`]).

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod anchors;
pub mod data;
pub mod dependence;
mod error;
pub mod evaluation;
pub mod learners;
pub mod local;
mod par;
pub mod pipeline;
pub mod resample;
pub mod safety;
pub mod schema;
pub mod shap;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use learners::{Classifier, Model};
pub use schema::{Class, FeatureKind, FeatureSchema, FeatureSpec};

//! File formats, reports, the command-line front end and the HTTP service
//! around `nephroscope-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod csv_io;
mod error;
pub mod fsio;
pub mod model_file;
pub mod report;
pub mod service;
pub mod suite;

pub use error::{AppError, AppResult};

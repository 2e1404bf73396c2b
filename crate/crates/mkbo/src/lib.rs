//! Experiment harness, CSV/JSON plumbing and the HTTP session service for
//! `mkbo-core`.

pub mod config;
pub mod data;
pub mod error;
pub mod plot;
pub mod service;
pub mod strategy;
pub mod suite;

pub use config::{ExperimentConfig, MethodConfig, Strategy};
pub use error::Error;

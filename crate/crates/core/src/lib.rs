//! Walk-forward nowcasting engine for quarterly GDP growth.
//!
//! The crate covers the full evaluation loop: ingestion and stationarity
//! screening, expanding-window splits with hyperparameter search, a family of
//! learners behind one contract, block-bootstrap uncertainty, importance
//! aggregation, Model Confidence Set screening with forecast combination,
//! and predictive-ability testing.

pub mod bootstrap;
pub mod combine;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod hpo;
pub mod learners;
pub mod linalg;
pub mod par;
pub mod pipeline;
pub mod stats;
pub mod synthetic;
pub mod windows;

pub use error::{Error, ErrorClass, Result};

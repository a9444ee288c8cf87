//! Tiered feature importance for quantum and classical classifiers.
//!
//! The crate simulates ZZ feature-map circuits exactly, trains fidelity-kernel
//! SVMs and variational classifiers on top of them, explains any classifier
//! with permutation importance or accumulated local effects, and aggregates
//! per-tier explanations into one accuracy-rewarded global ranking that can be
//! compared across model families and against expert rankings.

pub mod baseline;
pub mod config;
pub mod dataset;
pub mod diversity;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod qkernel;
pub mod qsim;
pub mod qsvc;
pub mod report;
pub mod tiers;
pub mod vqc;
pub mod xai;

pub use error::{QfiError, Result};

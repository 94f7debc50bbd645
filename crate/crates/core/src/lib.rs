//! Language-model oversampling for imbalanced tabular classification.
//!
//! The pipeline serializes minority rows (plus interpolations of them) into
//! sentences, trains a small decoder-only transformer on them, and samples new
//! minority rows with label- and feature-conditioned prompts. Classical SMOTE
//! baselines, an in-repo gradient-boosted classifier and the evaluation metrics
//! live alongside it.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod lm;
pub mod oversample;
pub mod rng;
pub mod textcodec;

pub use error::{Error, Result};

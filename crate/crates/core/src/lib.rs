//! Dialogue-relevance metrics and the evaluation protocol around them.
//!
//! The crate is organised around the files that flow between stages:
//!
//! * [`corpus`] normalizes relevance-annotated dialogue datasets into one
//!   JSON-lines schema and assigns train/valid/test splits.
//! * [`featurestore`] defines the exchange format for model-derived artifacts
//!   (pooled feature vectors, log-probabilities) and joins them to examples.
//! * [`baselines`] holds the closed-form prior metrics (cosine family,
//!   NORM-PROB, follow-up scoring).
//! * [`idk`] trains and applies the logistic relevance head over frozen
//!   next-sentence-prediction features.
//! * [`stats`] computes rank/linear correlations, permutation p-values,
//!   multi-seed aggregates and the domain-sensitivity ratio.
//! * [`nspprobe`] masks NSP features down to the top-k head dimensions and
//!   measures next-sentence-prediction accuracy.
//! * [`experiment`] and [`report`] orchestrate the ablation grid and render
//!   result tables.

pub mod baselines;
pub mod config;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod featurestore;
pub mod idk;
pub mod jsonl;
pub mod nspprobe;
pub mod report;
pub mod seeds;
pub mod stats;

pub use error::{Error, Result};

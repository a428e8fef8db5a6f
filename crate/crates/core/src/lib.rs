//! Team-interaction analytics: extract per-team conversational features from
//! timestamped chat transcripts, train L1-regularized logistic classifiers of
//! team viability at configurable percentile splits, and evaluate them with
//! stratified cross-validation, round holdout, condition splits, and
//! thin-sliced time windows.
//!
//! The crate is organized around the pipeline stages:
//!
//! * [`transcript`] — corpus data model, JSONL ingestion, viability scoring,
//!   percentile labeling.
//! * [`lexicon`] — tokenization and category word lists (word-choice
//!   categories, sentiment, argue markers, readability easy words).
//! * [`features`] — per-member measures and the canonical 42-entry team
//!   feature vector, over the full transcript or any time window.
//! * [`labels`] — aggregation of human annotator ratings into per-team values.
//! * [`model`] — standardization, lasso-logistic training, prediction,
//!   bootstrap coefficient intervals, model serialization.
//! * [`eval`] — AUC and threshold metrics, split plans, the evaluation
//!   protocols, and the seeded synthetic-corpus generator used as the
//!   end-to-end oracle.
//! * [`cli`] — the `viability` command-line surface.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod labels;
pub mod lexicon;
pub mod model;
pub mod seed;
pub mod transcript;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

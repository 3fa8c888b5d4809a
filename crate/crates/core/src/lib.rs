//! Nugget-based evaluation for retrieval-augmented conversational search.
//!
//! The crate covers the whole evaluation loop: reading collection artifacts
//! (topics, qrels, runs, nugget files), talking to LLM and entailment
//! backends, extracting and matching information nuggets, computing nugget,
//! surface and retrieval metrics, building assessment pools, and comparing
//! system rankings.
//!
//! Metric and correlation code is generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below pin the `f64` instantiation used by the reports.

pub mod analysis;
pub mod corpus;
pub mod dedup;
pub mod evaluate;
pub mod gateway;
pub mod matcher;
pub mod metrics;
pub mod nuggetizer;
pub mod pooling;
pub mod prompts;
mod scalar;
pub mod text;

pub use scalar::Scalar;

/// Score type used throughout reports and file formats.
pub type Score = f64;

pub type TurnMetrics = metrics::TurnMetrics<Score>;
pub type RunMetrics = metrics::RunMetrics<Score>;
pub type RougeScore = metrics::RougeScore<Score>;
pub type SystemRanking = analysis::SystemRanking<Score>;
pub type RetrievalScores = metrics::RetrievalScores<Score>;

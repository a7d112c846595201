//! End-to-end detection of fake real-estate listings.
//!
//! The pipeline turns raw listing text into multimodal tabular + text
//! features, cleans and spatially enriches them, trains a two-layer stacked
//! ensemble of from-scratch base learners via greedy ensemble selection, and
//! evaluates detection quality (metrics, permutation importance, feature-set
//! ablation). A deterministic synthetic-corpus generator makes the whole
//! system testable at desk scale.

pub mod bundle;
pub mod clean;
pub mod corpus;
pub mod ensemble;
pub mod eval;
pub mod extract;
pub mod featurize;
pub mod geo;
pub mod learners;
pub mod pipeline;
pub mod synth;
pub mod types;

pub use types::Label;

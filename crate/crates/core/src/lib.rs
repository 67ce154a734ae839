//! Engagement-aware subject line selection.
//!
//! Click logs from rule-based vs generated subject lines are turned into
//! preference pairs, a linear reward model is fit to them, and at serving
//! time the best of N candidates is chosen under that model, behind a
//! single-flight cache with retrying remote generation and a rule-based
//! fallback. A synthetic click simulator closes the loop for testing.

pub mod candidate;
pub mod generators;
pub mod jsonl;
pub mod metrics;
pub mod monitor;
pub mod pipeline;
pub mod reward;
pub mod selector;
pub mod serving;
pub mod simulator;
pub mod templates;
pub mod text;

pub use candidate::{Provenance, SubjectLineCandidate};

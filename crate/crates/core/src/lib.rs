//! Multistakeholder recommendation toolkit.
//!
//! Trains a baseline matrix-factorization recommender, re-ranks its output
//! for provider and system value (greedy profit re-ranking and
//! learning-to-re-rank with a Kendall-tau-kernel regularizer), enforces
//! fairness constraints via regularized training, and evaluates consumers,
//! providers, and the system with a shared metric suite.

pub mod dataset;
pub mod error;
pub mod fairness;
pub mod greedy;
pub mod lrr;
pub mod metrics;
pub mod mf;

pub use error::{Error, Result};

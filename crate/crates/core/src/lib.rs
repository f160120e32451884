//! Intrusion detection on NSL-KDD connection records.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`dataset`]: parse the 43-column files and map attack labels to categories.
//! 2. [`preprocess`]: reject outliers by median absolute deviation, one-hot the
//!    protocol/service/flag columns.
//! 3. [`features`]: drop mostly-zero numeric features, min-max scale the rest.
//! 4. [`neuralnet`] and [`models`]: greedy autoencoder pretraining, softmax head,
//!    fine-tuning, and the shallow MLP baseline, all optimized with scaled
//!    conjugate gradient.
//! 5. [`eval`]: confusion matrices and per-class metrics.
//!
//! [`pipeline`] wires the stages together and [`artifact`] persists the result.

pub mod artifact;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod models;
pub mod neuralnet;
pub mod pipeline;
pub mod preprocess;

pub use error::{Error, Result};

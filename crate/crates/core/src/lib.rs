//! Motion-guided modulation network for skeleton-based micro-action
//! recognition.
//!
//! - [`data`]: skeleton sequences, JSON-lines datasets, sampling,
//!   augmentation and a synthetic generator.
//! - [`model`]: the network, its parameters, checkpoints and complexity.
//! - [`train`]: learning-rate schedule, AdamW and the training loop.
//! - [`metrics`]: Top-k accuracy, F1 at body and action granularity,
//!   confusion matrices and score ensembling.

pub mod data;
pub mod error;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod train;

pub use error::{MmnError, Result};

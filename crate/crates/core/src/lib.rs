//! Banded ridge encoding models for multi-unit neural recordings, with
//! leakage-aware cross-validation, an autocorrelation control model and
//! variance-partitioning metrics.

pub mod error;
pub mod features;
pub mod matrixio;
pub mod metrics;
pub mod pipeline;
pub mod recording;
pub mod ridge;
pub mod splits;
pub mod stats;
pub mod synthgen;

pub use error::{Error, Result};
pub use recording::NeuralRecording;

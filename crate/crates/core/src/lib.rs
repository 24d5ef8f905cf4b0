//! Closed-loop retraining simulator and feedback-loop detectors.
//!
//! A model is trained on a sliding window of data, users consult its
//! predictions when they set prices, and those prices flow back into the
//! window the next model is trained on. The [`loop_sim`] module runs that
//! loop; [`detectors`] holds the tools for spotting it.

pub mod data;
pub mod detectors;
pub mod error;
pub mod loop_sim;
pub mod metrics;
pub mod models;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};

//! Interpretable combinatorial node classification.
//!
//! The crate estimates training-only statistics ([`stats`]), labels target
//! nodes with a confidence-ordered additive scoring rule ([`predict`]), tunes
//! the scoring weights by training-only cross-validation ([`tune`]), optionally
//! refines the result with a shallow graph-convolutional network
//! ([`refiner`]) and selects between the two on validation accuracy
//! ([`pipeline`]).

pub mod error;
pub mod graph;
pub mod par;
pub mod pipeline;
pub mod predict;
pub mod refiner;
pub mod stats;
pub mod tune;

pub use error::{Error, Result};
pub use graph::{FeatureModel, Graph, SplitSpec, SynthConfig};
pub use predict::{predict, Diagnostics, HyperParams, PredictionResult};
pub use stats::{StatsConfig, TrainStats};

//! Coreset selection and dataset-bias auditing.
//!
//! The pipeline is: build or load a [`LabeledDataset`], characterize each
//! sample with a [`ScoreVector`], pick a [`Coreset`] under a [`Policy`],
//! train a [`TrainedModel`] on it, then measure bias and per-group accuracy
//! with [`metrics`]. The [`harness`] module sweeps the whole grid.

pub mod characterize;
pub mod data;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod seed;
pub mod select;
pub mod trainer;

pub use characterize::{EmbeddingMatrix, ScoreMethod, ScoreVector};
pub use data::{
    generate_synthetic, group_table, GroupKey, GroupTable, LabeledDataset, SynthConfig,
};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, ResultRow};
pub use metrics::{bias_level, BiasReport, EvalReport};
pub use select::{Allocation, Coreset, Policy, SelectOptions};
pub use trainer::{train, DynamicsLog, TrainConfig, TrainedModel};

/// Written into every manifest and cache key.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

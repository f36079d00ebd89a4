//! Gap-aware graph-text alignment at desk scale.
//!
//! The crate trains a small message-passing encoder to align node embeddings
//! with frozen per-class text prototypes, while measuring the representation
//! gap (positive minus negative cosine similarity) every epoch. A monitor
//! watches the negative-pair similarity on a validation split and stops
//! training when its smoothed relative change leaves the healthy band, and a
//! graph-space linear probe compensates for directions the prototypes cannot
//! express, fused into the final prediction with a weighted softmax.
//!
//! Datasets are plain-text directories (see [`graphdata`]); synthetic
//! stochastic-block-model graphs stand in for real corpora. Everything is
//! deterministic given seeds.

pub mod cli;
pub mod dualspace;
pub mod encoder;
pub mod gapmetrics;
pub mod graphdata;
pub mod linalg;
pub mod monitor;
pub mod objectives;
pub mod trainer;

pub use graphdata::{load_graph, save_graph, SbmConfig, SplitSpec, TagGraph};
pub use trainer::{RunArtifacts, TrainConfig};

//! Core library for a hybrid neural recommender over implicit feedback.
//!
//! Pipeline: interaction logs are remapped to dense ids and split
//! leave-one-out; side features (hashed text, categorical labels) become
//! fixed-length index lists; independent scorers (GMF, MLP, feature
//! networks) are pre-trained with sampled negatives and then fused by
//! weighted concatenation of their final hidden layers; ranking quality is
//! measured as HR@k / NDCG@k over sampled candidate sets.

pub mod baselines;
pub mod data;
pub mod evaluation;
pub mod error;
pub mod graph;
pub mod models;
pub mod param;
pub mod rng;
pub mod sampling;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

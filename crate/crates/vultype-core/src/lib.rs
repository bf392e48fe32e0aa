//! Long-tailed vulnerability type classification.
//!
//! A dual-branch representation learner over function-level code: a
//! graph branch (gated node transform + differentiated propagation +
//! hybrid pooling) and a sequence branch (bidirectional recurrent
//! encoder + hybrid pooling), fused by addition and trained with an
//! adaptive re-weighting objective that shifts from a focal term to a
//! label-smoothing term over the course of training.
//!
//! Everything is deterministic for a fixed seed: one RNG stream with
//! derived sub-seeds, ordered maps, and single-threaded numerics.

pub mod codegraph;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod objectives;
pub mod seed;
pub mod training;

pub use error::{Error, Result};

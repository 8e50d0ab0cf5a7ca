//! Training neural networks whose synaptic weights live on a low-resolution
//! fixed-point grid.
//!
//! Weight updates are rounded onto the grid with one of several policies
//! (nearest, randomized rounding, randomized rounding with a coarse
//! probability), or a network trained at full precision is compressed
//! afterwards with 1-D k-means. Three models are provided: an MLP classifier,
//! an RBM trained with persistent contrastive divergence, and NADE.

pub mod data;
pub mod error;
pub mod models;
pub mod numerics;
pub mod quantize;
pub mod training;

pub use error::{Error, Result};

//! Dense linear algebra, activation functions and deterministic random streams.
//!
//! Everything runs at 64-bit precision. Only stored weights are ever
//! low-resolution; activations and gradients stay continuous.

mod activation;
mod matrix;
mod rng;

pub use activation::{log_sigmoid, sigmoid, softmax_row, softplus};
pub use matrix::Matrix;
pub use rng::{RngStream, StreamId, StreamPurpose};

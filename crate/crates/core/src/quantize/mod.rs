//! Resolution-reduction primitives.
//!
//! * [`Grid`]: the `2^i - 1` representable weight values of an `i`-bit weight.
//! * [`round_nearest`], [`rr`] and [`rr_coarse`]: deterministic, randomized and
//!   coarse-probability randomized rounding onto a grid.
//! * [`QuantPolicy`] and [`quantized_update`]: the rounded gradient step.
//! * [`kmeans_compress`]: offline 1-D k-means compression into a [`Codebook`].

mod grid;
mod kmeans;
mod rounding;

pub use grid::Grid;
pub use kmeans::{
    codebook_memory_bits, kmeans_compress, lloyd_1d, Codebook, LloydOutcome, KMEANS_MAX_ITER, KMEANS_RESTARTS,
};
pub use rounding::{quantize_probability, quantized_update, round_nearest, rr, rr_coarse, QuantPolicy};

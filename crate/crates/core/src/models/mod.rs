//! The three networks: an MLP classifier, an RBM trained with persistent
//! contrastive divergence, and NADE.
//!
//! Models expose their parameters as an ordered list of named tensors so the
//! training loop can apply a quantization policy tensor by tensor. Gradients
//! are always computed at full precision; quantization only enters through
//! the update.

mod mlp;
mod nade;
mod rbm;

use std::fmt;

pub use mlp::{MlpGrad, MlpParams};
pub use nade::{NadeGrad, NadeParams};
pub use rbm::{RbmGrad, RbmParams};

use crate::data::Dataset;
use crate::error::Result;
use crate::numerics::{Matrix, RngStream};
use crate::quantize::{round_nearest, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Weight,
    Bias,
}

pub struct ParamTensor<'a> {
    pub name: &'static str,
    pub kind: TensorKind,
    pub values: &'a [f64],
}

pub struct ParamTensorMut<'a> {
    pub name: &'static str,
    pub kind: TensorKind,
    pub values: &'a mut [f64],
}

/// Gradient of a batch objective, one entry per tensor in `params()` order.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub tensors: Vec<Vec<f64>>,
    /// Mean objective on the batch, when the model has a tractable one.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Mlp,
    Rbm,
    Nade,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Rbm => "rbm",
            ModelKind::Nade => "nade",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Percentage of misclassified examples.
    MisclassificationPercent,
    /// Mean negative log-likelihood per example, in nats.
    NegLogLikelihoodNats,
    /// Mean mean-field reconstruction cross-entropy per example, in nats.
    /// A trend proxy for RBMs, whose likelihood is intractable.
    ReconstructionCrossEntropyNats,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::MisclassificationPercent => "misclassification_pct",
            MetricKind::NegLogLikelihoodNats => "nll_nats",
            MetricKind::ReconstructionCrossEntropyNats => "recon_xent_nats",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub kind: MetricKind,
    pub value: f64,
}

/// A trainable network.
pub trait Network: Clone + Send + Sync {
    fn kind(&self) -> ModelKind;

    fn hidden_size(&self) -> usize;

    fn params(&self) -> Vec<ParamTensor<'_>>;

    fn params_mut(&mut self) -> Vec<ParamTensorMut<'_>>;

    /// Hook run once before training, e.g. to seed persistent chains.
    fn prepare(&mut self, _train: &Dataset, _batch_size: usize, _rng: &mut RngStream) -> Result<()> {
        Ok(())
    }

    /// Gradient of the training objective on a batch. Takes `&mut self`
    /// because some models carry sampler state across batches.
    fn batch_gradient(&mut self, inputs: &Matrix, labels: Option<&[usize]>, rng: &mut RngStream) -> Result<BatchGradient>;

    /// The model's reported performance measure on `data`.
    fn evaluate(&self, data: &Dataset) -> Result<Metric>;

    /// Number of entries in all weight (non-bias) tensors.
    fn weight_count(&self) -> usize {
        self.params()
            .iter()
            .filter(|t| t.kind == TensorKind::Weight)
            .map(|t| t.values.len())
            .sum()
    }

    /// Whether every weight tensor entry lies on `grid`.
    fn weights_on_grid(&self, grid: &Grid) -> bool {
        self.params()
            .iter()
            .filter(|t| t.kind == TensorKind::Weight)
            .all(|t| t.values.iter().all(|&w| grid.contains(w)))
    }
}

/// Evaluates `model` on `dataset`.
pub fn evaluate<N: Network>(model: &N, dataset: &Dataset) -> Result<Metric> {
    model.evaluate(dataset)
}

/// Uniform initialization on `[-r, r]` with
/// `r = min(1, 4·sqrt(6 / (fan_in + fan_out)))`, snapped to `grid` by
/// nearest rounding when one is given.
pub fn init_weights(rows: usize, cols: usize, fan_in: usize, fan_out: usize, grid: Option<&Grid>, rng: &mut RngStream) -> Matrix {
    let r = (4.0 * (6.0 / (fan_in + fan_out) as f64).sqrt()).min(1.0);
    let data = (0..rows * cols)
        .map(|_| {
            let w = (2.0 * rng.uniform() - 1.0) * r;
            match grid {
                Some(g) => round_nearest(w, g).expect("finite by construction"),
                None => w,
            }
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

pub(crate) fn ensure_nonempty(data: &Dataset) -> Result<()> {
    if data.is_empty() {
        Err(crate::Error::InvalidArgument(format!(
            "cannot evaluate on empty dataset {:?}",
            data.name
        )))
    } else {
        Ok(())
    }
}

pub(crate) fn check_features(expected: usize, got: usize, op: &'static str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(crate::Error::ShapeMismatch {
            op,
            left: (1, expected),
            right: (1, got),
        })
    }
}

pub(crate) fn check_binary(x: &[f64]) -> Result<()> {
    match x.iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(v) => Err(crate::Error::InvalidValue(format!("expected binary input, found {v}"))),
        None => Ok(()),
    }
}

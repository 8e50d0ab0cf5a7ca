use super::{
    check_features, ensure_nonempty, init_weights, BatchGradient, Metric, MetricKind, ModelKind, Network, ParamTensor,
    ParamTensorMut, TensorKind,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, softmax_row, Matrix, RngStream};
use crate::quantize::Grid;

/// One-hidden-layer perceptron: sigmoid hidden units, softmax output,
/// mean cross-entropy loss.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// input × hidden
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// hidden × classes
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Gradient of the mean cross-entropy, shaped like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

struct Activations {
    hidden: Matrix,
    probs: Matrix,
}

impl MlpParams {
    pub fn zeros(inputs: usize, hidden: usize, classes: usize) -> Self {
        Self {
            w1: Matrix::zeros(inputs, hidden),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(hidden, classes),
            b2: vec![0.0; classes],
        }
    }

    /// Random weights (see [`init_weights`]), zero biases.
    pub fn init(inputs: usize, hidden: usize, classes: usize, grid: Option<&Grid>, rng: &mut RngStream) -> Self {
        Self {
            w1: init_weights(inputs, hidden, inputs, hidden, grid, rng),
            b1: vec![0.0; hidden],
            w2: init_weights(hidden, classes, hidden, classes, grid, rng),
            b2: vec![0.0; classes],
        }
    }

    pub fn inputs(&self) -> usize {
        self.w1.rows()
    }

    pub fn classes(&self) -> usize {
        self.w2.cols()
    }

    fn activations(&self, x: &Matrix) -> Result<Activations> {
        let mut hidden = x.matmul(&self.w1)?;
        hidden.add_row_vector(&self.b1)?;
        for v in hidden.as_mut_slice() {
            *v = sigmoid(*v);
        }
        let mut probs = hidden.matmul(&self.w2)?;
        probs.add_row_vector(&self.b2)?;
        for r in 0..probs.rows() {
            softmax_row(probs.row_mut(r));
        }
        Ok(Activations { hidden, probs })
    }

    /// Class probabilities, one row per example.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.activations(x)?.probs)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let probs = self.forward(x)?;
        Ok(probs
            .iter_rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map_or(0, |(c, _)| c)
            })
            .collect())
    }

    /// Mean cross-entropy, computed through a log-softmax.
    pub fn loss(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        self.check_labels(x, labels)?;
        let mut hidden = x.matmul(&self.w1)?;
        hidden.add_row_vector(&self.b1)?;
        let hidden = hidden.map(sigmoid);
        let mut logits = hidden.matmul(&self.w2)?;
        logits.add_row_vector(&self.b2)?;
        let total: f64 = logits
            .iter_rows()
            .zip(labels)
            .map(|(row, &y)| {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                lse - row[y]
            })
            .sum();
        Ok(total / labels.len() as f64)
    }

    fn check_labels(&self, x: &Matrix, labels: &[usize]) -> Result<()> {
        check_features(self.inputs(), x.cols(), "mlp input")?;
        if labels.len() != x.rows() {
            return Err(Error::ShapeMismatch {
                op: "mlp labels",
                left: x.shape(),
                right: (labels.len(), 1),
            });
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.classes()) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside {} classes",
                self.classes()
            )));
        }
        Ok(())
    }

    /// Backpropagated gradient of the mean cross-entropy, and the loss itself.
    pub fn gradient(&self, x: &Matrix, labels: &[usize]) -> Result<(MlpGrad, f64)> {
        self.check_labels(x, labels)?;
        let n = labels.len() as f64;
        let Activations { hidden, probs } = self.activations(x)?;

        let mut loss = 0.0;
        let mut d_out = probs;
        for (r, &y) in labels.iter().enumerate() {
            let row = d_out.row_mut(r);
            loss -= row[y].max(f64::MIN_POSITIVE).ln();
            row[y] -= 1.0;
            for v in row.iter_mut() {
                *v /= n;
            }
        }

        let w2 = hidden.t_matmul(&d_out)?;
        let b2 = d_out.column_sums();
        let mut d_hidden = d_out.matmul_t(&self.w2)?;
        for (d, h) in d_hidden.as_mut_slice().iter_mut().zip(hidden.as_slice()) {
            *d *= h * (1.0 - h);
        }
        let w1 = x.t_matmul(&d_hidden)?;
        let b1 = d_hidden.column_sums();
        Ok((MlpGrad { w1, b1, w2, b2 }, loss / n))
    }

    pub fn misclassification_percent(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        self.check_labels(x, labels)?;
        let predicted = self.predict(x)?;
        let wrong = predicted.iter().zip(labels).filter(|(p, y)| p != y).count();
        Ok(100.0 * wrong as f64 / labels.len() as f64)
    }
}

impl Network for MlpParams {
    fn kind(&self) -> ModelKind {
        ModelKind::Mlp
    }

    fn hidden_size(&self) -> usize {
        self.w1.cols()
    }

    fn params(&self) -> Vec<ParamTensor<'_>> {
        vec![
            ParamTensor { name: "w1", kind: TensorKind::Weight, values: self.w1.as_slice() },
            ParamTensor { name: "b1", kind: TensorKind::Bias, values: &self.b1 },
            ParamTensor { name: "w2", kind: TensorKind::Weight, values: self.w2.as_slice() },
            ParamTensor { name: "b2", kind: TensorKind::Bias, values: &self.b2 },
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamTensorMut<'_>> {
        vec![
            ParamTensorMut { name: "w1", kind: TensorKind::Weight, values: self.w1.as_mut_slice() },
            ParamTensorMut { name: "b1", kind: TensorKind::Bias, values: &mut self.b1 },
            ParamTensorMut { name: "w2", kind: TensorKind::Weight, values: self.w2.as_mut_slice() },
            ParamTensorMut { name: "b2", kind: TensorKind::Bias, values: &mut self.b2 },
        ]
    }

    fn batch_gradient(&mut self, inputs: &Matrix, labels: Option<&[usize]>, _rng: &mut RngStream) -> Result<BatchGradient> {
        let labels = labels.ok_or_else(|| Error::InvalidArgument("MLP training needs labels".into()))?;
        let (g, loss) = self.gradient(inputs, labels)?;
        Ok(BatchGradient {
            tensors: vec![g.w1.into_vec(), g.b1, g.w2.into_vec(), g.b2],
            loss: Some(loss),
        })
    }

    fn evaluate(&self, data: &Dataset) -> Result<Metric> {
        ensure_nonempty(data)?;
        let labels = data
            .labels()
            .ok_or_else(|| Error::InvalidArgument("MLP evaluation needs labels".into()))?;
        Ok(Metric {
            kind: MetricKind::MisclassificationPercent,
            value: self.misclassification_percent(&data.inputs, labels)?,
        })
    }
}

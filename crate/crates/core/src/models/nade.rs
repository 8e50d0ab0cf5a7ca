use super::{
    check_binary, check_features, ensure_nonempty, init_weights, BatchGradient, Metric, MetricKind, ModelKind,
    Network, ParamTensor, ParamTensorMut, TensorKind,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{log_sigmoid, sigmoid, Matrix, RngStream};
use crate::quantize::Grid;

/// Neural autoregressive distribution estimator over binary vectors.
///
/// For position `d` in `ordering`, the hidden state is
/// `h_d = σ(b_hid + Σ_{e<d} W[:, o_e]·x_{o_e})` and
/// `P(x_{o_d} = 1 | x_{<d}) = σ(b_vis[o_d] + V[o_d, :]·h_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NadeParams {
    /// hidden × visible
    pub w: Matrix,
    /// visible × hidden
    pub v: Matrix,
    pub b_hid: Vec<f64>,
    pub b_vis: Vec<f64>,
    pub ordering: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NadeGrad {
    pub w: Matrix,
    pub v: Matrix,
    pub b_hid: Vec<f64>,
    pub b_vis: Vec<f64>,
}

impl NadeGrad {
    fn zeros(hidden: usize, visible: usize) -> Self {
        Self {
            w: Matrix::zeros(hidden, visible),
            v: Matrix::zeros(visible, hidden),
            b_hid: vec![0.0; hidden],
            b_vis: vec![0.0; visible],
        }
    }

    fn scale(&mut self, s: f64) {
        for x in self
            .w
            .as_mut_slice()
            .iter_mut()
            .chain(self.v.as_mut_slice())
            .chain(&mut self.b_hid)
            .chain(&mut self.b_vis)
        {
            *x *= s;
        }
    }
}

impl NadeParams {
    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self {
            w: Matrix::zeros(hidden, visible),
            v: Matrix::zeros(visible, hidden),
            b_hid: vec![0.0; hidden],
            b_vis: vec![0.0; visible],
            ordering: (0..visible).collect(),
        }
    }

    /// Random weights, zero biases, natural ordering.
    pub fn init(visible: usize, hidden: usize, grid: Option<&Grid>, rng: &mut RngStream) -> Self {
        Self {
            w: init_weights(hidden, visible, visible, hidden, grid, rng),
            v: init_weights(visible, hidden, hidden, visible, grid, rng),
            b_hid: vec![0.0; hidden],
            b_vis: vec![0.0; visible],
            ordering: (0..visible).collect(),
        }
    }

    /// Replaces the natural ordering with a random permutation.
    pub fn with_random_ordering(mut self, rng: &mut RngStream) -> Self {
        self.ordering = rng.permutation(self.visible());
        self
    }

    pub fn visible(&self) -> usize {
        self.b_vis.len()
    }

    pub fn hidden(&self) -> usize {
        self.b_hid.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        check_features(self.visible(), x.len(), "nade input")?;
        check_binary(x)
    }

    /// Walks the autoregressive chain, calling `visit(d, o_d, h_d, logit_d)`.
    fn walk(&self, x: &[f64], mut visit: impl FnMut(usize, usize, &[f64], f64)) {
        let hidden = self.hidden();
        let visible = self.visible();
        let mut a = self.b_hid.clone();
        let mut h = vec![0.0; hidden];
        let w = self.w.as_slice();
        for (d, &o) in self.ordering.iter().enumerate() {
            for (hj, aj) in h.iter_mut().zip(&a) {
                *hj = sigmoid(*aj);
            }
            let logit = self.b_vis[o] + h.iter().zip(self.v.row(o)).map(|(p, q)| p * q).sum::<f64>();
            visit(d, o, &h, logit);
            if x[o] != 0.0 {
                for (j, aj) in a.iter_mut().enumerate() {
                    *aj += w[j * visible + o] * x[o];
                }
            }
        }
    }

    /// `log P(x)`.
    pub fn logprob(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut total = 0.0;
        self.walk(x, |_, o, _, logit| {
            total += if x[o] == 1.0 {
                log_sigmoid(logit)
            } else {
                log_sigmoid(-logit)
            };
        });
        Ok(total)
    }

    /// Gradient of `-log P(x)` for one example, accumulated into `grad`.
    fn accumulate_gradient(&self, x: &[f64], grad: &mut NadeGrad) -> f64 {
        let hidden = self.hidden();
        let visible = self.visible();
        let dims = self.ordering.len();
        let mut hs = vec![0.0; dims * hidden];
        let mut logits = vec![0.0; dims];
        self.walk(x, |d, _, h, logit| {
            hs[d * hidden..(d + 1) * hidden].copy_from_slice(h);
            logits[d] = logit;
        });

        let mut nll = 0.0;
        // Sum of d(-log P)/d(pre-activation) over positions after the current one.
        let mut acc = vec![0.0; hidden];
        for d in (0..dims).rev() {
            let o = self.ordering[d];
            let xo = x[o];
            if xo != 0.0 {
                for j in 0..hidden {
                    grad.w.as_mut_slice()[j * visible + o] += acc[j] * xo;
                }
            }
            let logit = logits[d];
            nll -= if xo == 1.0 { log_sigmoid(logit) } else { log_sigmoid(-logit) };
            let t = sigmoid(logit) - xo;
            grad.b_vis[o] += t;
            let h = &hs[d * hidden..(d + 1) * hidden];
            let v_row = self.v.row(o);
            let gv = grad.v.row_mut(o);
            for j in 0..hidden {
                gv[j] += t * h[j];
                acc[j] += t * v_row[j] * h[j] * (1.0 - h[j]);
            }
        }
        for (g, a) in grad.b_hid.iter_mut().zip(&acc) {
            *g += a;
        }
        nll
    }

    /// Gradient of `-log P(x)`.
    pub fn gradient(&self, x: &[f64]) -> Result<NadeGrad> {
        self.check_input(x)?;
        let mut grad = NadeGrad::zeros(self.hidden(), self.visible());
        self.accumulate_gradient(x, &mut grad);
        Ok(grad)
    }

    /// Mean gradient and mean negative log-likelihood over the rows of `batch`.
    pub fn batch_gradient_mean(&self, batch: &Matrix) -> Result<(NadeGrad, f64)> {
        if batch.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut grad = NadeGrad::zeros(self.hidden(), self.visible());
        let mut nll = 0.0;
        for row in batch.iter_rows() {
            self.check_input(row)?;
            nll += self.accumulate_gradient(row, &mut grad);
        }
        let n = batch.rows() as f64;
        grad.scale(1.0 / n);
        Ok((grad, nll / n))
    }

    /// Mean negative log-likelihood in nats.
    pub fn mean_nll(&self, data: &Matrix) -> Result<f64> {
        let mut total = 0.0;
        for row in data.iter_rows() {
            total -= self.logprob(row)?;
        }
        Ok(total / data.rows() as f64)
    }
}

impl Network for NadeParams {
    fn kind(&self) -> ModelKind {
        ModelKind::Nade
    }

    fn hidden_size(&self) -> usize {
        self.hidden()
    }

    fn params(&self) -> Vec<ParamTensor<'_>> {
        vec![
            ParamTensor { name: "w", kind: TensorKind::Weight, values: self.w.as_slice() },
            ParamTensor { name: "v", kind: TensorKind::Weight, values: self.v.as_slice() },
            ParamTensor { name: "b_hid", kind: TensorKind::Bias, values: &self.b_hid },
            ParamTensor { name: "b_vis", kind: TensorKind::Bias, values: &self.b_vis },
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamTensorMut<'_>> {
        vec![
            ParamTensorMut { name: "w", kind: TensorKind::Weight, values: self.w.as_mut_slice() },
            ParamTensorMut { name: "v", kind: TensorKind::Weight, values: self.v.as_mut_slice() },
            ParamTensorMut { name: "b_hid", kind: TensorKind::Bias, values: &mut self.b_hid },
            ParamTensorMut { name: "b_vis", kind: TensorKind::Bias, values: &mut self.b_vis },
        ]
    }

    fn batch_gradient(&mut self, inputs: &Matrix, _labels: Option<&[usize]>, _rng: &mut RngStream) -> Result<BatchGradient> {
        let (g, nll) = self.batch_gradient_mean(inputs)?;
        Ok(BatchGradient {
            tensors: vec![g.w.into_vec(), g.v.into_vec(), g.b_hid, g.b_vis],
            loss: Some(nll),
        })
    }

    fn evaluate(&self, data: &Dataset) -> Result<Metric> {
        ensure_nonempty(data)?;
        Ok(Metric {
            kind: MetricKind::NegLogLikelihoodNats,
            value: self.mean_nll(&data.inputs)?,
        })
    }
}

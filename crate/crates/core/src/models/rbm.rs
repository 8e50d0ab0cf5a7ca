use super::{
    check_binary, check_features, ensure_nonempty, init_weights, BatchGradient, Metric, MetricKind, ModelKind,
    Network, ParamTensor, ParamTensorMut, TensorKind,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, softplus, Matrix, RngStream, StreamId, StreamPurpose};
use crate::quantize::Grid;

/// Binary-binary restricted Boltzmann machine with persistent negative chains.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    /// visible × hidden
    pub w: Matrix,
    pub b_vis: Vec<f64>,
    pub b_hid: Vec<f64>,
    /// Persistent chain states, chains × visible, binary.
    pub chains: Matrix,
    /// Full Gibbs sweeps per training step (15 for PCD-15).
    pub gibbs_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbmGrad {
    pub w: Matrix,
    pub b_vis: Vec<f64>,
    pub b_hid: Vec<f64>,
}

impl RbmParams {
    pub const DEFAULT_GIBBS_STEPS: usize = 15;

    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self {
            w: Matrix::zeros(visible, hidden),
            b_vis: vec![0.0; visible],
            b_hid: vec![0.0; hidden],
            chains: Matrix::zeros(0, visible),
            gibbs_steps: Self::DEFAULT_GIBBS_STEPS,
        }
    }

    /// Random weights, zero biases, no chains yet.
    pub fn init(visible: usize, hidden: usize, grid: Option<&Grid>, rng: &mut RngStream) -> Self {
        Self {
            w: init_weights(visible, hidden, visible, hidden, grid, rng),
            ..Self::zeros(visible, hidden)
        }
    }

    pub fn visible(&self) -> usize {
        self.b_vis.len()
    }

    pub fn hidden(&self) -> usize {
        self.b_hid.len()
    }

    pub fn set_chains(&mut self, chains: Matrix) -> Result<()> {
        check_features(self.visible(), chains.cols(), "rbm chains")?;
        check_binary(chains.as_slice())?;
        self.chains = chains;
        Ok(())
    }

    /// `F(v) = -b_vis·v - Σ_j softplus(b_hid_j + (Wᵀv)_j)`.
    pub fn free_energy(&self, v: &[f64]) -> Result<f64> {
        check_features(self.visible(), v.len(), "rbm free energy")?;
        check_binary(v)?;
        let visible_term: f64 = self.b_vis.iter().zip(v).map(|(b, x)| b * x).sum();
        let hidden_term: f64 = (0..self.hidden())
            .map(|j| {
                let z = self.b_hid[j] + (0..self.visible()).map(|i| v[i] * self.w[(i, j)]).sum::<f64>();
                softplus(z)
            })
            .sum();
        Ok(-visible_term - hidden_term)
    }

    /// `P(h_j = 1 | v)` for every row of `v`.
    pub fn hidden_probs(&self, v: &Matrix) -> Result<Matrix> {
        let mut z = v.matmul(&self.w)?;
        z.add_row_vector(&self.b_hid)?;
        Ok(z.map(sigmoid))
    }

    fn visible_logits(&self, h: &Matrix, w_t: &Matrix) -> Result<Matrix> {
        let mut z = h.matmul(w_t)?;
        z.add_row_vector(&self.b_vis)?;
        Ok(z)
    }

    /// `P(v_i = 1 | h)` for every row of `h`.
    pub fn visible_probs(&self, h: &Matrix) -> Result<Matrix> {
        Ok(self.visible_logits(h, &self.w.transpose())?.map(sigmoid))
    }

    fn sample_bernoulli(probs: &Matrix, rng: &mut RngStream) -> Matrix {
        probs.map(|p| if rng.uniform() < p { 1.0 } else { 0.0 })
    }

    /// One full sweep `v → h → v'`; also returns `P(v' | h)`.
    fn gibbs_sweep(&self, v: &Matrix, w_t: &Matrix, rng: &mut RngStream) -> Result<(Matrix, Matrix)> {
        let h = Self::sample_bernoulli(&self.hidden_probs(v)?, rng);
        let pv = self.visible_logits(&h, w_t)?.map(sigmoid);
        let v_next = Self::sample_bernoulli(&pv, rng);
        Ok((v_next, pv))
    }

    /// Persistent contrastive divergence gradient of the negative log-likelihood.
    ///
    /// Positive statistics come from `data`; the persistent chains are
    /// advanced `gibbs_steps` sweeps and supply the negative statistics.
    /// Descending the returned gradient raises the data likelihood.
    pub fn pcd_step(&mut self, data: &Matrix, gibbs_steps: usize, rng: &mut RngStream) -> Result<RbmGrad> {
        check_features(self.visible(), data.cols(), "rbm batch")?;
        if data.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if self.chains.rows() == 0 {
            return Err(Error::InvalidArgument("persistent chains are not initialized".into()));
        }
        let w_t = self.w.transpose();
        for _ in 0..gibbs_steps {
            self.chains = self.gibbs_sweep(&self.chains, &w_t, rng)?.0;
        }

        let pos_h = self.hidden_probs(data)?;
        let neg_h = self.hidden_probs(&self.chains)?;
        let n_pos = data.rows() as f64;
        let n_neg = self.chains.rows() as f64;

        let pos_w = data.t_matmul(&pos_h)?;
        let neg_w = self.chains.t_matmul(&neg_h)?;
        let w = Matrix::from_vec(
            self.visible(),
            self.hidden(),
            neg_w
                .as_slice()
                .iter()
                .zip(pos_w.as_slice())
                .map(|(n, p)| n / n_neg - p / n_pos)
                .collect(),
        )?;
        let diff = |neg: Vec<f64>, pos: Vec<f64>| -> Vec<f64> {
            neg.iter().zip(&pos).map(|(n, p)| n / n_neg - p / n_pos).collect()
        };
        let b_vis = diff(self.chains.column_sums(), data.column_sums());
        let b_hid = diff(neg_h.column_sums(), pos_h.column_sums());
        Ok(RbmGrad { w, b_vis, b_hid })
    }

    /// Runs a Gibbs chain from `v0` for `passes` sweeps and records the
    /// visible activation probabilities (not binarized) after every
    /// `record_every`-th sweep.
    pub fn sample(&self, v0: &[f64], passes: usize, record_every: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
        if record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be positive".into()));
        }
        check_features(self.visible(), v0.len(), "rbm sample")?;
        check_binary(v0)?;
        let w_t = self.w.transpose();
        let mut v = Matrix::from_vec(1, v0.len(), v0.to_vec())?;
        let mut recorded = Vec::with_capacity(passes / record_every);
        for pass in 1..=passes {
            let (next, pv) = self.gibbs_sweep(&v, &w_t, rng)?;
            v = next;
            if pass % record_every == 0 {
                recorded.push(pv.into_vec());
            }
        }
        Ok(recorded)
    }

    /// Mean cross-entropy between each example and its mean-field
    /// reconstruction `P(v | P(h | v))`, in nats.
    pub fn reconstruction_cross_entropy(&self, data: &Matrix) -> Result<f64> {
        check_features(self.visible(), data.cols(), "rbm reconstruction")?;
        let ph = self.hidden_probs(data)?;
        let logits = self.visible_logits(&ph, &self.w.transpose())?;
        let total: f64 = logits
            .as_slice()
            .iter()
            .zip(data.as_slice())
            .map(|(&l, &v)| softplus(l) - v * l)
            .sum();
        Ok(total / data.rows() as f64)
    }
}

impl Network for RbmParams {
    fn kind(&self) -> ModelKind {
        ModelKind::Rbm
    }

    fn hidden_size(&self) -> usize {
        self.hidden()
    }

    fn params(&self) -> Vec<ParamTensor<'_>> {
        vec![
            ParamTensor { name: "w", kind: TensorKind::Weight, values: self.w.as_slice() },
            ParamTensor { name: "b_vis", kind: TensorKind::Bias, values: &self.b_vis },
            ParamTensor { name: "b_hid", kind: TensorKind::Bias, values: &self.b_hid },
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamTensorMut<'_>> {
        vec![
            ParamTensorMut { name: "w", kind: TensorKind::Weight, values: self.w.as_mut_slice() },
            ParamTensorMut { name: "b_vis", kind: TensorKind::Bias, values: &mut self.b_vis },
            ParamTensorMut { name: "b_hid", kind: TensorKind::Bias, values: &mut self.b_hid },
        ]
    }

    /// One persistent chain per batch slot, started from random training examples.
    fn prepare(&mut self, train: &Dataset, batch_size: usize, rng: &mut RngStream) -> Result<()> {
        ensure_nonempty(train)?;
        let mut init = rng.fork(StreamId::new(StreamPurpose::ChainInit, 0, 0, 0));
        let picks: Vec<usize> = (0..batch_size).map(|_| init.below(train.len())).collect();
        self.set_chains(train.inputs.select_rows(&picks))
    }

    fn batch_gradient(&mut self, inputs: &Matrix, _labels: Option<&[usize]>, rng: &mut RngStream) -> Result<BatchGradient> {
        let g = self.pcd_step(inputs, self.gibbs_steps, rng)?;
        Ok(BatchGradient {
            tensors: vec![g.w.into_vec(), g.b_vis, g.b_hid],
            loss: None,
        })
    }

    fn evaluate(&self, data: &Dataset) -> Result<Metric> {
        ensure_nonempty(data)?;
        Ok(Metric {
            kind: MetricKind::ReconstructionCrossEntropyNats,
            value: self.reconstruction_cross_entropy(&data.inputs)?,
        })
    }
}

//! Quantized gradient descent, learning curves, resolution sweeps and
//! offline compression of trained models.

mod compress;
mod sweep;

use std::fmt;
use std::str::FromStr;

pub use compress::{compress_trained, CompressionReport, TensorCodebook};
pub use sweep::{sweep_fixed_hidden, sweep_fixed_memory, CellResult, MemoryBudget, SweepCell, SweepSettings, Task};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{Metric, MetricKind, Network, TensorKind};
use crate::numerics::{RngStream, StreamId, StreamPurpose};
use crate::quantize::{quantized_update, Grid, QuantPolicy};

/// How weights are brought to low resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Unquantized single-precision training.
    Baseline,
    /// Nearest rounding at every update ("online rounding").
    Nearest,
    /// Randomized rounding at every update.
    Rr,
    /// Randomized rounding with a low-resolution probability.
    CoarseP,
    /// Full-precision training followed by per-matrix k-means compression.
    KmeansOffline,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Baseline,
        Method::Nearest,
        Method::Rr,
        Method::CoarseP,
        Method::KmeansOffline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Nearest => "nearest",
            Method::Rr => "rr",
            Method::CoarseP => "coarse_p",
            Method::KmeansOffline => "kmeans_offline",
        }
    }

    /// Update policy used while training with this method.
    pub fn policy(self, bits: u32, prob_levels: ProbLevels) -> Result<QuantPolicy> {
        Ok(match self {
            Method::Baseline | Method::KmeansOffline => QuantPolicy::Float32Baseline,
            Method::Nearest => QuantPolicy::NearestOnline(Grid::new(bits)?),
            Method::Rr => QuantPolicy::RandomizedRounding(Grid::new(bits)?),
            Method::CoarseP => {
                let grid = Grid::new(bits)?;
                QuantPolicy::CoarsePRR {
                    grid,
                    prob_levels: prob_levels.levels(&grid),
                }
            }
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Number of levels the coarse-p rounding probability is held at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbLevels {
    /// As many levels as the weight grid has points, `2^i - 1`.
    #[default]
    GridPoints,
    /// `2^i` levels.
    PowerOfTwo,
}

impl ProbLevels {
    pub fn levels(self, grid: &Grid) -> u64 {
        match self {
            ProbLevels::GridPoints => grid.num_points(),
            ProbLevels::PowerOfTwo => grid.num_points() + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub policy: QuantPolicy,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Evaluate every this many epochs (the final epoch is always evaluated).
    pub eval_every: usize,
    /// Route bias updates through the policy as well.
    pub quantize_biases: bool,
    /// Scale the learning rate by `1/(1+epoch)`.
    pub lr_decay: bool,
}

impl TrainConfig {
    pub fn new(policy: QuantPolicy, learning_rate: f64, epochs: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            policy,
            learning_rate,
            epochs,
            batch_size,
            seed,
            eval_every: 1,
            quantize_biases: false,
            lr_decay: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "epochs, batch_size and eval_every must all be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train: f64,
    pub valid: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub metric: MetricKind,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn last(&self) -> Option<&CurvePoint> {
        self.points.last()
    }
}

/// Trains `model` with batch gradient descent under `config.policy`.
///
/// Every weight update goes through [`quantized_update`]; randomized policies
/// draw one uniform per weight per step from the stream keyed by
/// (tensor, epoch, batch), at the weight's flat index. Biases are updated at
/// full precision unless `quantize_biases` is set. The result is fully
/// determined by `config.seed` and the data.
pub fn train<N: Network>(mut model: N, train_set: &Dataset, valid: Option<&Dataset>, config: &TrainConfig) -> Result<(N, LearningCurve)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let grid = config.policy.grid();
    if let Some(g) = &grid {
        check_closure(&model, g, config.quantize_biases)
            .map_err(|_| Error::InvalidArgument(format!("initial weights are not on the {g:?}")))?;
    }

    let root = RngStream::new(config.seed, StreamId::new(StreamPurpose::Init, 0xff, 0, 0));
    model.prepare(train_set, config.batch_size, &mut root.clone())?;

    let labels = train_set.labels();
    let mut curve = LearningCurve {
        metric: model.evaluate(train_set)?.kind,
        points: Vec::new(),
    };

    for epoch in 0..config.epochs {
        let eta = if config.lr_decay {
            config.learning_rate / (1.0 + epoch as f64)
        } else {
            config.learning_rate
        };
        let order = root
            .fork(StreamId::new(StreamPurpose::Shuffle, 0, epoch, 0))
            .permutation(train_set.len());

        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let inputs = train_set.inputs.select_rows(idx);
            let batch_labels: Option<Vec<usize>> = labels.map(|l| idx.iter().map(|&i| l[i]).collect());
            let mut gibbs = root.fork(StreamId::new(StreamPurpose::Gibbs, 0, epoch, batch));
            let grad = model.batch_gradient(&inputs, batch_labels.as_deref(), &mut gibbs)?;

            let diverged = |detail: String| Error::Divergence { epoch, batch, detail };
            if let Some(loss) = grad.loss {
                if !loss.is_finite() {
                    return Err(diverged(format!("loss is {loss}")));
                }
            }

            for (t, (param, g)) in model.params_mut().into_iter().zip(&grad.tensors).enumerate() {
                let quantized = param.kind == TensorKind::Weight || config.quantize_biases;
                if !quantized {
                    for (w, d) in param.values.iter_mut().zip(g) {
                        if !d.is_finite() {
                            return Err(diverged(format!("non-finite gradient in {}", param.name)));
                        }
                        *w -= eta * d;
                    }
                    continue;
                }
                let mut draws = config
                    .policy
                    .is_stochastic()
                    .then(|| root.fork(StreamId::new(StreamPurpose::WeightUpdate, t as u8, epoch, batch)));
                for (w, &d) in param.values.iter_mut().zip(g) {
                    let u = draws.as_mut().map_or(0.0, RngStream::uniform);
                    *w = quantized_update(*w, d, eta, &config.policy, u)
                        .map_err(|e| diverged(format!("{}: {e}", param.name)))?;
                }
            }
        }

        if let Some(g) = &grid {
            check_closure(&model, g, config.quantize_biases)?;
        }

        let completed = epoch + 1;
        if completed % config.eval_every == 0 || completed == config.epochs {
            let train_metric = model.evaluate(train_set)?;
            let valid_metric = valid.map(|v| model.evaluate(v)).transpose()?;
            if !train_metric.value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: 0,
                    detail: format!("training metric is {}", train_metric.value),
                });
            }
            curve.points.push(CurvePoint {
                epoch: completed,
                train: train_metric.value,
                valid: valid_metric.map(|m: Metric| m.value),
            });
        }
    }
    Ok((model, curve))
}

fn check_closure<N: Network>(model: &N, grid: &Grid, biases_too: bool) -> Result<()> {
    for t in model.params() {
        if t.kind == TensorKind::Bias && !biases_too {
            continue;
        }
        if let Some(bad) = t.values.iter().find(|&&w| !grid.contains(w)) {
            return Err(Error::InvalidValue(format!(
                "{} entry {bad} is not on the {grid:?}",
                t.name
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic;
    use crate::models::MlpParams;

    fn init_rng(seed: u64) -> RngStream {
        RngStream::new(seed, StreamId::new(StreamPurpose::Init, 0, 0, 0))
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("rounding".parse::<Method>().is_err());
    }

    #[test]
    fn prob_level_modes() {
        let g = Grid::new(3).unwrap();
        assert_eq!(ProbLevels::GridPoints.levels(&g), 7);
        assert_eq!(ProbLevels::PowerOfTwo.levels(&g), 8);
    }

    #[test]
    fn rejects_bad_config() {
        let data = synthetic::linearly_separable(20, 3, 0.05, 1).unwrap();
        let model = MlpParams::zeros(3, 2, 2);
        let mut cfg = TrainConfig::new(QuantPolicy::Float32Baseline, 0.1, 0, 4, 0);
        assert!(matches!(train(model.clone(), &data, None, &cfg), Err(Error::Config(_))));
        cfg.epochs = 1;
        cfg.learning_rate = -1.0;
        assert!(train(model, &data, None, &cfg).is_err());
    }

    #[test]
    fn off_grid_start_is_rejected() {
        let data = synthetic::linearly_separable(20, 3, 0.05, 1).unwrap();
        let model = MlpParams::init(3, 2, 2, None, &mut init_rng(1));
        let cfg = TrainConfig::new(QuantPolicy::RandomizedRounding(Grid::new(2).unwrap()), 0.1, 1, 4, 0);
        assert!(train(model, &data, None, &cfg).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let data = synthetic::linearly_separable(20, 3, 0.05, 1).unwrap();
        let mut model = MlpParams::zeros(3, 2, 2);
        model.b2 = vec![f64::INFINITY, 0.0];
        let cfg = TrainConfig::new(QuantPolicy::Float32Baseline, 0.1, 1, 4, 0);
        assert!(matches!(train(model, &data, None, &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn curve_epochs_increase() {
        let data = synthetic::linearly_separable(40, 3, 0.05, 1).unwrap();
        let model = MlpParams::init(3, 4, 2, None, &mut init_rng(2));
        let mut cfg = TrainConfig::new(QuantPolicy::Float32Baseline, 0.5, 7, 8, 3);
        cfg.eval_every = 3;
        let (_, curve) = train(model, &data, Some(&data), &cfg).unwrap();
        let epochs: Vec<usize> = curve.points.iter().map(|p| p.epoch).collect();
        assert_eq!(epochs, vec![3, 6, 7]);
        assert!(curve.points.iter().all(|p| p.valid.is_some()));
    }

    #[test]
    fn quantized_biases_stay_on_grid() {
        let data = synthetic::linearly_separable(40, 3, 0.05, 1).unwrap();
        let grid = Grid::new(3).unwrap();
        let model = MlpParams::init(3, 4, 2, Some(&grid), &mut init_rng(2));
        let mut cfg = TrainConfig::new(QuantPolicy::RandomizedRounding(grid), 0.5, 3, 8, 3);
        cfg.quantize_biases = true;
        let (trained, _) = train(model, &data, None, &cfg).unwrap();
        assert!(trained.b1.iter().chain(&trained.b2).all(|&b| grid.contains(b)));
        assert!(trained.weights_on_grid(&grid));
    }
}

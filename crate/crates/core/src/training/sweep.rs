use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::{compress_trained, train, LearningCurve, Method, ProbLevels, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{MetricKind, Network, TensorKind};
use crate::numerics::{RngStream, StreamId, StreamPurpose};
use crate::quantize::Grid;

/// Hidden-layer size afforded by a fixed number of weight-memory bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryBudget {
    pub total_bits: u64,
    pub bits_per_weight: u32,
    pub hidden_size: usize,
}

impl MemoryBudget {
    /// `weights_per_hidden` is the number of counted weights each hidden
    /// unit adds to the architecture.
    pub fn new(total_bits: u64, bits_per_weight: u32, weights_per_hidden: usize) -> Result<Self> {
        if bits_per_weight == 0 || weights_per_hidden == 0 {
            return Err(Error::Config("bits per weight and architecture width must be positive".into()));
        }
        let per_unit = weights_per_hidden as u64 * bits_per_weight as u64;
        let hidden_size = (total_bits / per_unit) as usize;
        if hidden_size == 0 {
            return Err(Error::Config(format!(
                "{total_bits} bits cannot hold one hidden unit at {bits_per_weight} bits per weight \
                 ({per_unit} bits needed)"
            )));
        }
        Ok(Self {
            total_bits,
            bits_per_weight,
            hidden_size,
        })
    }
}

/// Settings shared by every cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepSettings {
    /// Template configuration; its policy and seed are replaced per cell.
    pub base: TrainConfig,
    pub seeds: Vec<u64>,
    /// Precision of k-means codebook entries.
    pub center_bits: u32,
    pub prob_levels: ProbLevels,
    /// Count every weight matrix toward memory, not just input-to-hidden.
    pub count_all_matrices: bool,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Task<'a> {
    pub train: &'a Dataset,
    pub valid: Option<&'a Dataset>,
    pub test: &'a Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SweepCell {
    pub method: Method,
    pub bits: u32,
    pub hidden: usize,
    pub seed: u64,
}

/// One trained (and possibly compressed) model with its measurements.
#[derive(Debug, Clone)]
pub struct CellResult<N> {
    pub cell: SweepCell,
    pub model: N,
    pub curve: LearningCurve,
    pub metric: MetricKind,
    pub train: f64,
    pub valid: Option<f64>,
    pub test: f64,
    /// Counted weight memory plus codebook overhead.
    pub memory_bits: u64,
    pub codebook_bits: u64,
    pub wall_time: Duration,
}

/// Trains every (method, bits, seed) combination at one hidden size.
///
/// `build` constructs a fresh model of the given hidden size, snapped to the
/// grid when one is passed. Rows come back sorted by cell key.
pub fn sweep_fixed_hidden<N, F>(bits_list: &[u32], methods: &[Method], hidden: usize, settings: &SweepSettings, task: Task<'_>, build: F) -> Result<Vec<CellResult<N>>>
where
    N: Network,
    F: Fn(usize, Option<&Grid>, &mut RngStream) -> Result<N> + Sync,
{
    if bits_list.is_empty() || methods.is_empty() {
        return Err(Error::Config("bits and method lists must be non-empty".into()));
    }
    let cells = expand(methods, settings, bits_list.iter().map(|&b| (b, hidden)));
    run_cells(cells, settings, task, &build)
}

/// Trains each resolution at the largest hidden size `total_bits` affords.
pub fn sweep_fixed_memory<N, F>(total_bits: u64, bits_list: &[u32], methods: &[Method], settings: &SweepSettings, task: Task<'_>, build: F) -> Result<Vec<CellResult<N>>>
where
    N: Network,
    F: Fn(usize, Option<&Grid>, &mut RngStream) -> Result<N> + Sync,
{
    if bits_list.is_empty() || methods.is_empty() {
        return Err(Error::Config("bits and method lists must be non-empty".into()));
    }
    let probe = build(1, None, &mut init_stream(0))?;
    let per_hidden = counted_weights(&probe, settings.count_all_matrices);
    let mut shapes = Vec::with_capacity(bits_list.len());
    for &bits in bits_list {
        let budget = MemoryBudget::new(total_bits, bits, per_hidden)?;
        shapes.push((bits, budget.hidden_size));
    }
    let cells = expand(methods, settings, shapes.into_iter());
    run_cells(cells, settings, task, &build)
}

fn expand(methods: &[Method], settings: &SweepSettings, shapes: impl Iterator<Item = (u32, usize)> + Clone) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &method in methods {
        for (bits, hidden) in shapes.clone() {
            for &seed in &settings.seeds {
                cells.push(SweepCell { method, bits, hidden, seed });
            }
        }
    }
    cells.sort();
    cells.dedup();
    cells
}

fn init_stream(seed: u64) -> RngStream {
    RngStream::new(seed, StreamId::new(StreamPurpose::Init, 0, 0, 0))
}

/// Weights counted toward memory: the input-to-hidden matrix (the first
/// weight tensor) or all weight tensors.
fn counted_weights<N: Network>(model: &N, all: bool) -> usize {
    let weights = model.params().into_iter().filter(|t| t.kind == TensorKind::Weight);
    if all {
        weights.map(|t| t.values.len()).sum()
    } else {
        weights.take(1).map(|t| t.values.len()).sum()
    }
}

struct Trained<N> {
    model: N,
    curve: LearningCurve,
    elapsed: Duration,
}

fn run_cells<N, F>(cells: Vec<SweepCell>, settings: &SweepSettings, task: Task<'_>, build: &F) -> Result<Vec<CellResult<N>>>
where
    N: Network,
    F: Fn(usize, Option<&Grid>, &mut RngStream) -> Result<N> + Sync,
{
    if settings.seeds.is_empty() {
        return Err(Error::Config("seed list must be non-empty".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    pool.install(|| {
        // Full-precision runs are shared between the baseline and k-means
        // cells of the same shape and seed.
        let shared: Vec<(usize, u64)> = cells
            .iter()
            .filter(|c| matches!(c.method, Method::Baseline | Method::KmeansOffline))
            .map(|c| (c.hidden, c.seed))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let baselines: BTreeMap<(usize, u64), Trained<N>> = shared
            .par_iter()
            .map(|&(hidden, seed)| {
                let cell = SweepCell { method: Method::Baseline, bits: 32, hidden, seed };
                Ok(((hidden, seed), train_cell(cell, settings, task, build)?))
            })
            .collect::<Result<_>>()?;

        cells
            .par_iter()
            .map(|&cell| finish_cell(cell, settings, task, build, &baselines))
            .collect()
    })
}

fn train_cell<N, F>(cell: SweepCell, settings: &SweepSettings, task: Task<'_>, build: &F) -> Result<Trained<N>>
where
    N: Network,
    F: Fn(usize, Option<&Grid>, &mut RngStream) -> Result<N> + Sync,
{
    let start = Instant::now();
    let policy = cell.method.policy(cell.bits, settings.prob_levels)?;
    let model = build(cell.hidden, policy.grid().as_ref(), &mut init_stream(cell.seed))?;
    let config = TrainConfig {
        policy,
        seed: cell.seed,
        ..settings.base.clone()
    };
    let (model, curve) = train(model, task.train, task.valid, &config)?;
    Ok(Trained {
        model,
        curve,
        elapsed: start.elapsed(),
    })
}

fn finish_cell<N, F>(cell: SweepCell, settings: &SweepSettings, task: Task<'_>, build: &F, baselines: &BTreeMap<(usize, u64), Trained<N>>) -> Result<CellResult<N>>
where
    N: Network,
    F: Fn(usize, Option<&Grid>, &mut RngStream) -> Result<N> + Sync,
{
    let counted = counted_weights(&build(cell.hidden, None, &mut init_stream(0))?, settings.count_all_matrices) as u64;
    let (model, curve, elapsed, memory_bits, codebook_bits) = match cell.method {
        Method::Baseline => {
            let base = &baselines[&(cell.hidden, cell.seed)];
            (base.model.clone(), base.curve.clone(), base.elapsed, counted * 32, 0)
        }
        Method::KmeansOffline => {
            let base = &baselines[&(cell.hidden, cell.seed)];
            let start = Instant::now();
            let kmeans_seed = RngStream::new(cell.seed, StreamId::new(StreamPurpose::KMeans, 0xff, 0, 0)).next_u64();
            let (model, report) = compress_trained(&base.model, cell.bits, settings.center_bits, kmeans_seed)?;
            let codebook_bits = if settings.count_all_matrices {
                report.codebook_memory_bits()
            } else {
                report.tensors.first().map_or(0, |t| crate::quantize::codebook_memory_bits(&t.codebook))
            };
            let elapsed = base.elapsed + start.elapsed();
            (model, base.curve.clone(), elapsed, counted * cell.bits as u64 + codebook_bits, codebook_bits)
        }
        _ => {
            let trained = train_cell(cell, settings, task, build)?;
            (trained.model, trained.curve, trained.elapsed, counted * cell.bits as u64, 0)
        }
    };
    let train_metric = model.evaluate(task.train)?;
    let valid = task.valid.map(|v| model.evaluate(v)).transpose()?.map(|m| m.value);
    let test = model.evaluate(task.test)?.value;
    Ok(CellResult {
        cell,
        model,
        curve,
        metric: train_metric.kind,
        train: train_metric.value,
        valid,
        test,
        memory_bits,
        codebook_bits,
        wall_time: elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic;
    use crate::models::MlpParams;

    fn settings(seeds: Vec<u64>) -> SweepSettings {
        let mut base = TrainConfig::new(crate::quantize::QuantPolicy::Float32Baseline, 0.5, 5, 10, 0);
        base.eval_every = 5;
        SweepSettings {
            base,
            seeds,
            center_bits: 16,
            prob_levels: ProbLevels::GridPoints,
            count_all_matrices: false,
            workers: 2,
        }
    }

    fn mlp(inputs: usize) -> impl Fn(usize, Option<&Grid>, &mut RngStream) -> Result<MlpParams> + Sync {
        move |hidden, grid, rng| Ok(MlpParams::init(inputs, hidden, 2, grid, rng))
    }

    #[test]
    fn budget_halves_when_bits_double() {
        let sizes: Vec<usize> = [2, 4, 8, 16, 32]
            .iter()
            .map(|&b| MemoryBudget::new(4096, b, 64).unwrap().hidden_size)
            .collect();
        assert_eq!(sizes, vec![32, 16, 8, 4, 2]);
        let odd = MemoryBudget::new(1000, 3, 10).unwrap();
        assert_eq!(odd.hidden_size, 33);
        assert!(MemoryBudget::new(1000, 4, 10).unwrap().hidden_size == 25);
        assert!(matches!(MemoryBudget::new(100, 32, 64), Err(Error::Config(_))));
    }

    #[test]
    fn fixed_hidden_bookkeeping() {
        let data = synthetic::linearly_separable(60, 4, 0.05, 3).unwrap();
        let task = Task { train: &data, valid: None, test: &data };
        let methods = [Method::Nearest, Method::Rr, Method::CoarseP, Method::KmeansOffline];
        let rows = sweep_fixed_hidden(&[2, 4, 6, 8], &methods, 3, &settings(vec![1]), task, mlp(4)).unwrap();
        assert_eq!(rows.len(), 16);
        let keys: Vec<SweepCell> = rows.iter().map(|r| r.cell).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for r in &rows {
            if r.cell.method == Method::KmeansOffline {
                assert!(r.codebook_bits > 0);
                assert_eq!(r.memory_bits, 12 * r.cell.bits as u64 + r.codebook_bits);
            } else {
                assert_eq!(r.memory_bits, 12 * r.cell.bits as u64);
                let grid = Grid::new(r.cell.bits).unwrap();
                assert!(r.model.weights_on_grid(&grid));
            }
        }
    }

    #[test]
    fn fixed_memory_respects_budget() {
        let data = synthetic::linearly_separable(40, 8, 0.05, 3).unwrap();
        let task = Task { train: &data, valid: None, test: &data };
        let rows = sweep_fixed_memory(256, &[2, 4, 8, 16, 32], &[Method::Rr], &settings(vec![7]), task, mlp(8)).unwrap();
        let hidden: Vec<usize> = rows.iter().map(|r| r.cell.hidden).collect();
        assert_eq!(hidden, vec![16, 8, 4, 2, 1]);
        for r in &rows {
            assert!(r.cell.hidden * 8 * r.cell.bits as usize <= 256);
            assert!(r.memory_bits <= 256);
        }
        let too_small = sweep_fixed_memory(100, &[32], &[Method::Rr], &settings(vec![7]), task, mlp(8));
        assert!(matches!(too_small, Err(Error::Config(_))));
    }

    #[test]
    fn unconstrained_memory_matches_fixed_hidden() {
        let data = synthetic::linearly_separable(40, 4, 0.05, 3).unwrap();
        let task = Task { train: &data, valid: None, test: &data };
        let s = settings(vec![5]);
        let by_memory = sweep_fixed_memory(4 * 3 * 8, &[8], &[Method::Rr], &s, task, mlp(4)).unwrap();
        let by_hidden = sweep_fixed_hidden(&[8], &[Method::Rr], 3, &s, task, mlp(4)).unwrap();
        assert_eq!(by_memory[0].model, by_hidden[0].model);
        assert_eq!(by_memory[0].test, by_hidden[0].test);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let data = synthetic::linearly_separable(40, 4, 0.05, 3).unwrap();
        let task = Task { train: &data, valid: None, test: &data };
        let mut s = settings(vec![1, 2]);
        let methods = [Method::Baseline, Method::Rr, Method::KmeansOffline];
        let a = sweep_fixed_hidden(&[2, 3], &methods, 3, &s, task, mlp(4)).unwrap();
        s.workers = 1;
        let b = sweep_fixed_hidden(&[2, 3], &methods, 3, &s, task, mlp(4)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.cell, y.cell);
            assert_eq!(x.model, y.model);
            assert_eq!(x.test.to_bits(), y.test.to_bits());
        }
    }
}

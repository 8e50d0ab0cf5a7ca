use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use lowres_core::data::{
    binarize, dataset_from_idx, parse_libsvm, read_idx_file, stratified_partition, synthetic, Dataset,
};
use lowres_core::models::{MlpParams, NadeParams, Network, RbmParams};
use lowres_core::numerics::{RngStream, StreamId, StreamPurpose};
use lowres_core::quantize::{Grid, QuantPolicy};
use lowres_core::training::{
    sweep_fixed_hidden, sweep_fixed_memory, CellResult, Method, ProbLevels, SweepSettings, Task, TrainConfig,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{format_name, DataFormat, ModelChoice, RunConfig, SweepMode, SyntheticTask};
use crate::images::{receptive_field_image, sample_grid, write_pgm};
use crate::CliError;

/// Column order of `results.csv`.
pub const RESULT_COLUMNS: [&str; 14] = [
    "config_hash",
    "model",
    "method",
    "bits",
    "hidden_size",
    "seed",
    "metric",
    "train_metric",
    "valid_metric",
    "test_metric",
    "wall_time_s",
    "memory_bits",
    "codebook_bits",
    "epochs",
];

/// Overrides applied on top of a configuration file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub data_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub config_hash: String,
    pub model: String,
    pub method: Method,
    pub bits: u32,
    pub hidden_size: usize,
    pub seed: u64,
    pub metric: String,
    pub train: f64,
    pub valid: Option<f64>,
    pub test: f64,
    pub wall_time_s: f64,
    pub memory_bits: u64,
    pub codebook_bits: u64,
    pub epochs: usize,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config_hash: String,
    pub output_dir: PathBuf,
    pub records: Vec<ResultRecord>,
}

struct Prepared {
    train: Dataset,
    valid: Option<Dataset>,
    test: Dataset,
    image_shape: Option<(usize, usize)>,
    sources: Vec<String>,
}

/// Checks a configuration without touching data.
pub fn validate(config_path: &Path) -> Result<RunConfig, CliError> {
    RunConfig::load(config_path).map(|(c, _)| c)
}

/// Executes every sweep cell of a configuration and writes its artifacts.
pub fn run(config_path: &Path, options: &RunOptions) -> Result<RunSummary, CliError> {
    let (config, text) = RunConfig::load(config_path)?;
    let config_hash = hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string();
    let base_dir = config_path.parent().unwrap_or(Path::new("."));

    let data = prepare_data(&config, base_dir, options.data_dir.as_deref())?;
    let output_dir = options
        .output_dir
        .clone()
        .unwrap_or_else(|| base_dir.join(&config.experiment.output_dir));
    info!(
        "{}: {} train / {} valid / {} test examples, {} features",
        config.experiment.name,
        data.train.len(),
        data.valid.as_ref().map_or(0, Dataset::len),
        data.test.len(),
        data.train.features()
    );

    let methods = config.methods()?;
    let t = &config.training;
    let mut base = TrainConfig::new(QuantPolicy::Float32Baseline, t.learning_rate, t.epochs, t.batch_size, 0);
    base.eval_every = t.eval_every;
    base.quantize_biases = t.quantize_biases;
    base.lr_decay = t.lr_decay;
    let settings = SweepSettings {
        base,
        seeds: config.experiment.seeds.clone(),
        center_bits: t.center_bits,
        prob_levels: t.prob_levels.into(),
        count_all_matrices: config.experiment.count_all_matrices,
        workers: config.experiment.workers,
    };
    let task = Task {
        train: &data.train,
        valid: data.valid.as_ref(),
        test: &data.test,
    };

    fs::create_dir_all(output_dir.join("curves")).map_err(|e| output_error(&output_dir, e))?;
    let started = Instant::now();
    let features = data.train.features();
    let records = match config.experiment.model {
        ModelChoice::Mlp => {
            let classes = data.train.num_classes().max(data.test.num_classes());
            let results = sweep(&config, &methods, &settings, task, |h, g, rng| {
                Ok(MlpParams::init(features, h, classes, g, rng))
            })?;
            write_model_outputs(&config, &config_hash, &output_dir, &results)?
        }
        ModelChoice::Nade => {
            let results = sweep(&config, &methods, &settings, task, |h, g, rng| {
                Ok(NadeParams::init(features, h, g, rng))
            })?;
            write_model_outputs(&config, &config_hash, &output_dir, &results)?
        }
        ModelChoice::Rbm => {
            let gibbs_steps = config.rbm.gibbs_steps;
            let results = sweep(&config, &methods, &settings, task, |h, g, rng| {
                let mut rbm = RbmParams::init(features, h, g, rng);
                rbm.gibbs_steps = gibbs_steps;
                Ok(rbm)
            })?;
            write_rbm_images(&config, &output_dir, &results, &data)?;
            write_model_outputs(&config, &config_hash, &output_dir, &results)?
        }
    };
    info!("{} cells finished in {:.1} s", records.len(), started.elapsed().as_secs_f64());

    write_metadata(&config, &config_hash, &output_dir, &data, &methods)?;
    Ok(RunSummary {
        config_hash,
        output_dir,
        records,
    })
}

fn sweep<N, F>(config: &RunConfig, methods: &[Method], settings: &SweepSettings, task: Task<'_>, build: F) -> Result<Vec<CellResult<N>>, CliError>
where
    N: Network,
    F: Fn(usize, Option<&Grid>, &mut RngStream) -> lowres_core::Result<N> + Sync,
{
    let exp = &config.experiment;
    let result = match exp.sweep {
        SweepMode::FixedHidden => {
            let hidden = exp.hidden_size.expect("checked by config validation");
            sweep_fixed_hidden(&exp.bits, methods, hidden, settings, task, build)
        }
        SweepMode::FixedMemory => {
            let total = exp.total_bits.expect("checked by config validation");
            sweep_fixed_memory(total, &exp.bits, methods, settings, task, build)
        }
    };
    result.map_err(CliError::from_training)
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn missing_data(path: &Path) -> CliError {
    CliError::Data(format!(
        "dataset file {} not found. Download the MNIST IDX files (train-images-idx3-ubyte.gz, \
         train-labels-idx1-ubyte.gz, t10k-*) or prepare your own, place them in a directory and \
         point data.data_dir or the LOWRES_DATA_DIR environment variable at it. No data is \
         fetched at run time.",
        path.display()
    ))
}

fn data_error(path: &Path, e: lowres_core::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn prepare_data(config: &RunConfig, config_dir: &Path, data_dir: Option<&Path>) -> Result<Prepared, CliError> {
    let d = &config.data;
    let data_dir = match data_dir {
        Some(dir) => dir.to_path_buf(),
        None => resolve(config_dir, d.data_dir.as_deref().unwrap_or(Path::new("."))),
    };
    let existing = |p: &Path| -> Result<PathBuf, CliError> {
        let full = resolve(&data_dir, p);
        if full.exists() {
            Ok(full)
        } else {
            Err(missing_data(&full))
        }
    };
    let mut sources = Vec::new();
    let mut image_shape = d.image_shape.map(|[h, w]| (h, w));

    let (pool, test_file) = match d.format {
        DataFormat::Idx => {
            let load = |images: &Path, labels: &Path, name: &str, sources: &mut Vec<String>| {
                let (images, labels) = (existing(images)?, existing(labels)?);
                sources.push(images.display().to_string());
                sources.push(labels.display().to_string());
                let image_tensor = read_idx_file(&images).map_err(|e| data_error(&images, e))?;
                let label_tensor = read_idx_file(&labels).map_err(|e| data_error(&labels, e))?;
                let ds = dataset_from_idx(&image_tensor, &label_tensor, name).map_err(|e| data_error(&images, e))?;
                let shape = match image_tensor.dims[..] {
                    [_, h, w] => Some((h, w)),
                    _ => None,
                };
                Ok::<_, CliError>((ds, shape))
            };
            let (pool, shape) = load(
                d.train_images.as_deref().expect("checked"),
                d.train_labels.as_deref().expect("checked"),
                "train",
                &mut sources,
            )?;
            image_shape = image_shape.or(shape);
            let test = match (&d.test_images, &d.test_labels) {
                (Some(i), Some(l)) => Some(load(i, l, "test", &mut sources)?.0),
                _ => None,
            };
            (pool, test)
        }
        DataFormat::Libsvm => {
            let features = d.features.expect("checked");
            let load = |p: &Path, name: &str, sources: &mut Vec<String>| {
                let full = existing(p)?;
                sources.push(full.display().to_string());
                let text = fs::read_to_string(&full).map_err(|e| CliError::Data(format!("{}: {e}", full.display())))?;
                parse_libsvm(&text, features, name).map_err(|e| data_error(&full, e))
            };
            let pool = load(d.train_file.as_deref().expect("checked"), "train", &mut sources)?;
            let test = d.test_file.as_deref().map(|p| load(p, "test", &mut sources)).transpose()?;
            (pool, test)
        }
        DataFormat::Synthetic => {
            let (n, features, seed) = (d.samples.expect("checked"), d.features.expect("checked"), d.synthetic_seed.unwrap_or(0));
            let generated = match d.task.expect("checked") {
                SyntheticTask::Separable => synthetic::linearly_separable(n, features, d.margin.unwrap_or(0.05), seed),
                SyntheticTask::Teacher => {
                    synthetic::teacher_task(n, features, d.classes.unwrap_or(2), d.teacher_hidden.unwrap_or(16), seed)
                }
            }
            .map_err(|e| CliError::Config(format!("data: {e}")))?;
            let task = match d.task.expect("checked") {
                SyntheticTask::Separable => "separable",
                SyntheticTask::Teacher => "teacher",
            };
            sources.push(format!("synthetic {task} task (seed {seed})"));
            (generated, None)
        }
    };

    let split = |ds: &Dataset, sizes: &[usize]| {
        stratified_partition(ds, sizes, d.split_seed).map_err(|e| CliError::Config(format!("data split: {e}")))
    };
    let (mut train, mut valid, mut test) = match test_file {
        Some(test_pool) => {
            let train_size = d.train_size.unwrap_or(pool.len().saturating_sub(d.valid_size));
            let mut parts = split(&pool, &[train_size, d.valid_size])?;
            let test_size = d.test_size.unwrap_or(test_pool.len());
            let test = split(&test_pool, &[test_size])?.remove(0);
            let valid = parts.pop().expect("two parts");
            (parts.pop().expect("two parts"), valid, test)
        }
        None => {
            let test_size = d.test_size.expect("checked");
            let train_size = d
                .train_size
                .unwrap_or(pool.len().saturating_sub(d.valid_size + test_size));
            let mut parts = split(&pool, &[train_size, d.valid_size, test_size])?.into_iter();
            let mut next = || parts.next().expect("three parts");
            (next(), next(), next())
        }
    };
    if let Some(threshold) = d.binarize {
        train = binarize(&train, threshold);
        valid = binarize(&valid, threshold);
        test = binarize(&test, threshold);
    }
    if matches!(config.experiment.model, ModelChoice::Rbm | ModelChoice::Nade) && !(train.is_binary() && test.is_binary()) {
        return Err(CliError::Config(
            "data.binarize: rbm and nade need binary inputs; set a threshold".into(),
        ));
    }
    if config.experiment.model == ModelChoice::Mlp && train.labels().is_none() {
        return Err(CliError::Config("experiment.model: mlp needs labeled data".into()));
    }
    if train.is_empty() || test.is_empty() {
        return Err(CliError::Config("data: train and test splits must be non-empty".into()));
    }
    if train.features() != test.features() {
        return Err(CliError::Data(format!(
            "train data has {} features but test data has {}",
            train.features(),
            test.features()
        )));
    }
    if image_shape.is_none() {
        let side = (train.features() as f64).sqrt().round() as usize;
        if side * side == train.features() {
            image_shape = Some((side, side));
        }
    }
    Ok(Prepared {
        train: train.with_split("train"),
        valid: (!valid.is_empty()).then(|| valid.with_split("valid")),
        test: test.with_split("test"),
        image_shape,
        sources,
    })
}

fn output_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

fn cell_stem<N>(config: &RunConfig, r: &CellResult<N>) -> String {
    format!(
        "{}_{}_b{}_h{}_s{}",
        model_name(config.experiment.model),
        r.cell.method,
        r.cell.bits,
        r.cell.hidden,
        r.cell.seed
    )
}

fn model_name(model: ModelChoice) -> &'static str {
    match model {
        ModelChoice::Mlp => "mlp",
        ModelChoice::Rbm => "rbm",
        ModelChoice::Nade => "nade",
    }
}

fn write_model_outputs<N: Network>(config: &RunConfig, config_hash: &str, dir: &Path, results: &[CellResult<N>]) -> Result<Vec<ResultRecord>, CliError> {
    let records: Vec<ResultRecord> = results
        .iter()
        .map(|r| ResultRecord {
            config_hash: config_hash.to_string(),
            model: model_name(config.experiment.model).to_string(),
            method: r.cell.method,
            bits: r.cell.bits,
            hidden_size: r.cell.hidden,
            seed: r.cell.seed,
            metric: r.metric.name().to_string(),
            train: r.train,
            valid: r.valid,
            test: r.test,
            wall_time_s: r.wall_time.as_secs_f64(),
            memory_bits: r.memory_bits,
            codebook_bits: r.codebook_bits,
            epochs: config.training.epochs,
        })
        .collect();

    let path = dir.join("results.csv");
    write_results(&records, &path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;

    for r in results {
        let path = dir.join("curves").join(format!("{}.csv", cell_stem(config, r)));
        let write = || -> Result<(), csv::Error> {
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["epoch", "metric", "train", "valid"])?;
            for p in &r.curve.points {
                w.write_record([
                    p.epoch.to_string(),
                    r.curve.metric.name().to_string(),
                    p.train.to_string(),
                    p.valid.map_or(String::new(), |v| v.to_string()),
                ])?;
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    }
    Ok(records)
}

/// Writes result rows with the fixed [`RESULT_COLUMNS`] layout.
pub fn write_results(records: &[ResultRecord], path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_COLUMNS)?;
    for r in records {
        w.write_record([
            r.config_hash.clone(),
            r.model.clone(),
            r.method.to_string(),
            r.bits.to_string(),
            r.hidden_size.to_string(),
            r.seed.to_string(),
            r.metric.clone(),
            r.train.to_string(),
            r.valid.map_or(String::new(), |v| v.to_string()),
            r.test.to_string(),
            format!("{:.3}", r.wall_time_s),
            r.memory_bits.to_string(),
            r.codebook_bits.to_string(),
            r.epochs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_rbm_images(config: &RunConfig, dir: &Path, results: &[CellResult<RbmParams>], data: &Prepared) -> Result<(), CliError> {
    let Some(shape) = data.image_shape else {
        warn!("no image shape known for {} features; skipping RBM images", data.train.features());
        return Ok(());
    };
    let rbm = &config.rbm;
    for sub in ["samples", "filters"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| output_error(dir, e))?;
    }
    for r in results {
        let stem = cell_stem(config, r);
        let mut picker = RngStream::new(r.cell.seed, StreamId::new(StreamPurpose::Sampling, 0xff, 0, 0));
        let starts: Vec<usize> = picker
            .permutation(data.test.len())
            .into_iter()
            .take(rbm.initial_conditions)
            .collect();
        let mut chains = Vec::with_capacity(starts.len());
        for (i, &row) in starts.iter().enumerate() {
            let mut rng = RngStream::new(r.cell.seed, StreamId::new(StreamPurpose::Sampling, i as u8, 0, 0));
            let recorded = r
                .model
                .sample(data.test.inputs.row(row), rbm.sample_passes, rbm.record_every, &mut rng)
                .map_err(CliError::from_training)?;
            chains.push(recorded);
        }
        if chains.iter().all(|c| !c.is_empty()) {
            let grid = sample_grid(&chains, shape).map_err(CliError::Output)?;
            let path = dir.join("samples").join(format!("{stem}.pgm"));
            write_pgm(&grid, &path).map_err(|e| output_error(&path, e))?;
        } else {
            warn!("sample_passes < record_every: no samples recorded for {stem}");
        }
        let filters = receptive_field_image(&r.model.w, shape).map_err(CliError::Output)?;
        let path = dir.join("filters").join(format!("{stem}.pgm"));
        write_pgm(&filters, &path).map_err(|e| output_error(&path, e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Metadata<'a> {
    version: &'static str,
    config_hash: &'a str,
    name: &'a str,
    data_format: &'static str,
    data_sources: &'a [String],
    train_examples: usize,
    valid_examples: usize,
    test_examples: usize,
    features: usize,
    /// Coarse-p probability levels used at each resolution.
    prob_levels_rule: &'static str,
    prob_levels: Vec<(u32, u64)>,
    memory_counts: &'static str,
    methods: Vec<String>,
}

fn write_metadata(config: &RunConfig, hash: &str, dir: &Path, data: &Prepared, methods: &[Method]) -> Result<(), CliError> {
    let rule: ProbLevels = config.training.prob_levels.into();
    let prob_levels = config
        .experiment
        .bits
        .iter()
        .map(|&b| (b, rule.levels(&Grid::new(b).expect("bits checked"))))
        .collect();
    let meta = Metadata {
        version: env!("CARGO_PKG_VERSION"),
        config_hash: hash,
        name: &config.experiment.name,
        data_format: format_name(config.data.format),
        data_sources: &data.sources,
        train_examples: data.train.len(),
        valid_examples: data.valid.as_ref().map_or(0, Dataset::len),
        test_examples: data.test.len(),
        features: data.train.features(),
        prob_levels_rule: match rule {
            ProbLevels::GridPoints => "2^bits - 1",
            ProbLevels::PowerOfTwo => "2^bits",
        },
        prob_levels,
        memory_counts: if config.experiment.count_all_matrices {
            "all weight matrices"
        } else {
            "input-to-hidden matrix"
        },
        methods: methods.iter().map(ToString::to_string).collect(),
    };
    let text = toml::to_string(&meta).map_err(|e| CliError::Output(e.to_string()))?;
    let path = dir.join("run.toml");
    fs::write(&path, text).map_err(|e| output_error(&path, e))
}

/// Reads `results.csv` back into records, e.g. for comparisons between runs.
pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>, CliError> {
    let bad = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if header != RESULT_COLUMNS {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let num = |i: usize| field(i).parse::<f64>().map_err(|e| bad(format!("{}: {e}", RESULT_COLUMNS[i])));
        let int = |i: usize| field(i).parse::<u64>().map_err(|e| bad(format!("{}: {e}", RESULT_COLUMNS[i])));
        out.push(ResultRecord {
            config_hash: field(0).to_string(),
            model: field(1).to_string(),
            method: field(2).parse().map_err(|e: lowres_core::Error| bad(e.to_string()))?,
            bits: int(3)? as u32,
            hidden_size: int(4)? as usize,
            seed: int(5)?,
            metric: field(6).to_string(),
            train: num(7)?,
            valid: if field(8).is_empty() { None } else { Some(num(8)?) },
            test: num(9)?,
            wall_time_s: num(10)?,
            memory_bits: int(11)?,
            codebook_bits: int(12)?,
            epochs: int(13)? as usize,
        });
    }
    Ok(out)
}

//! Run configuration: a TOML file with `[experiment]`, `[data]`,
//! `[training]` and optional `[rbm]` sections.

use std::path::{Path, PathBuf};

use lowres_core::training::{Method, ProbLevels};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Mlp,
    Rbm,
    Nade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    FixedHidden,
    FixedMemory,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Idx,
    Libsvm,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticTask {
    Separable,
    Teacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbLevelChoice {
    #[default]
    GridPoints,
    PowerOfTwo,
}

impl From<ProbLevelChoice> for ProbLevels {
    fn from(choice: ProbLevelChoice) -> Self {
        match choice {
            ProbLevelChoice::GridPoints => ProbLevels::GridPoints,
            ProbLevelChoice::PowerOfTwo => ProbLevels::PowerOfTwo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub data: DataSection,
    pub training: Training,
    #[serde(default)]
    pub rbm: RbmSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    pub model: ModelChoice,
    /// A single method name or a list of them.
    pub method: OneOrMany,
    pub bits: Vec<u32>,
    pub sweep: SweepMode,
    pub hidden_size: Option<usize>,
    pub total_bits: Option<u64>,
    #[serde(default)]
    pub count_all_matrices: bool,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default = "one")]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub format: DataFormat,
    /// Base directory for relative data paths. Overridden by `LOWRES_DATA_DIR`.
    pub data_dir: Option<PathBuf>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    pub features: Option<usize>,
    pub task: Option<SyntheticTask>,
    pub samples: Option<usize>,
    pub classes: Option<usize>,
    pub teacher_hidden: Option<usize>,
    pub margin: Option<f64>,
    pub synthetic_seed: Option<u64>,
    pub train_size: Option<usize>,
    #[serde(default)]
    pub valid_size: usize,
    pub test_size: Option<usize>,
    #[serde(default)]
    pub split_seed: u64,
    /// Threshold inputs to {0, 1}; required for binary models on real-valued data.
    pub binarize: Option<f64>,
    /// Image height and width for PGM output.
    pub image_shape: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Training {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "one")]
    pub eval_every: usize,
    #[serde(default)]
    pub quantize_biases: bool,
    #[serde(default)]
    pub lr_decay: bool,
    #[serde(default = "default_center_bits")]
    pub center_bits: u32,
    #[serde(default)]
    pub prob_levels: ProbLevelChoice,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RbmSection {
    #[serde(default = "default_gibbs_steps")]
    pub gibbs_steps: usize,
    #[serde(default = "default_passes")]
    pub sample_passes: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_initial_conditions")]
    pub initial_conditions: usize,
}

impl Default for RbmSection {
    fn default() -> Self {
        Self {
            gibbs_steps: default_gibbs_steps(),
            sample_passes: default_passes(),
            record_every: default_record_every(),
            initial_conditions: default_initial_conditions(),
        }
    }
}

fn one() -> usize {
    1
}

fn default_center_bits() -> u32 {
    16
}

fn default_gibbs_steps() -> usize {
    15
}

fn default_passes() -> usize {
    3000
}

fn default_record_every() -> usize {
    1000
}

fn default_initial_conditions() -> usize {
    4
}

fn invalid(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {message}"))
}

impl RunConfig {
    /// Parses and schema-checks a configuration.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        Ok((config, text))
    }

    pub fn methods(&self) -> Result<Vec<Method>, CliError> {
        let names = match &self.experiment.method {
            OneOrMany::One(m) => vec![m.clone()],
            OneOrMany::Many(ms) => ms.clone(),
        };
        if names.is_empty() {
            return Err(invalid("experiment.method", "at least one method is required"));
        }
        names
            .iter()
            .map(|n| n.parse::<Method>().map_err(|_| invalid("experiment.method", format!(
                "unknown method {n:?} (expected baseline, nearest, rr, coarse_p or kmeans_offline)"
            ))))
            .collect()
    }

    fn check(&self) -> Result<(), CliError> {
        let exp = &self.experiment;
        self.methods()?;
        if exp.bits.is_empty() {
            return Err(invalid("experiment.bits", "list must be non-empty"));
        }
        if let Some(b) = exp.bits.iter().find(|b| !(2..=32).contains(*b)) {
            return Err(invalid("experiment.bits", format!("{b} is outside 2..=32")));
        }
        if exp.seeds.is_empty() {
            return Err(invalid("experiment.seeds", "list must be non-empty"));
        }
        match (exp.sweep, exp.hidden_size, exp.total_bits) {
            (SweepMode::FixedHidden, Some(h), None) if h >= 1 => {}
            (SweepMode::FixedHidden, Some(_), None) => {
                return Err(invalid("experiment.hidden_size", "must be at least 1"))
            }
            (SweepMode::FixedHidden, _, _) => {
                return Err(invalid(
                    "experiment.hidden_size",
                    "fixed_hidden sweeps need hidden_size and no total_bits",
                ))
            }
            (SweepMode::FixedMemory, None, Some(_)) => {}
            (SweepMode::FixedMemory, _, _) => {
                return Err(invalid(
                    "experiment.total_bits",
                    "fixed_memory sweeps need total_bits and no hidden_size",
                ))
            }
        }

        let t = &self.training;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(invalid("training.learning_rate", "must be a positive number"));
        }
        for (field, v) in [("training.epochs", t.epochs), ("training.batch_size", t.batch_size), ("training.eval_every", t.eval_every)] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if !(1..=64).contains(&t.center_bits) {
            return Err(invalid("training.center_bits", "must be in 1..=64"));
        }

        let r = &self.rbm;
        if r.record_every == 0 || r.initial_conditions == 0 {
            return Err(invalid("rbm", "record_every and initial_conditions must be at least 1"));
        }

        self.check_data()
    }

    fn check_data(&self) -> Result<(), CliError> {
        let d = &self.data;
        let require = |present: bool, field: &str| {
            if present {
                Ok(())
            } else {
                Err(invalid(field, format!("required when data.format = {:?}", format_name(d.format))))
            }
        };
        let forbid = |present: bool, field: &str| {
            if present {
                Err(invalid(field, format!("not used when data.format = {:?}", format_name(d.format))))
            } else {
                Ok(())
            }
        };
        let synthetic_fields = [
            (d.task.is_some(), "data.task"),
            (d.samples.is_some(), "data.samples"),
            (d.classes.is_some(), "data.classes"),
            (d.teacher_hidden.is_some(), "data.teacher_hidden"),
            (d.margin.is_some(), "data.margin"),
            (d.synthetic_seed.is_some(), "data.synthetic_seed"),
        ];
        let idx_fields = [
            (d.train_images.is_some(), "data.train_images"),
            (d.train_labels.is_some(), "data.train_labels"),
            (d.test_images.is_some(), "data.test_images"),
            (d.test_labels.is_some(), "data.test_labels"),
        ];
        let libsvm_fields = [(d.train_file.is_some(), "data.train_file"), (d.test_file.is_some(), "data.test_file")];

        let has_test_file = match d.format {
            DataFormat::Idx => {
                require(d.train_images.is_some(), "data.train_images")?;
                require(d.train_labels.is_some(), "data.train_labels")?;
                if d.test_images.is_some() != d.test_labels.is_some() {
                    return Err(invalid("data.test_labels", "test_images and test_labels go together"));
                }
                for (p, f) in synthetic_fields.iter().chain(&libsvm_fields) {
                    forbid(*p, f)?;
                }
                forbid(d.features.is_some(), "data.features")?;
                d.test_images.is_some()
            }
            DataFormat::Libsvm => {
                require(d.train_file.is_some(), "data.train_file")?;
                require(d.features.is_some(), "data.features")?;
                for (p, f) in synthetic_fields.iter().chain(&idx_fields) {
                    forbid(*p, f)?;
                }
                d.test_file.is_some()
            }
            DataFormat::Synthetic => {
                require(d.task.is_some(), "data.task")?;
                require(d.samples.is_some(), "data.samples")?;
                require(d.features.is_some(), "data.features")?;
                for (p, f) in idx_fields.iter().chain(&libsvm_fields) {
                    forbid(*p, f)?;
                }
                forbid(d.data_dir.is_some(), "data.data_dir")?;
                if d.task == Some(SyntheticTask::Separable) {
                    forbid(d.classes.is_some_and(|c| c != 2), "data.classes")?;
                    forbid(d.teacher_hidden.is_some(), "data.teacher_hidden")?;
                } else {
                    forbid(d.margin.is_some(), "data.margin")?;
                }
                false
            }
        };
        if !has_test_file && d.test_size.is_none() {
            return Err(invalid("data.test_size", "required when no separate test file is given"));
        }
        if let Some(t) = d.binarize {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid("data.binarize", "threshold must lie in [0, 1]"));
            }
        }
        if let Some([h, w]) = d.image_shape {
            if h == 0 || w == 0 {
                return Err(invalid("data.image_shape", "dimensions must be positive"));
            }
        }
        Ok(())
    }
}

pub(crate) fn format_name(format: DataFormat) -> &'static str {
    match format {
        DataFormat::Idx => "idx",
        DataFormat::Libsvm => "libsvm",
        DataFormat::Synthetic => "synthetic",
    }
}

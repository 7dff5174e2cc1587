//! Run configuration: a flat `key=value` file and command-line flags that
//! override it. Every key is a [`RunSpec`] field name; unknown keys are errors.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Parser;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("config key `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    fn new(key: &str, reason: impl Into<String>) -> Self {
        Self {
            key: key.to_owned(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Baseline,
    Pc,
    Compare,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "pc" => Ok(Mode::Pc),
            "compare" => Ok(Mode::Compare),
            _ => Err(format!("expected baseline, pc or compare, got `{s}`")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Pc => "pc",
            Mode::Compare => "compare",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Spirals,
    Cifar10,
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spirals" => Ok(DatasetKind::Spirals),
            "cifar10" => Ok(DatasetKind::Cifar10),
            _ => Err(format!("expected spirals or cifar10, got `{s}`")),
        }
    }
}

/// One experiment. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub mode: Mode,
    pub dataset: DatasetKind,
    /// Directory holding `data_batch_{1..5}.bin` and `test_batch.bin`.
    pub cifar_dir: Option<PathBuf>,
    /// Cap on records read for each CIFAR-10 split.
    pub cifar_limit: Option<usize>,
    pub spiral_points: usize,
    pub spiral_classes: usize,
    pub spiral_noise: f64,
    /// Validation share of the spiral data (CIFAR-10 validates on `test_batch.bin`).
    pub val_fraction: f64,
    /// Per-feature standardization fitted on the training split.
    pub standardize: bool,
    /// Predictor depth `L`.
    pub depth: usize,
    pub width: usize,
    /// Blocks added to form the corrector.
    pub k: usize,
    pub total_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed_init: u64,
    pub seed_shuffle: u64,
    pub seed_data: u64,
    pub output_dir: PathBuf,
    /// Write `plans.log` with the batch-plan fingerprint of every epoch.
    pub log_plans: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            mode: Mode::Compare,
            dataset: DatasetKind::Spirals,
            cifar_dir: None,
            cifar_limit: None,
            spiral_points: 1000,
            spiral_classes: 2,
            spiral_noise: 0.05,
            val_fraction: 0.2,
            standardize: false,
            depth: 8,
            width: 32,
            k: 4,
            total_epochs: 40,
            lr: 0.05,
            batch_size: 32,
            seed_init: 1,
            seed_shuffle: 2,
            seed_data: 3,
            output_dir: PathBuf::from("out"),
            log_plans: false,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError::new(key, format!("cannot parse `{value}`: {e}")))
}

impl RunSpec {
    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "mode" => self.mode = parse_value(key, value)?,
            "dataset" => self.dataset = parse_value(key, value)?,
            "cifar_dir" => self.cifar_dir = Some(PathBuf::from(value)),
            "cifar_limit" => self.cifar_limit = Some(parse_value(key, value)?),
            "spiral_points" => self.spiral_points = parse_value(key, value)?,
            "spiral_classes" => self.spiral_classes = parse_value(key, value)?,
            "spiral_noise" => self.spiral_noise = parse_value(key, value)?,
            "val_fraction" => self.val_fraction = parse_value(key, value)?,
            "standardize" => self.standardize = parse_value(key, value)?,
            "depth" => self.depth = parse_value(key, value)?,
            "width" => self.width = parse_value(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "total_epochs" => self.total_epochs = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "seed_init" => self.seed_init = parse_value(key, value)?,
            "seed_shuffle" => self.seed_shuffle = parse_value(key, value)?,
            "seed_data" => self.seed_data = parse_value(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "log_plans" => self.log_plans = parse_value(key, value)?,
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::new(line, format!("line {}: expected key=value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |key: &str, reason: &str| Err(ConfigError::new(key, reason));
        if self.depth < 3 {
            return fail("depth", "a network needs at least 3 blocks");
        }
        if self.width == 0 {
            return fail("width", "must be positive");
        }
        if self.total_epochs == 0 {
            return fail("total_epochs", "must be positive");
        }
        if self.mode != Mode::Baseline && !self.total_epochs.is_multiple_of(2) {
            return fail(
                "total_epochs",
                "predictor-corrector training alternates paired epochs, so the count must be even",
            );
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr", "must be a positive finite number");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be positive");
        }
        match self.dataset {
            DatasetKind::Spirals => {
                if self.spiral_points == 0 {
                    return fail("spiral_points", "must be positive");
                }
                if self.spiral_classes < 2 {
                    return fail("spiral_classes", "need at least 2 classes");
                }
                if !(self.spiral_noise >= 0.0 && self.spiral_noise.is_finite()) {
                    return fail("spiral_noise", "must be a non-negative finite number");
                }
                if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
                    return fail("val_fraction", "must lie strictly between 0 and 1");
                }
            }
            DatasetKind::Cifar10 => {
                if self.cifar_dir.is_none() {
                    return fail("cifar_dir", "required when dataset=cifar10");
                }
                if self.cifar_limit == Some(0) {
                    return fail("cifar_limit", "must be positive");
                }
            }
        }
        Ok(())
    }
}

/// Parses config-file text into a validated spec, starting from the defaults.
pub fn parse_config(text: &str) -> Result<RunSpec, ConfigError> {
    let mut spec = RunSpec::default();
    spec.apply_text(text)?;
    spec.validate()?;
    Ok(spec)
}

/// Train residual networks with and without predictor-corrector alternation.
#[derive(Debug, Parser, Default)]
#[command(name = "pctrain", version)]
pub struct Flags {
    /// baseline | pc | compare
    #[arg(long)]
    pub mode: Option<String>,
    /// spirals | cifar10
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub cifar_dir: Option<PathBuf>,
    /// Predictor depth L (blocks, including input and output blocks)
    #[arg(long)]
    pub depth: Option<String>,
    #[arg(long)]
    pub width: Option<String>,
    /// Blocks added to form the corrector
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub seed_init: Option<String>,
    #[arg(long)]
    pub seed_shuffle: Option<String>,
    #[arg(long)]
    pub seed_data: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file applied before the other flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Record each epoch's batch-plan fingerprint in plans.log
    #[arg(long)]
    pub log_plans: bool,
}

impl Flags {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let text = [
            ("mode", &self.mode),
            ("dataset", &self.dataset),
            ("depth", &self.depth),
            ("width", &self.width),
            ("k", &self.k),
            ("total_epochs", &self.epochs),
            ("lr", &self.lr),
            ("batch_size", &self.batch_size),
            ("seed_init", &self.seed_init),
            ("seed_shuffle", &self.seed_shuffle),
            ("seed_data", &self.seed_data),
        ];
        let paths = [("cifar_dir", &self.cifar_dir), ("output_dir", &self.out)];
        let mut out: Vec<_> = text
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
        out.extend(
            paths
                .into_iter()
                .filter_map(|(k, v)| v.as_ref().map(|p| (k, p.display().to_string()))),
        );
        if self.log_plans {
            out.push(("log_plans", "true".into()));
        }
        out
    }

    /// Defaults, then the config file (if given), then the flags.
    pub fn into_spec(self) -> Result<RunSpec, ConfigError> {
        let mut spec = RunSpec::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| {
                ConfigError::new("config", format!("cannot read {}: {e}", path.display()))
            })?;
            spec.apply_text(&text)?;
        }
        for (key, value) in self.overrides() {
            spec.set(key, &value)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

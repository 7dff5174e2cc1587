//! Executes a [`RunSpec`]: loads data, builds the predictor and corrector,
//! trains the requested arms and writes `metrics.csv`, checkpoints and
//! `summary.txt` into the output directory.

use std::fs;
use std::io;
use std::path::PathBuf;

use pctrain_core::data::{cifar10_files, load_cifar10_limited, Standardizer};
use pctrain_core::{
    construct_corrector, make_spirals, save_checkpoint, split, time_savings, train_baseline,
    train_compare, train_pc, Dataset, Network, PcConfig, Rng, RunReport,
};
use thiserror::Error;

use crate::config::{ConfigError, DatasetKind, Mode, RunSpec};
use crate::metrics::{report_rows, sig6, write_metrics, write_summary};

pub const METRICS_FILE: &str = "metrics.csv";
pub const MODEL_FILE: &str = "model.ckpt";
/// Baseline checkpoint in compare mode; `model.ckpt` then holds the corrector.
pub const BASELINE_MODEL_FILE: &str = "baseline.ckpt";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const PLANS_FILE: &str = "plans.log";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] pctrain_core::Error),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Train(pctrain_core::Error::Io(_)) | RunError::Io(_) => 3,
            RunError::Train(_) => 1,
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub pc: Option<RunReport>,
    pub baseline: Option<RunReport>,
    pub time_savings_pct: Option<f64>,
    /// `key=value` pairs written to `summary.txt`.
    pub summary: Vec<(&'static str, String)>,
    pub output_dir: PathBuf,
}

/// Training and validation splits for the spec's dataset.
pub fn load_data(spec: &RunSpec) -> Result<(Dataset, Dataset), RunError> {
    let (train, val) = match spec.dataset {
        DatasetKind::Spirals => {
            let all = make_spirals(
                spec.spiral_points,
                spec.spiral_classes,
                spec.spiral_noise,
                spec.seed_data,
            )?;
            split(&all, spec.val_fraction, spec.seed_data)?
        }
        DatasetKind::Cifar10 => {
            let dir = spec.cifar_dir.as_ref().ok_or_else(|| ConfigError {
                key: "cifar_dir".into(),
                reason: "required when dataset=cifar10".into(),
            })?;
            if !dir.is_dir() {
                return Err(RunError::Io(io::Error::new(
                    io::ErrorKind::NotFound,
                    format!("CIFAR-10 directory {} not found", dir.display()),
                )));
            }
            let (train_files, test_file) = cifar10_files(dir);
            let limit = spec.cifar_limit.unwrap_or(usize::MAX);
            (
                load_cifar10_limited(&train_files, limit)?,
                load_cifar10_limited(&[test_file], limit)?,
            )
        }
    };
    if spec.standardize {
        let s = Standardizer::fit(&train);
        return Ok((s.apply(&train)?, s.apply(&val)?));
    }
    Ok((train, val))
}

fn train_config(spec: &RunSpec) -> PcConfig {
    PcConfig {
        k: spec.k,
        total_epochs: spec.total_epochs,
        lr: spec.lr,
        batch_size: spec.batch_size,
        shuffle_seed: spec.seed_shuffle,
    }
}

fn plan_lines(report: &RunReport) -> String {
    report
        .records
        .iter()
        .map(|r| {
            format!(
                "{},{},{:016x}\n",
                r.role.as_str(),
                r.epoch,
                r.plan_fingerprint
            )
        })
        .collect()
}

pub fn run(spec: &RunSpec) -> Result<RunOutcome, RunError> {
    spec.validate()?;
    let (train, val) = load_data(spec)?;
    let predictor = Network::new(
        train.dim(),
        spec.width,
        train.num_classes(),
        spec.depth,
        &mut Rng::new(spec.seed_init),
    )?;
    // the baseline trains a network of corrector depth from the same starting point
    let corrector = construct_corrector(&predictor, spec.k)?;
    let cfg = train_config(spec);

    let (pc, baseline) = match spec.mode {
        Mode::Pc => (
            Some(train_pc(predictor, corrector, &cfg, &train, &val, None)?),
            None,
        ),
        Mode::Baseline => (None, Some(train_baseline(corrector, &cfg, &train, &val)?)),
        Mode::Compare => {
            let (pc, base) =
                train_compare(predictor, corrector.clone(), corrector, &cfg, &train, &val)?;
            (Some(pc), Some(base))
        }
    };
    let savings = match (&pc, &baseline) {
        (Some(p), Some(b)) => Some(time_savings(p, b)?),
        _ => None,
    };

    let out = &spec.output_dir;
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    let mut plans = String::new();
    for report in pc.iter().chain(&baseline) {
        rows.extend(report_rows(report));
        plans.push_str(&plan_lines(report));
    }
    write_metrics(&rows, &out.join(METRICS_FILE))?;
    if spec.log_plans {
        fs::write(out.join(PLANS_FILE), plans)?;
    }
    match (&pc, &baseline) {
        (Some(p), Some(b)) => {
            save_checkpoint(&p.final_model, out.join(MODEL_FILE))?;
            save_checkpoint(&b.final_model, out.join(BASELINE_MODEL_FILE))?;
        }
        (Some(r), None) | (None, Some(r)) => save_checkpoint(&r.final_model, out.join(MODEL_FILE))?,
        (None, None) => {}
    }

    let mut summary = Vec::new();
    if let Some(s) = savings {
        summary.push(("time_savings_pct", sig6(s)));
    }
    if let Some(acc) = baseline.as_ref().and_then(RunReport::final_val_accuracy) {
        summary.push(("baseline_final_val_acc", sig6(acc)));
    }
    if let Some(acc) = pc.as_ref().and_then(RunReport::final_val_accuracy) {
        summary.push(("pc_final_val_acc", sig6(acc)));
    }
    write_summary(&summary, &out.join(SUMMARY_FILE))?;

    Ok(RunOutcome {
        pc,
        baseline,
        time_savings_pct: savings,
        summary,
        output_dir: out.clone(),
    })
}

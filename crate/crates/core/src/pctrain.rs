//! Predictor-corrector training.
//!
//! The predictor `N_1` has `L` blocks. The corrector `N_2` is built once by
//! inserting `K` copies of the predictor's block 2 directly above block 1,
//! so predictor block `l ≥ 2` lines up with corrector block `l + K`.
//! Training alternates whole epochs: predictor epoch, copy blocks
//! `2..=L` up into the corrector, corrector epoch, copy the same range back
//! down. The predictor's input block and the corrector's blocks `1..=K+1`
//! are never copied; SGD alone maintains them. The corrector is the
//! trained model.

use std::time::Instant;

use crate::data::{plan_batches, Dataset};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::nn::{correct_count, softmax_xent, BlockKind};
use crate::tensor::mix_seed;

/// Rows per forward pass when evaluating.
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct PcConfig {
    /// Number of blocks added to form the corrector.
    pub k: usize,
    pub total_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub shuffle_seed: u64,
}

impl PcConfig {
    fn validate_common(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::InvalidArgument(
                "total_epochs must be positive".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }

    /// Checks the constraints of an alternating run, which needs an even epoch count.
    pub fn validate_pc(&self) -> Result<()> {
        self.validate_common()?;
        if !self.total_epochs.is_multiple_of(2) {
            return Err(Error::OddEpochCount(self.total_epochs));
        }
        Ok(())
    }

    pub fn validate_baseline(&self) -> Result<()> {
        self.validate_common()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Predictor,
    Corrector,
    Baseline,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Predictor => "predictor",
            Role::Corrector => "corrector",
            Role::Baseline => "baseline",
        }
    }
}

/// Metrics of the model that trained during one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based, counted across the whole run.
    pub epoch: usize,
    pub role: Role,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub wall_ms: f64,
    /// Fingerprint of the batch plan the epoch consumed.
    pub plan_fingerprint: u64,
}

/// Validation of the model that sat out an epoch, taken right after the sync that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRecord {
    pub epoch: usize,
    pub role: Role,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub records: Vec<EpochRecord>,
    /// Empty for baseline runs.
    pub counterpart: Vec<ValidationRecord>,
    pub final_model: Network,
    pub config: PcConfig,
}

impl RunReport {
    pub fn total_wall_ms(&self) -> f64 {
        self.records.iter().map(|r| r.wall_ms).sum()
    }

    pub fn final_val_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.val_accuracy)
    }

    pub fn mean_wall_ms(&self, role: Role) -> Option<f64> {
        let times: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.role == role)
            .map(|r| r.wall_ms)
            .collect();
        (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
    pub wall_ms: f64,
    pub plan_fingerprint: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncDirection {
    /// Predictor blocks `2..=L` into corrector blocks `K+2..=K+L`.
    Up,
    /// Corrector blocks `K+2..=K+L` into predictor blocks `2..=L`.
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncPhase {
    Before,
    After,
}

/// Passed to the observer of [`train_pc`] around every copy.
#[derive(Debug)]
pub struct SyncEvent<'a> {
    /// 1-based alternation count.
    pub iteration: usize,
    pub direction: SyncDirection,
    pub phase: SyncPhase,
    pub k: usize,
    pub predictor: &'a Network,
    pub corrector: &'a Network,
}

pub type SyncObserver<'o> = &'o mut dyn FnMut(&SyncEvent<'_>);

/// Builds the corrector: a deep copy of `predictor` with `k` further copies of
/// block 2 inserted between block 1 and block 2.
pub fn construct_corrector(predictor: &Network, k: usize) -> Result<Network> {
    if predictor.depth() < 3 {
        return Err(Error::BadDepth(predictor.depth()));
    }
    let mut corrector = predictor.clone();
    if k == 0 {
        return Ok(corrector);
    }
    let b2 = predictor.get_params(2)?;
    if b2.kind() != BlockKind::Residual {
        return Err(Error::NotResidual(b2.kind()));
    }
    for _ in 0..k {
        corrector.insert_block(2, b2.clone());
    }
    Ok(corrector)
}

fn check_depths(predictor: &Network, corrector: &Network, k: usize) -> Result<()> {
    if corrector.depth() != predictor.depth() + k {
        return Err(Error::DepthMismatch {
            predictor: predictor.depth(),
            corrector: corrector.depth(),
            k,
        });
    }
    Ok(())
}

/// Copies predictor `P_l` to corrector `P_{l+K}` for `l = 2..=L`.
pub fn sync_up(predictor: &Network, corrector: &mut Network, k: usize) -> Result<()> {
    check_depths(predictor, corrector, k)?;
    for l in 2..=predictor.depth() {
        corrector.set_params(l + k, predictor.block(l)?)?;
    }
    Ok(())
}

/// Copies corrector `P_{l+K}` to predictor `P_l` for `l = 2..=L`.
pub fn sync_down(corrector: &Network, predictor: &mut Network, k: usize) -> Result<()> {
    check_depths(predictor, corrector, k)?;
    for l in 2..=predictor.depth() {
        predictor.set_params(l, corrector.block(l + k)?)?;
    }
    Ok(())
}

/// Shuffle seed of global epoch `epoch` (1-based); shared by every arm of a comparison.
pub fn epoch_seed(shuffle_seed: u64, epoch: usize) -> u64 {
    mix_seed(shuffle_seed, epoch as u64)
}

fn check_compatible(net: &Network, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != net.input_dim() || data.num_classes() != net.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} features / {} classes, network expects {} / {}",
            data.dim(),
            data.num_classes(),
            net.input_dim(),
            net.num_classes()
        )));
    }
    Ok(())
}

/// One shuffled pass of mini-batch SGD. `wall_ms` covers forward, backward and
/// update only; batch assembly is excluded.
pub fn train_epoch(
    net: &mut Network,
    data: &Dataset,
    lr: f64,
    batch_size: usize,
    epoch_seed: u64,
) -> Result<EpochStats> {
    check_compatible(net, data)?;
    let plan = plan_batches(data.len(), batch_size, epoch_seed)?;
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut wall_ms = 0.0;
    for indices in plan.batches() {
        let (x, labels) = data.batch(indices)?;
        let start = Instant::now();
        let (logits, caches) = net.forward(&x)?;
        let (loss, dlogits) = softmax_xent(&logits, &labels)?;
        let grads = net.backward(&caches, &dlogits)?;
        net.sgd_update(&grads, lr)?;
        wall_ms += start.elapsed().as_secs_f64() * 1e3;
        loss_sum += loss * labels.len() as f64;
        correct += correct_count(&logits, &labels)?;
    }
    let n = data.len() as f64;
    Ok(EpochStats {
        loss: loss_sum / n,
        accuracy: correct as f64 / n,
        wall_ms,
        plan_fingerprint: plan.fingerprint(),
    })
}

/// Mean loss and accuracy over a dataset, in fixed-size chunks.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<(f64, f64)> {
    check_compatible(net, data)?;
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let (x, labels) = data.batch(chunk)?;
        let logits = net.predict(&x)?;
        loss_sum += softmax_xent(&logits, &labels)?.0 * chunk.len() as f64;
        correct += correct_count(&logits, &labels)?;
    }
    let n = data.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

fn run_epoch(
    net: &mut Network,
    role: Role,
    epoch: usize,
    cfg: &PcConfig,
    train: &Dataset,
    val: &Dataset,
) -> Result<EpochRecord> {
    let stats = train_epoch(
        net,
        train,
        cfg.lr,
        cfg.batch_size,
        epoch_seed(cfg.shuffle_seed, epoch),
    )?;
    let (val_loss, val_accuracy) = evaluate(net, val)?;
    Ok(EpochRecord {
        epoch,
        role,
        train_loss: stats.loss,
        train_accuracy: stats.accuracy,
        val_loss,
        val_accuracy,
        wall_ms: stats.wall_ms,
        plan_fingerprint: stats.plan_fingerprint,
    })
}

fn counterpart_record(
    net: &Network,
    role: Role,
    epoch: usize,
    val: &Dataset,
) -> Result<ValidationRecord> {
    let (val_loss, val_accuracy) = evaluate(net, val)?;
    Ok(ValidationRecord {
        epoch,
        role,
        val_loss,
        val_accuracy,
    })
}

/// State of an alternating run, advanced one epoch at a time.
struct PcLoop<'o> {
    predictor: Network,
    corrector: Network,
    records: Vec<EpochRecord>,
    counterpart: Vec<ValidationRecord>,
    observer: Option<SyncObserver<'o>>,
}

impl<'o> PcLoop<'o> {
    fn new(
        predictor: Network,
        corrector: Network,
        cfg: &PcConfig,
        train: &Dataset,
        val: &Dataset,
        observer: Option<SyncObserver<'o>>,
    ) -> Result<Self> {
        cfg.validate_pc()?;
        check_depths(&predictor, &corrector, cfg.k)?;
        for net in [&predictor, &corrector] {
            check_compatible(net, train)?;
            check_compatible(net, val)?;
        }
        Ok(Self {
            predictor,
            corrector,
            records: Vec::with_capacity(cfg.total_epochs),
            counterpart: Vec::with_capacity(cfg.total_epochs),
            observer,
        })
    }

    fn notify(&mut self, iteration: usize, direction: SyncDirection, phase: SyncPhase, k: usize) {
        if let Some(obs) = self.observer.as_mut() {
            obs(&SyncEvent {
                iteration,
                direction,
                phase,
                k,
                predictor: &self.predictor,
                corrector: &self.corrector,
            });
        }
    }

    /// Odd epochs train the predictor and sync up; even epochs train the
    /// corrector and sync down.
    fn epoch(
        &mut self,
        epoch: usize,
        cfg: &PcConfig,
        train: &Dataset,
        val: &Dataset,
    ) -> Result<()> {
        let iteration = epoch.div_ceil(2);
        let k = cfg.k;
        if epoch % 2 == 1 {
            let r = run_epoch(&mut self.predictor, Role::Predictor, epoch, cfg, train, val)?;
            self.records.push(r);
            self.notify(iteration, SyncDirection::Up, SyncPhase::Before, k);
            sync_up(&self.predictor, &mut self.corrector, k)?;
            self.notify(iteration, SyncDirection::Up, SyncPhase::After, k);
            let v = counterpart_record(&self.corrector, Role::Corrector, epoch, val)?;
            self.counterpart.push(v);
        } else {
            let r = run_epoch(&mut self.corrector, Role::Corrector, epoch, cfg, train, val)?;
            self.records.push(r);
            self.notify(iteration, SyncDirection::Down, SyncPhase::Before, k);
            sync_down(&self.corrector, &mut self.predictor, k)?;
            self.notify(iteration, SyncDirection::Down, SyncPhase::After, k);
            let v = counterpart_record(&self.predictor, Role::Predictor, epoch, val)?;
            self.counterpart.push(v);
        }
        Ok(())
    }

    fn finish(self, cfg: &PcConfig) -> RunReport {
        RunReport {
            records: self.records,
            counterpart: self.counterpart,
            final_model: self.corrector,
            config: cfg.clone(),
        }
    }
}

/// Alternating predictor/corrector training for `cfg.total_epochs` epochs.
/// The optional observer sees both networks immediately before and after every sync.
pub fn train_pc(
    predictor: Network,
    corrector: Network,
    cfg: &PcConfig,
    train: &Dataset,
    val: &Dataset,
    observer: Option<SyncObserver<'_>>,
) -> Result<RunReport> {
    let mut pc = PcLoop::new(predictor, corrector, cfg, train, val, observer)?;
    for epoch in 1..=cfg.total_epochs {
        pc.epoch(epoch, cfg, train, val)?;
    }
    Ok(pc.finish(cfg))
}

fn check_baseline(net: &Network, cfg: &PcConfig, train: &Dataset, val: &Dataset) -> Result<()> {
    cfg.validate_baseline()?;
    check_compatible(net, train)?;
    check_compatible(net, val)
}

/// Conventional training of a single network, using the same per-epoch shuffle seeds as [`train_pc`].
pub fn train_baseline(
    mut net: Network,
    cfg: &PcConfig,
    train: &Dataset,
    val: &Dataset,
) -> Result<RunReport> {
    check_baseline(&net, cfg, train, val)?;
    let records = (1..=cfg.total_epochs)
        .map(|epoch| run_epoch(&mut net, Role::Baseline, epoch, cfg, train, val))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport {
        records,
        counterpart: Vec::new(),
        final_model: net,
        config: cfg.clone(),
    })
}

/// Runs [`train_pc`] and [`train_baseline`] with epochs interleaved
/// (pc 1, baseline 1, pc 2, ...) on the calling thread. Both reports are
/// bitwise identical to separate runs; interleaving only makes load
/// fluctuations on the machine fall on both arms alike, so their wall times
/// stay comparable.
pub fn train_compare(
    predictor: Network,
    corrector: Network,
    mut baseline: Network,
    cfg: &PcConfig,
    train: &Dataset,
    val: &Dataset,
) -> Result<(RunReport, RunReport)> {
    let mut pc = PcLoop::new(predictor, corrector, cfg, train, val, None)?;
    check_baseline(&baseline, cfg, train, val)?;
    let mut records = Vec::with_capacity(cfg.total_epochs);
    for epoch in 1..=cfg.total_epochs {
        pc.epoch(epoch, cfg, train, val)?;
        records.push(run_epoch(
            &mut baseline,
            Role::Baseline,
            epoch,
            cfg,
            train,
            val,
        )?);
    }
    let base = RunReport {
        records,
        counterpart: Vec::new(),
        final_model: baseline,
        config: cfg.clone(),
    };
    Ok((pc.finish(cfg), base))
}

/// `100 · (1 − Σ pc wall time / Σ baseline wall time)`.
pub fn time_savings(pc: &RunReport, baseline: &RunReport) -> Result<f64> {
    if pc.records.len() != baseline.records.len() {
        return Err(Error::LengthMismatch(
            pc.records.len(),
            baseline.records.len(),
        ));
    }
    let base = baseline.total_wall_ms();
    if base <= 0.0 {
        return Ok(0.0);
    }
    Ok(100.0 * (1.0 - pc.total_wall_ms() / base))
}

/// FLOP-model estimate of [`time_savings`] for uniform compute-bound blocks: `100·K / (2(L+K))`.
pub fn expected_savings_pct(depth: usize, k: usize) -> f64 {
    100.0 * k as f64 / (2.0 * (depth + k) as f64)
}

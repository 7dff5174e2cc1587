//! Predictor-corrector training of residual networks made of dense blocks.
//!
//! A shallow predictor and a deeper corrector share their upper blocks and
//! train in alternating epochs; the extra corrector blocks start as copies of
//! the predictor's lowest residual block. The baseline trainer and timing
//! helpers in [`pctrain`] measure what the alternation saves.
//!
//! - [`tensor`]: row-major `f64` arrays and the seeded generator
//! - [`nn`]: block forward/backward and softmax cross-entropy
//! - [`model`]: block stacks, SGD, checkpoints
//! - [`pctrain`]: corrector construction, syncs, training loops
//! - [`data`]: CIFAR-10 loader, spiral generator, splits, batch plans

pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod pctrain;
pub mod tensor;

pub use data::{make_spirals, plan_batches, split, BatchPlan, Dataset};
pub use error::{Error, Result};
pub use model::{load_checkpoint, save_checkpoint, Network};
pub use nn::{BlockCache, BlockGrads, BlockKind, BlockParams};
pub use pctrain::{
    construct_corrector, sync_down, sync_up, time_savings, train_baseline, train_compare,
    train_epoch, train_pc, EpochRecord, PcConfig, Role, RunReport, SyncDirection, SyncEvent,
    SyncPhase, ValidationRecord,
};
pub use tensor::{Rng, Tensor};

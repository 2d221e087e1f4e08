//! Experiment runner for the sts2 simulator.
//!
//! An [`ExperimentConfig`] names the controller of every player slot, the
//! reward, the learning algorithm and its budget. [`train`] runs it and
//! returns a [`Checkpoint`] plus the metrics log; [`evaluate`] and
//! [`crossplay`] tally goals and possession with greedy policies; the
//! [`presets`] reproduce the standard experiment set.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod presets;
pub mod selfcheck;
pub mod slots;
pub mod stats;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{AdvanceWhen, AlgoConfig, CurriculumStage, ExperimentConfig, RewardChoice};
pub use error::{HarnessError, Result};
pub use evaluate::{crossplay, evaluate, evaluate_lineup, CrossplayOutcome, EvalOutcome, Team};
pub use slots::{Lineup, SlotAssignment, SlotKey, SlotSpec};
pub use stats::MatchStats;
pub use train::{train, MetricsRecord, TrainOutcome};

/// Seed for sub-stream `stream` of `seed` (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

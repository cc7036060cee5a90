//! Deterministic closed-loop longitudinal driving simulator for studying
//! how AEB/ACC safety controllers fail under object-level perception
//! faults, and how much three control-level safeguards recover.
//!
//! The pipeline per control frame: scripted ground truth -> object-level
//! sensing -> parameterized error injection (false negatives, phantom
//! objects, distance bias, flicker) -> nearest-neighbor tracking ->
//! ACC/AEB with optional safeguards -> lagged actuation. Batches evaluate
//! a condition matrix over seeded scenario families with bit-identical
//! ground truth across conditions.
//!
//! ## Runnable examples
//!
//! ```bash
//! cargo run --release -p longsim --example single_run
//! cargo run --release -p longsim --example baseline_batch
//! cargo run --release -p longsim --example false_negative
//! cargo run --release -p longsim --example phantom_braking
//! cargo run --release -p longsim --example distance_bias
//! cargo run --release -p longsim --example flicker_instability
//! cargo run --release -p longsim --example safeguards_ablation
//! cargo run --release -p longsim --example full_matrix
//! ```
//!
//! A thin CLI (`longsim`) wraps the same library for file-based workflows:
//! `run`, `sweep`, `compare`, `plot`, `replay`.

pub mod chart;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod harness;
pub mod metrics;
pub mod output;
pub mod perception;
pub mod scenario;
pub mod seeding;
pub mod sim;
pub mod trace;
pub mod tracker;

pub use config::ExperimentConfig;
pub use sim::{run_once, SimConfig};

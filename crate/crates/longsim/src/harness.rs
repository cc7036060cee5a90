//! Batch orchestration: deterministic planning of the condition matrix,
//! parallel execution, and replay.
//!
//! Scenario seeds derive from `(root_seed, family ordinal, run index)` only,
//! so every condition sees byte-identical ground truth and adding conditions
//! never perturbs sampling. Results merge in plan order; the parallelism
//! degree cannot change any output byte.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::config::{ConfigError, ExperimentConfig, TraceVerbosity};
use crate::metrics::{compute_run_metrics, RunMetrics};
use crate::scenario::ScenarioFamily;
use crate::seeding::run_seed;
use crate::sim::{ground_truth_table, run_once, RunOutcome};
use crate::trace::RunTrace;

/// One planned run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDescriptor {
    /// Position in the plan; results merge on this.
    pub order: usize,
    pub condition_index: usize,
    pub family: ScenarioFamily,
    pub run_index: u32,
    pub seed: u64,
}

/// Full cross product conditions x families x run indices, in that order.
pub fn plan(cfg: &ExperimentConfig) -> Result<Vec<RunDescriptor>, ConfigError> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(
        cfg.conditions.len() * cfg.families.len() * cfg.runs_per_family as usize,
    );
    let mut order = 0;
    for (condition_index, _) in cfg.conditions.iter().enumerate() {
        for &family in &cfg.families {
            for run_index in 0..cfg.runs_per_family {
                out.push(RunDescriptor {
                    order,
                    condition_index,
                    family,
                    run_index,
                    seed: run_seed(cfg.root_seed, family.ordinal(), run_index as u64),
                });
                order += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "detail")]
pub enum RunStatus {
    Ok,
    Failed(String),
}

/// Persisted record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub condition: String,
    pub family: String,
    pub run_index: u32,
    pub seed: u64,
    pub status: RunStatus,
    pub metrics: Option<RunMetrics>,
    /// Echo of the sampled scenario parameters, for auditability.
    pub sampled_params: serde_json::Value,
    pub version: String,
}

fn execute_one(cfg: &ExperimentConfig, desc: &RunDescriptor) -> (RunRecord, Option<RunOutcome>) {
    let condition = &cfg.conditions[desc.condition_index];
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        run_once(
            &cfg.sim,
            desc.family,
            desc.seed,
            &condition.label,
            &condition.attack,
            &condition.safeguards,
        )
    }));
    match result {
        Ok(outcome) => {
            let metrics = compute_run_metrics(&outcome.trace);
            let record = RunRecord {
                condition: condition.label.clone(),
                family: desc.family.name().to_string(),
                run_index: desc.run_index,
                seed: desc.seed,
                status: match &metrics {
                    Ok(_) => RunStatus::Ok,
                    Err(e) => RunStatus::Failed(e.to_string()),
                },
                metrics: metrics.ok(),
                sampled_params: serde_json::to_value(&outcome.spec.params)
                    .unwrap_or(serde_json::Value::Null),
                version: env!("CARGO_PKG_VERSION").to_string(),
            };
            (record, Some(outcome))
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "run panicked".to_string());
            let record = RunRecord {
                condition: condition.label.clone(),
                family: desc.family.name().to_string(),
                run_index: desc.run_index,
                seed: desc.seed,
                status: RunStatus::Failed(message),
                metrics: None,
                sampled_params: serde_json::Value::Null,
                version: env!("CARGO_PKG_VERSION").to_string(),
            };
            (record, None)
        }
    }
}

fn trace_path(root: &Path, record: &RunRecord) -> std::path::PathBuf {
    root.join("traces")
        .join(&record.condition)
        .join(format!("{}_{:04}.csv", record.family, record.run_index))
}

fn truth_path(root: &Path, condition: &str, family: &str, run_index: u32) -> std::path::PathBuf {
    root.join("truth")
        .join(condition)
        .join(format!("{family}_{run_index:04}.csv"))
}

/// Executes every planned run. A per-run internal fault becomes a failed
/// record; the batch always completes. With full trace verbosity each run's
/// trace and the scripted ground-truth table are persisted as they finish.
pub fn execute(cfg: &ExperimentConfig, descriptors: &[RunDescriptor]) -> Vec<RunRecord> {
    let write_full = cfg.trace == TraceVerbosity::Full;
    let run_one = |desc: &RunDescriptor| -> RunRecord {
        let (record, outcome) = execute_one(cfg, desc);
        if write_full {
            if let Some(outcome) = &outcome {
                let path = trace_path(&cfg.output_dir, &record);
                if let Err(e) = outcome.trace.save(&path) {
                    eprintln!("warning: failed to write {}: {e}", path.display());
                }
                let truth = ground_truth_table(&cfg.sim, desc.family, desc.seed);
                let tpath = truth_path(
                    &cfg.output_dir,
                    &record.condition,
                    &record.family,
                    desc.run_index,
                );
                if let Err(e) = std::fs::write(&tpath, truth) {
                    eprintln!("warning: failed to write {}: {e}", tpath.display());
                }
            }
        }
        record
    };

    if cfg.parallelism == 1 {
        descriptors.iter().map(run_one).collect()
    } else if cfg.parallelism == 0 {
        descriptors.par_iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .expect("worker pool");
        pool.install(|| descriptors.par_iter().map(run_one).collect())
    }
}

/// Prepares the output tree; fails before any simulation starts if the
/// target is not writable.
pub fn prepare_output_dir(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    let root = &cfg.output_dir;
    std::fs::create_dir_all(root)?;
    std::fs::create_dir_all(root.join("charts"))?;
    if cfg.trace == TraceVerbosity::Full {
        for c in &cfg.conditions {
            std::fs::create_dir_all(root.join("traces").join(&c.label))?;
            std::fs::create_dir_all(root.join("truth").join(&c.label))?;
        }
    }
    let probe = root.join(".write_probe");
    std::fs::write(&probe, b"ok")?;
    std::fs::remove_file(&probe)?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Trace(#[from] crate::trace::TraceError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("no stored record matches condition={condition} family={family} seed={seed}")]
    NoMatchingRecord {
        condition: String,
        family: String,
        seed: u64,
    },
    #[error("recomputed metrics differ from the stored record")]
    Mismatch,
}

/// Outcome of auditing one stored trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub trace: RunTrace,
    pub metrics: RunMetrics,
    /// `Some(true)` if a stored record was found and matched bit-exactly.
    pub matches_record: Option<bool>,
}

/// Recomputes metrics from a trace file alone and, when records are given,
/// compares against the stored result.
pub fn replay(
    trace_path: &Path,
    records: Option<&[RunRecord]>,
) -> Result<ReplayReport, ReplayError> {
    let trace = RunTrace::load(trace_path)?;
    let metrics = compute_run_metrics(&trace)?;
    let matches_record = match records {
        None => None,
        Some(records) => {
            let stored = records
                .iter()
                .find(|r| {
                    r.condition == trace.meta.condition
                        && r.family == trace.meta.family
                        && r.seed == trace.meta.seed
                })
                .ok_or_else(|| ReplayError::NoMatchingRecord {
                    condition: trace.meta.condition.clone(),
                    family: trace.meta.family.clone(),
                    seed: trace.meta.seed,
                })?;
            Some(stored.metrics.as_ref() == Some(&metrics))
        }
    };
    Ok(ReplayReport {
        trace,
        metrics,
        matches_record,
    })
}

/// Writes one record per line (JSON Lines), in plan order.
pub fn write_records(path: &Path, records: &[RunRecord]) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_records(path: &Path) -> std::io::Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}

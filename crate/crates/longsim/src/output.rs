//! Result persistence: aggregate tables, condition comparisons, assertion
//! evaluation, and chart emission. Every output is a deterministic function
//! of the run records; wall-clock timestamps live only in the sidecar log.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::chart;
use crate::config::{AssertMetric, Assertion, ExperimentConfig};
use crate::harness::{RunRecord, RunStatus};
use crate::metrics::{aggregate, AggregateSummary, GroupSummary};

/// Groups records and aggregates per (condition, family) plus pooled rows.
pub fn aggregate_records(records: &[RunRecord]) -> AggregateSummary {
    let triples: Vec<(&str, &str, &crate::metrics::RunMetrics)> = records
        .iter()
        .filter_map(|r| {
            r.metrics
                .as_ref()
                .map(|m| (r.condition.as_str(), r.family.as_str(), m))
        })
        .collect();
    aggregate(&triples)
}

/// Long-format delimiter-separated table of the aggregate summary.
pub fn summary_csv(summary: &AggregateSummary) -> String {
    let mut out = String::from("condition,family,metric,n,value,ci_lo,ci_hi,mean,std,p50,p95\n");
    for row in &summary.rows {
        let s = &row.summary;
        let mut rate = |name: &str, r: &crate::metrics::Rate| {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},,,,",
                row.condition, row.family, name, s.n, r.rate, r.ci_lo, r.ci_hi
            );
        };
        rate("collision_rate", &s.collisions);
        rate("eb_rate", &s.eb_runs);
        rate("false_eb_rate", &s.false_eb_runs);
        rate("oscillatory_rate", &s.oscillatory_runs);
        let _ = writeln!(
            out,
            "{},{},eb_episodes,{},{},,,,,,",
            row.condition, row.family, s.n, s.eb_episode_total
        );
        let _ = writeln!(
            out,
            "{},{},false_eb_episodes,{},{},,,,,,",
            row.condition, row.family, s.n, s.false_eb_episode_total
        );
        let _ = writeln!(
            out,
            "{},{},false_eb_episodes_hard,{},{},,,,,,",
            row.condition, row.family, s.n, s.false_eb_episode_hard
        );
        for (name, st) in &s.stats {
            let _ = writeln!(
                out,
                "{},{},{},{},,,,{},{},{},{}",
                row.condition, row.family, name, st.n, st.mean, st.std, st.p50, st.p95
            );
        }
    }
    out
}

fn rate_value(summary: &GroupSummary, metric: &AssertMetric) -> Option<f64> {
    match metric {
        AssertMetric::CollisionRate => Some(summary.collisions.rate),
        AssertMetric::EbRate => Some(summary.eb_runs.rate),
        AssertMetric::FalseEbRate => Some(summary.false_eb_runs.rate),
        AssertMetric::OscillatoryRate => Some(summary.oscillatory_runs.rate),
        AssertMetric::Mean(stat) => summary.stats.get(stat).map(|s| s.mean),
        AssertMetric::P50(stat) => summary.stats.get(stat).map(|s| s.p50),
        AssertMetric::P95(stat) => summary.stats.get(stat).map(|s| s.p95),
    }
}

/// Cross-condition comparison: one row per (family, metric), one column per
/// condition, relative change of each condition against the first.
pub fn compare_csv(summary: &AggregateSummary, conditions: &[String]) -> String {
    let families: BTreeSet<&str> = summary.rows.iter().map(|r| r.family.as_str()).collect();
    let metrics: Vec<AssertMetric> = vec![
        AssertMetric::CollisionRate,
        AssertMetric::EbRate,
        AssertMetric::FalseEbRate,
        AssertMetric::OscillatoryRate,
        AssertMetric::Mean("peak_decel".into()),
        AssertMetric::Mean("peak_jerk".into()),
        AssertMetric::Mean("mean_abs_jerk".into()),
        AssertMetric::Mean("mean_speed".into()),
        AssertMetric::Mean("travel_time".into()),
        AssertMetric::Mean("brake_onset_delay".into()),
        AssertMetric::P50("min_ttc_truth".into()),
        AssertMetric::P50("min_gap".into()),
    ];
    let mut out = String::from("family,metric");
    for c in conditions {
        let _ = write!(out, ",{c}");
    }
    for c in conditions.iter().skip(1) {
        let _ = write!(out, ",rel_change:{c}");
    }
    out.push('\n');

    for family in families {
        for metric in &metrics {
            let values: Vec<Option<f64>> = conditions
                .iter()
                .map(|c| summary.get(c, family).and_then(|s| rate_value(s, metric)))
                .collect();
            if values.iter().all(|v| v.is_none()) {
                continue;
            }
            let _ = write!(out, "{family},{metric}");
            for v in &values {
                match v {
                    Some(x) => {
                        let _ = write!(out, ",{x}");
                    }
                    None => out.push(','),
                }
            }
            let base = values[0];
            for v in values.iter().skip(1) {
                match (base, v) {
                    (Some(b), Some(x)) if b.abs() > 1e-12 => {
                        let _ = write!(out, ",{}", (x - b) / b);
                    }
                    _ => out.push(','),
                }
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssertionResult {
    pub assertion: Assertion,
    pub observed: Option<f64>,
    pub passed: bool,
}

impl std::fmt::Display for AssertionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = &self.assertion;
        let status = if self.passed { "PASS" } else { "FAIL" };
        let observed = match self.observed {
            Some(v) => format!("{v:.6}"),
            None => "missing".to_string(),
        };
        write!(
            f,
            "[{status}] {}/{} {} {:?} {} (observed {observed})",
            a.condition, a.family, a.metric, a.op, a.value
        )
    }
}

/// Evaluates the config's requested assertions against the aggregate.
pub fn evaluate_assertions(
    summary: &AggregateSummary,
    assertions: &[Assertion],
) -> Vec<AssertionResult> {
    assertions
        .iter()
        .map(|a| {
            let observed = summary
                .get(&a.condition, &a.family)
                .and_then(|s| rate_value(s, &a.metric));
            let passed = observed.map(|v| a.op.eval(v, a.value)).unwrap_or(false);
            AssertionResult {
                assertion: a.clone(),
                observed,
                passed,
            }
        })
        .collect()
}

/// Emits the chart pair: pooled collision/false-EB rate bars per condition,
/// and distribution panels for braking intensity and jerk.
pub fn write_charts(
    dir: &Path,
    summary: &AggregateSummary,
    records: &[RunRecord],
    conditions: &[String],
) -> std::io::Result<()> {
    let groups: Vec<(String, Vec<f64>)> = conditions
        .iter()
        .map(|c| {
            let s = summary.get(c, "all");
            (
                c.clone(),
                vec![
                    s.map_or(0.0, |s| s.collisions.rate),
                    s.map_or(0.0, |s| s.false_eb_runs.rate),
                ],
            )
        })
        .collect();
    let bars = chart::grouped_bars(
        "Collision and false-EB rates by condition",
        "rate of runs",
        &groups,
        &["collision rate".to_string(), "false EB rate".to_string()],
    );
    std::fs::write(dir.join("fig_rates.svg"), bars)?;

    let series_of = |f: &dyn Fn(&crate::metrics::RunMetrics) -> f64| -> chart::ValueSeries {
        conditions
            .iter()
            .map(|c| {
                let values: Vec<f64> = records
                    .iter()
                    .filter(|r| &r.condition == c)
                    .filter_map(|r| r.metrics.as_ref().map(f))
                    .collect();
                (c.clone(), values)
            })
            .collect()
    };
    let panels = vec![
        (
            "peak deceleration [m/s^2]".to_string(),
            series_of(&|m| m.peak_decel),
        ),
        (
            "mean |jerk| [m/s^3]".to_string(),
            series_of(&|m| m.mean_abs_jerk),
        ),
    ];
    let dist = chart::distribution_panels("Braking intensity and jerk by condition", &panels, 24);
    std::fs::write(dir.join("fig_distributions.svg"), dist)
}

/// Writes every batch artifact and returns the assertion results.
pub fn emit_outputs(
    cfg: &ExperimentConfig,
    records: &[RunRecord],
) -> std::io::Result<Vec<AssertionResult>> {
    let root = &cfg.output_dir;
    crate::harness::write_records(&root.join("runs.jsonl"), records)?;

    let summary = aggregate_records(records);
    std::fs::write(root.join("summary.csv"), summary_csv(&summary))?;
    std::fs::write(
        root.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?,
    )?;

    let conditions: Vec<String> = cfg.conditions.iter().map(|c| c.label.clone()).collect();
    if conditions.len() > 1 {
        std::fs::write(root.join("compare.csv"), compare_csv(&summary, &conditions))?;
    }
    write_charts(&root.join("charts"), &summary, records, &conditions)?;
    std::fs::write(root.join("config_echo.toml"), cfg.to_toml())?;

    let failed: Vec<String> = records
        .iter()
        .filter_map(|r| match &r.status {
            RunStatus::Failed(msg) => Some(format!(
                "{}/{}/{}: {msg}",
                r.condition, r.family, r.run_index
            )),
            RunStatus::Ok => None,
        })
        .collect();
    if !failed.is_empty() {
        std::fs::write(root.join("failed_runs.txt"), failed.join("\n"))?;
    }

    Ok(evaluate_assertions(&summary, &cfg.assertions))
}

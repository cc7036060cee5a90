//! Per-run metric extraction from traces and cross-run aggregation.
//!
//! Everything here is a pure function of the stored trace (plus the run
//! context embedded in its header), so `replay` reproduces the shipped
//! records bit-exactly.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::control::ttc;
use crate::trace::{RunTrace, TraceRow};

/// Oscillation window length, s.
pub const OSCILLATION_WINDOW_S: f64 = 1.5;
/// Both sides of a qualifying sign change must reach this magnitude, m/s^2.
pub const OSCILLATION_MAGNITUDE: f64 = 2.0;
/// An EB episode counts as justified if ground truth satisfied the trigger
/// within this margin of the episode, s.
pub const FALSE_EB_TRUTH_MARGIN_S: f64 = 0.5;
/// Justification tests ground-truth TTC against `factor * trigger
/// threshold`: a successful intervention holds the true TTC just above the
/// trigger value, so testing at the exact trigger level would misflag
/// genuine-hazard braking as false.
pub const FALSE_EB_TTC_FACTOR: f64 = 1.5;
/// Realized deceleration is attributed to an episode up to this long after
/// the command ends (actuator lag), s.
pub const EPISODE_DECEL_TAIL_S: f64 = 0.4;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("trace is truncated: {0}")]
    Truncated(&'static str),
}

/// One latch-to-release emergency-braking episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbEpisode {
    pub start_t: f64,
    pub end_t: f64,
    /// Peak realized deceleration magnitude attributed to the episode.
    pub peak_decel: f64,
    /// True when no ground-truth object satisfied the trigger condition in
    /// the episode window (padded by [`FALSE_EB_TRUTH_MARGIN_S`]).
    pub false_positive: bool,
}

/// Per-run safety and behavior statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub collision: bool,
    pub collision_time: Option<f64>,
    pub impact_speed: Option<f64>,
    /// Minimum ground-truth gap to an in-lane forward object, m.
    pub min_gap: Option<f64>,
    /// Minimum ground-truth TTC, s. `None` when never closing.
    pub min_ttc_truth: Option<f64>,
    /// Minimum tracker-estimated TTC, s. Track dropouts read as no object.
    pub min_ttc_perceived: Option<f64>,
    pub eb_event_count: u32,
    pub false_eb_count: u32,
    /// Peak realized deceleration magnitude, m/s^2.
    pub peak_decel: f64,
    /// Peak |jerk| of realized acceleration at control rate, m/s^3.
    pub peak_jerk: f64,
    pub mean_abs_jerk: f64,
    pub oscillatory_window_count: u32,
    pub oscillatory: bool,
    /// First EB command relative to the first ground-truth threshold
    /// crossing, s. `None` when ground truth never crosses.
    pub brake_onset_delay: Option<f64>,
    /// EB fired before the ground truth crossed (delay clamped to 0).
    pub early_brake: bool,
    pub mean_speed: f64,
    /// Time to cover the run's reference distance, s. `None` if never.
    pub travel_time: Option<f64>,
    pub min_follower_headway: Option<f64>,
    pub eb_episodes: Vec<EbEpisode>,
}

/// Forward finite differences of an acceleration series, length `n - 1`.
pub fn jerk_series(accel: &[f64], dt: f64) -> Vec<f64> {
    assert!(accel.len() >= 2, "jerk needs at least two samples");
    assert!(dt > 0.0);
    accel.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OscillationResult {
    pub window_count: u32,
    pub oscillatory: bool,
}

fn qualifying_change(a: f64, b: f64) -> bool {
    a * b < 0.0 && a.abs() >= OSCILLATION_MAGNITUDE && b.abs() >= OSCILLATION_MAGNITUDE
}

/// Sliding-window oscillation count over an acceleration series.
///
/// A qualifying sign change is a consecutive sample pair with opposite
/// signs, both at least [`OSCILLATION_MAGNITUDE`] in magnitude. A window of
/// [`OSCILLATION_WINDOW_S`] counts when it contains at least two qualifying
/// changes; counted windows de-overlap by advancing past the window.
pub fn detect_oscillations(accel: &[f64], dt: f64) -> OscillationResult {
    assert!(dt > 0.0);
    let w = (OSCILLATION_WINDOW_S / dt).round() as usize;
    let w = w.max(2);
    let n = accel.len();
    let mut count = 0u32;
    let mut i = 0usize;
    while i < n {
        let end = (i + w).min(n);
        let mut changes = 0;
        for k in i..end.saturating_sub(1) {
            if qualifying_change(accel[k], accel[k + 1]) {
                changes += 1;
            }
        }
        if changes >= 2 {
            count += 1;
            i += w;
        } else {
            i += 1;
        }
    }
    OscillationResult {
        window_count: count,
        oscillatory: count >= 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrakeOnset {
    pub delay: Option<f64>,
    pub early_brake: bool,
}

/// Delay of the first EB command relative to the first ground-truth TTC
/// threshold crossing. Early braking reports a zero delay with a flag; no
/// ground-truth crossing reports `None`.
pub fn brake_onset_delay(
    times: &[f64],
    truth_ttc: &[f64],
    eb_active: &[bool],
    threshold: f64,
) -> BrakeOnset {
    let t_cross = times
        .iter()
        .zip(truth_ttc)
        .find(|(_, ttc)| **ttc < threshold)
        .map(|(t, _)| *t);
    let t_eb = times
        .iter()
        .zip(eb_active)
        .find(|(_, eb)| **eb)
        .map(|(t, _)| *t);
    match (t_cross, t_eb) {
        (Some(tc), Some(te)) => {
            let d = te - tc;
            BrakeOnset {
                delay: Some(d.max(0.0)),
                early_brake: d < 0.0,
            }
        }
        _ => BrakeOnset {
            delay: None,
            early_brake: false,
        },
    }
}

fn row_truth_ttc(row: &TraceRow) -> f64 {
    match (row.truth_gap, row.truth_vrel) {
        (Some(g), Some(v)) if g <= 0.0 && v > 0.0 => 0.0,
        (Some(g), Some(v)) => ttc(g, v),
        _ => f64::INFINITY,
    }
}

fn row_perceived_ttc(row: &TraceRow) -> f64 {
    match (row.perceived_gap, row.track_vrel) {
        (Some(g), Some(v)) => ttc(g.max(0.0), v),
        _ => f64::INFINITY,
    }
}

/// Extracts latch-to-release EB episodes from the `eb_active` column.
pub fn eb_episodes(rows: &[TraceRow], ttc_threshold: f64) -> Vec<EbEpisode> {
    let mut episodes = Vec::new();
    let mut start: Option<usize> = None;
    for (k, row) in rows.iter().enumerate() {
        match (start, row.eb_active) {
            (None, true) => start = Some(k),
            (Some(s), false) => {
                episodes.push(build_episode(rows, s, k - 1, ttc_threshold));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        episodes.push(build_episode(rows, s, rows.len() - 1, ttc_threshold));
    }
    episodes
}

fn build_episode(rows: &[TraceRow], s: usize, e: usize, ttc_threshold: f64) -> EbEpisode {
    let start_t = rows[s].t;
    let end_t = rows[e].t;
    let justified = rows.iter().any(|r| {
        r.t >= start_t - FALSE_EB_TRUTH_MARGIN_S
            && r.t <= end_t + FALSE_EB_TRUTH_MARGIN_S
            && row_truth_ttc(r) < FALSE_EB_TTC_FACTOR * ttc_threshold
    });
    let peak_decel = rows
        .iter()
        .filter(|r| r.t >= start_t && r.t <= end_t + EPISODE_DECEL_TAIL_S)
        .map(|r| (-r.a_realized).max(0.0))
        .fold(0.0, f64::max);
    EbEpisode {
        start_t,
        end_t,
        peak_decel,
        false_positive: !justified,
    }
}

/// Computes every per-run metric from a complete trace.
pub fn compute_run_metrics(trace: &RunTrace) -> Result<RunMetrics, MetricsError> {
    if trace.rows.len() < 2 {
        return Err(MetricsError::Truncated("fewer than two rows"));
    }
    let rows = &trace.rows;
    let uniform = trace.uniform_rows();
    if uniform.len() < 2 {
        return Err(MetricsError::Truncated("no uniform frames"));
    }
    let dt = trace.meta.control_dt;

    let collision_row = rows
        .iter()
        .find(|r| matches!(r.truth_gap, Some(g) if g <= 0.0));
    let collision = collision_row.is_some();

    let min_gap = rows
        .iter()
        .filter_map(|r| r.truth_gap)
        .fold(f64::INFINITY, f64::min);
    let min_ttc_truth = rows.iter().map(row_truth_ttc).fold(f64::INFINITY, f64::min);
    let min_ttc_perceived = rows
        .iter()
        .map(row_perceived_ttc)
        .fold(f64::INFINITY, f64::min);

    let episodes = eb_episodes(rows, trace.meta.ttc_threshold);
    let false_eb_count = episodes.iter().filter(|e| e.false_positive).count() as u32;

    let accel_realized: Vec<f64> = uniform.iter().map(|r| r.a_realized).collect();
    let accel_cmd: Vec<f64> = uniform.iter().map(|r| r.a_cmd).collect();
    let jerks = jerk_series(&accel_realized, dt);
    let peak_jerk = jerks.iter().fold(0.0f64, |m, j| m.max(j.abs()));
    let mean_abs_jerk = jerks.iter().map(|j| j.abs()).sum::<f64>() / jerks.len() as f64;
    let osc = detect_oscillations(&accel_cmd, dt);

    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let truth_ttcs: Vec<f64> = rows.iter().map(row_truth_ttc).collect();
    let ebs: Vec<bool> = rows.iter().map(|r| r.eb_active).collect();
    let onset = brake_onset_delay(&times, &truth_ttcs, &ebs, trace.meta.ttc_threshold);

    let peak_decel = rows
        .iter()
        .map(|r| (-r.a_realized).max(0.0))
        .fold(0.0, f64::max);
    let mean_speed = rows.iter().map(|r| r.v).sum::<f64>() / rows.len() as f64;
    let s0 = rows[0].s_front;
    let travel_time = (trace.meta.d_ref > 0.0)
        .then(|| {
            rows.iter()
                .find(|r| r.s_front - s0 >= trace.meta.d_ref)
                .map(|r| r.t - rows[0].t)
        })
        .flatten();
    let min_follower_headway = rows
        .iter()
        .filter_map(|r| r.follower_headway)
        .fold(f64::INFINITY, f64::min);

    let opt = |x: f64| if x.is_finite() { Some(x) } else { None };
    Ok(RunMetrics {
        collision,
        collision_time: collision_row.map(|r| r.t),
        impact_speed: collision_row.and_then(|r| r.truth_vrel),
        min_gap: opt(min_gap),
        min_ttc_truth: opt(min_ttc_truth),
        min_ttc_perceived: opt(min_ttc_perceived),
        eb_event_count: episodes.len() as u32,
        false_eb_count,
        peak_decel,
        peak_jerk,
        mean_abs_jerk,
        oscillatory_window_count: osc.window_count,
        oscillatory: osc.oscillatory,
        brake_onset_delay: onset.delay,
        early_brake: onset.early_brake,
        mean_speed,
        travel_time,
        min_follower_headway: opt(min_follower_headway),
        eb_episodes: episodes,
    })
}

/// Sample statistics of one continuous metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub p50: f64,
    pub p95: f64,
}

/// Linear-interpolation percentile of a sorted slice, p in [0, 1].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Mean/std/p50/p95 of a value set. Values are sorted before summation so
/// the result is invariant to run ordering. `None` for an empty set; a
/// single sample reports std 0.
pub fn summarize(values: &[f64]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Some(Stats {
        n,
        mean,
        std,
        p50: percentile(&sorted, 0.5),
        p95: percentile(&sorted, 0.95),
    })
}

/// Wilson 95% score interval for a binomial rate.
pub fn wilson95(successes: usize, n: usize) -> (f64, f64) {
    assert!(n > 0, "Wilson interval needs at least one trial");
    let z = 1.959963984540054_f64;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// A rate with its Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub count: usize,
    pub n: usize,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Rate {
    pub fn new(count: usize, n: usize) -> Rate {
        let (ci_lo, ci_hi) = wilson95(count, n);
        Rate {
            count,
            n,
            rate: count as f64 / n as f64,
            ci_lo,
            ci_hi,
        }
    }
}

/// Summary of one (family, condition) group of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub collisions: Rate,
    /// Runs with at least one EB episode.
    pub eb_runs: Rate,
    /// Runs with at least one false EB episode.
    pub false_eb_runs: Rate,
    pub oscillatory_runs: Rate,
    pub eb_episode_total: usize,
    pub false_eb_episode_total: usize,
    /// False EB episodes whose attributed peak deceleration exceeded 6 m/s^2.
    pub false_eb_episode_hard: usize,
    /// Continuous metrics, keyed by metric name (deterministic order).
    pub stats: BTreeMap<String, Stats>,
}

/// Aggregates one group of runs. Permutation-invariant over run order.
pub fn aggregate_group(metrics: &[&RunMetrics]) -> GroupSummary {
    let n = metrics.len();
    assert!(n > 0, "aggregate over an empty group");
    let count = |f: &dyn Fn(&RunMetrics) -> bool| metrics.iter().filter(|m| f(m)).count();
    let collisions = Rate::new(count(&|m| m.collision), n);
    let eb_runs = Rate::new(count(&|m| m.eb_event_count > 0), n);
    let false_eb_runs = Rate::new(count(&|m| m.false_eb_count > 0), n);
    let oscillatory_runs = Rate::new(count(&|m| m.oscillatory), n);
    let eb_episode_total = metrics.iter().map(|m| m.eb_episodes.len()).sum();
    let false_eb: Vec<&EbEpisode> = metrics
        .iter()
        .flat_map(|m| m.eb_episodes.iter().filter(|e| e.false_positive))
        .collect();
    let false_eb_episode_hard = false_eb.iter().filter(|e| e.peak_decel > 6.0).count();

    let mut stats = BTreeMap::new();
    let mut put = |name: &str, values: Vec<f64>| {
        if let Some(s) = summarize(&values) {
            stats.insert(name.to_string(), s);
        }
    };
    put(
        "min_gap",
        metrics.iter().filter_map(|m| m.min_gap).collect(),
    );
    put(
        "min_ttc_truth",
        metrics.iter().filter_map(|m| m.min_ttc_truth).collect(),
    );
    put(
        "min_ttc_perceived",
        metrics.iter().filter_map(|m| m.min_ttc_perceived).collect(),
    );
    put("peak_decel", metrics.iter().map(|m| m.peak_decel).collect());
    put("peak_jerk", metrics.iter().map(|m| m.peak_jerk).collect());
    put(
        "mean_abs_jerk",
        metrics.iter().map(|m| m.mean_abs_jerk).collect(),
    );
    put("mean_speed", metrics.iter().map(|m| m.mean_speed).collect());
    put(
        "travel_time",
        metrics.iter().filter_map(|m| m.travel_time).collect(),
    );
    put(
        "brake_onset_delay",
        metrics.iter().filter_map(|m| m.brake_onset_delay).collect(),
    );
    put(
        "min_follower_headway",
        metrics
            .iter()
            .filter_map(|m| m.min_follower_headway)
            .collect(),
    );

    GroupSummary {
        n,
        collisions,
        eb_runs,
        false_eb_runs,
        oscillatory_runs,
        eb_episode_total,
        false_eb_episode_total: false_eb.len(),
        false_eb_episode_hard,
        stats,
    }
}

/// One output row of the cross-run aggregation. `family` is `"all"` for the
/// per-condition pooled row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub condition: String,
    pub family: String,
    pub summary: GroupSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub rows: Vec<AggregateRow>,
}

impl AggregateSummary {
    pub fn get(&self, condition: &str, family: &str) -> Option<&GroupSummary> {
        self.rows
            .iter()
            .find(|r| r.condition == condition && r.family == family)
            .map(|r| &r.summary)
    }
}

/// Groups `(condition, family, metrics)` triples and aggregates each group
/// plus a pooled `"all"` row per condition. Rows are ordered by condition
/// then family name, independent of input order.
pub fn aggregate(records: &[(&str, &str, &RunMetrics)]) -> AggregateSummary {
    let mut groups: BTreeMap<(String, String), Vec<&RunMetrics>> = BTreeMap::new();
    for (condition, family, m) in records {
        groups
            .entry((condition.to_string(), family.to_string()))
            .or_default()
            .push(m);
        groups
            .entry((condition.to_string(), "all".to_string()))
            .or_default()
            .push(m);
    }
    let rows = groups
        .into_iter()
        .map(|((condition, family), ms)| AggregateRow {
            condition,
            family,
            summary: aggregate_group(&ms),
        })
        .collect();
    AggregateSummary { rows }
}

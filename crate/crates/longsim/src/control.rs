//! Rule-based safety controllers (AEB, ACC), their arbitration, and the
//! three control-level safeguards.
//!
//! The safeguards operate purely on controller inputs and outputs. They
//! never see raw detections and never attempt attack detection:
//! * persistence gating holds emergency braking until the primary track has
//!   been detected for N consecutive frames,
//! * rate limiting bounds the per-step change of the issued command,
//! * the fallback policy applies a conservative speed reduction while the
//!   perception stream is unstable, without ever weakening active braking.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::dynamics::EgoState;
use crate::tracker::Track;

/// Closing speeds below this count as "not closing" for TTC purposes, m/s.
pub const TTC_EPSILON: f64 = 0.01;

/// Time to collision: `gap / v_closing` while closing, +inf otherwise.
/// Never negative; a non-positive gap is a collision handled upstream.
pub fn ttc(gap: f64, v_closing: f64) -> f64 {
    assert!(gap.is_finite(), "non-finite gap");
    if v_closing > TTC_EPSILON {
        (gap / v_closing).max(0.0)
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSource {
    Acc,
    Aeb,
    Fallback,
    Idle,
}

/// Acceleration command with source attribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    /// m/s^2, within actuator limits after actuation clamping.
    pub a_cmd: f64,
    pub source: CommandSource,
    /// True whenever an emergency-braking command survived gating this
    /// frame, even if a stronger ACC command won arbitration.
    pub eb_active: bool,
}

impl ControlCommand {
    pub fn idle() -> Self {
        Self {
            a_cmd: 0.0,
            source: CommandSource::Idle,
            eb_active: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AebConfig {
    /// Trigger threshold, s. Strict: fires only when ttc < threshold.
    pub ttc_threshold: f64,
    /// Most negative allowed command, m/s^2.
    pub a_hard: f64,
    /// Minimum emergency-braking severity (negative), m/s^2.
    pub a_eb_floor: f64,
    /// Standstill buffer subtracted from the gap, m.
    pub d_margin: f64,
    /// Latch releases once ttc recovers beyond `factor * threshold`.
    pub release_ttc_factor: f64,
    /// Frames the latch keeps braking after its target track disappears.
    /// Sub-second phantoms owe their deep realized deceleration to this
    /// hold; TTC recovery on a reacquired target still releases early.
    pub hold_after_lost_frames: u32,
    /// Fresh triggers require at least this much ego speed, m/s. At
    /// parking-creep speeds the spacing controller owns the stop and
    /// single-frame estimate spikes must not latch the brake.
    pub min_ego_speed: f64,
}

impl Default for AebConfig {
    fn default() -> Self {
        Self {
            ttc_threshold: 1.2,
            a_hard: -9.0,
            a_eb_floor: -4.0,
            d_margin: 2.0,
            release_ttc_factor: 1.5,
            hold_after_lost_frames: 8,
            min_ego_speed: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccConfig {
    /// Desired time gap, s.
    pub time_gap: f64,
    /// Standstill distance, m.
    pub d0: f64,
    /// Spacing-error gain, 1/s^2.
    pub k_gap: f64,
    /// Closing-speed gain, 1/s.
    pub k_rel: f64,
    /// Set-speed pursuit gain, 1/s.
    pub k_speed: f64,
    /// Cruise set speed, m/s. Overridden per run from the scenario.
    pub v_set: f64,
    /// Comfort deceleration bound (negative), m/s^2.
    pub a_lo: f64,
    /// Comfort acceleration bound (positive), m/s^2.
    pub a_hi: f64,
    /// Frames over which the spacing response fades in on a newly selected
    /// target, for actuation comfort. Emergency braking never fades.
    pub engage_frames: u32,
    /// Comfort jerk bound on the ACC's own output while it holds a
    /// continuous view of the situation, m/s^3. Losing or reacquiring the
    /// target bypasses the bound: reacting to a a changed world is not a
    /// comfort ramp.
    pub jerk_comfort: f64,
}

impl Default for AccConfig {
    fn default() -> Self {
        Self {
            time_gap: 1.8,
            d0: 2.0,
            k_gap: 0.23,
            k_rel: 0.74,
            k_speed: 0.4,
            v_set: 30.0,
            a_lo: -3.5,
            a_hi: 2.0,
            engage_frames: 14,
            jerk_comfort: 3.0,
        }
    }
}

/// Constant-time-gap spacing law blended with set-speed cruise.
///
/// With no lead the controller pursues `v_set` proportionally. With a lead
/// it takes the weaker of the spacing law and the cruise law (a lead above
/// the set speed never drags the ego past `v_set`), weighted by the
/// engagement factor `w` in [0, 1].
pub fn acc_law(primary: Option<&Track>, ego: &EgoState, cfg: &AccConfig, w: f64) -> f64 {
    let cruise = (cfg.k_speed * (cfg.v_set - ego.v)).clamp(cfg.a_lo, cfg.a_hi);
    match primary {
        None => cruise,
        Some(p) => {
            let desired = cfg.d0 + cfg.time_gap * ego.v;
            let spacing = cfg.k_gap * (p.gap_est - desired) + cfg.k_rel * (-p.v_rel_est);
            let follow = spacing.min(cruise).clamp(cfg.a_lo, cfg.a_hi);
            (1.0 - w) * cruise + w * follow
        }
    }
}

/// ACC as a stateless step at full engagement: command plus source.
pub fn acc_step(primary: Option<&Track>, ego: &EgoState, cfg: &AccConfig) -> ControlCommand {
    ControlCommand {
        a_cmd: acc_law(primary, ego, cfg, 1.0),
        source: CommandSource::Acc,
        eb_active: false,
    }
}

/// ACC with per-target engagement state: the spacing response ramps in over
/// `engage_frames` when the selected target's identity changes, keyed by
/// track id so a briefly coasting target resumes at full engagement.
#[derive(Debug, Clone)]
pub struct AccController {
    engaged_id: Option<u64>,
    engaged_frames: u32,
    started: bool,
    last_present: bool,
    prev_cmd: f64,
}

impl Default for AccController {
    fn default() -> Self {
        Self {
            engaged_id: None,
            engaged_frames: 0,
            started: false,
            last_present: false,
            prev_cmd: 0.0,
        }
    }
}

impl AccController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(
        &mut self,
        primary: Option<&Track>,
        ego: &EgoState,
        cfg: &AccConfig,
        dt: f64,
    ) -> ControlCommand {
        let w = match primary {
            Some(p) => {
                if self.engaged_id == Some(p.track_id) {
                    self.engaged_frames = self.engaged_frames.saturating_add(1);
                } else {
                    self.engaged_id = Some(p.track_id);
                    self.engaged_frames = 1;
                }
                (self.engaged_frames as f64 / cfg.engage_frames.max(1) as f64).min(1.0)
            }
            None => 1.0,
        };
        let law = acc_law(primary, ego, cfg, w);
        // a mid-run change of world view reacts immediately; everything
        // else, including the cold start from idle, is comfort-ramped
        let transition = self.started && primary.is_some() != self.last_present;
        let out = if transition {
            law
        } else {
            law.clamp(
                self.prev_cmd - cfg.jerk_comfort * dt,
                self.prev_cmd + cfg.jerk_comfort * dt,
            )
        };
        self.started = true;
        self.last_present = primary.is_some();
        self.prev_cmd = out;
        ControlCommand {
            a_cmd: out,
            source: CommandSource::Acc,
            eb_active: false,
        }
    }
}

/// Emergency-braking demand for a track: `v_rel^2 / 2(gap - margin)`,
/// clamped into `[|a_eb_floor|, |a_hard|]` and negated.
fn aeb_demand(track: &Track, cfg: &AebConfig) -> f64 {
    let denom = (track.gap_est - cfg.d_margin).max(0.1);
    let a_req = track.v_rel_est * track.v_rel_est / (2.0 * denom);
    -a_req.clamp(cfg.a_eb_floor.abs(), cfg.a_hard.abs())
}

/// Latched AEB stage. Once triggered it holds until the estimated TTC
/// recovers past `release_ttc_factor * threshold` or the latched track has
/// been gone for more than the tracker's drop horizon, so a single noisy
/// frame cannot chatter the brake.
#[derive(Debug, Clone, Default)]
pub struct AebController {
    latch: Option<Latch>,
}

#[derive(Debug, Clone, Copy)]
struct Latch {
    track_id: u64,
    missing_frames: u32,
    last_cmd: f64,
}

impl AebController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_latched(&self) -> bool {
        self.latch.is_some()
    }

    /// One frame of the AEB stage. `tracks` is the full live track set (the
    /// latch may outlive primary selection while its target coasts);
    /// `min_trigger_age` (the persistence safeguard) keeps a track that has
    /// not yet been detected that many consecutive frames from latching a
    /// new episode.
    pub fn step(
        &mut self,
        primary: Option<&Track>,
        tracks: &[Track],
        ego_v: f64,
        cfg: &AebConfig,
        min_trigger_age: Option<u32>,
    ) -> Option<f64> {
        let mut emitted: Option<f64> = None;

        if let Some(latch) = &mut self.latch {
            if let Some(track) = tracks.iter().find(|t| t.track_id == latch.track_id) {
                latch.missing_frames = 0;
                if ttc(track.gap_est.max(0.0), track.v_rel_est)
                    > cfg.release_ttc_factor * cfg.ttc_threshold
                {
                    self.latch = None;
                } else {
                    let cmd = aeb_demand(track, cfg);
                    latch.last_cmd = cmd;
                    emitted = Some(cmd);
                }
            } else {
                latch.missing_frames += 1;
                if latch.missing_frames > cfg.hold_after_lost_frames {
                    self.latch = None;
                } else {
                    emitted = Some(latch.last_cmd);
                }
            }
        }

        // Fresh trigger on the current primary, strict threshold.
        if let Some(p) = primary {
            let certified =
                min_trigger_age.is_none_or(|n| p.missed_frames == 0 && p.age_frames >= n);
            if certified
                && ego_v > cfg.min_ego_speed
                && ttc(p.gap_est.max(0.0), p.v_rel_est) < cfg.ttc_threshold
            {
                let cmd = aeb_demand(p, cfg);
                let stronger = emitted.is_none_or(|e| cmd < e);
                if stronger {
                    self.latch = Some(Latch {
                        track_id: p.track_id,
                        missing_frames: 0,
                        last_cmd: cmd,
                    });
                    emitted = Some(cmd);
                }
            }
        }

        emitted
    }
}

/// Most-negative command wins; AEB presence forces `eb_active` even when a
/// stronger ACC command takes the actuator.
pub fn arbitrate(acc_cmd: ControlCommand, aeb_cmd: Option<f64>) -> ControlCommand {
    match aeb_cmd {
        None => acc_cmd,
        Some(b) => {
            if b <= acc_cmd.a_cmd {
                ControlCommand {
                    a_cmd: b,
                    source: CommandSource::Aeb,
                    eb_active: true,
                }
            } else {
                ControlCommand {
                    a_cmd: acc_cmd.a_cmd,
                    source: acc_cmd.source,
                    eb_active: true,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafeguardConfig {
    /// Enable persistence gating of emergency braking.
    pub persistence: bool,
    /// Enable rate limiting of the issued command.
    pub rate_limit: bool,
    /// Enable the instability-triggered fallback policy.
    pub fallback: bool,
    /// Consecutive detected frames required before AEB may act.
    pub persistence_frames: u32,
    /// Jerk bound toward stronger braking, m/s^3.
    pub jerk_limit_apply: f64,
    /// Jerk bound toward release, m/s^3.
    pub jerk_limit_release: f64,
    /// Sliding window for the instability metric, frames.
    pub instability_window: u32,
    /// Fallback engages above this instability fraction, (0, 1).
    pub instability_threshold: f64,
    /// Fallback deceleration scale (negative), m/s^2. The engaged cap is
    /// `fallback_decel * instability`.
    pub fallback_decel: f64,
    /// Set-speed multiplier while fallback is engaged, [0, 1].
    pub fallback_speed_cap_factor: f64,
}

impl Default for SafeguardConfig {
    fn default() -> Self {
        Self {
            persistence: false,
            rate_limit: false,
            fallback: false,
            persistence_frames: 3,
            jerk_limit_apply: 15.0,
            jerk_limit_release: 5.0,
            instability_window: 10,
            instability_threshold: 0.25,
            fallback_decel: -3.0,
            fallback_speed_cap_factor: 0.65,
        }
    }
}

impl SafeguardConfig {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn all_on() -> Self {
        Self {
            persistence: true,
            rate_limit: true,
            fallback: true,
            ..Self::default()
        }
    }

    pub fn persistence_only() -> Self {
        Self {
            persistence: true,
            ..Self::default()
        }
    }

    pub fn rate_limit_only() -> Self {
        Self {
            rate_limit: true,
            ..Self::default()
        }
    }

    pub fn fallback_only() -> Self {
        Self {
            fallback: true,
            ..Self::default()
        }
    }

    pub fn any_enabled(&self) -> bool {
        self.persistence || self.rate_limit || self.fallback
    }
}

/// Persistence gate: an AEB command passes only while the primary track has
/// been detected for at least `persistence_frames` consecutive frames. ACC
/// is untouched.
pub fn guard_persistence(
    aeb_cmd: Option<f64>,
    primary: Option<&Track>,
    cfg: &SafeguardConfig,
) -> Option<f64> {
    match (aeb_cmd, primary) {
        (Some(cmd), Some(p)) if p.missed_frames == 0 && p.age_frames >= cfg.persistence_frames => {
            Some(cmd)
        }
        (Some(_), _) => None,
        (None, _) => None,
    }
}

/// Rate limiter on the issued command: the step toward stronger braking is
/// bounded by `jerk_limit_apply * dt` and the step toward release by
/// `jerk_limit_release * dt`, so consecutive commands satisfy the per-step
/// jerk bound exactly.
pub fn guard_rate_limit(prev_a: f64, new_a: f64, dt: f64, cfg: &SafeguardConfig) -> f64 {
    assert!(dt > 0.0);
    new_a.clamp(
        prev_a - cfg.jerk_limit_apply * dt,
        prev_a + cfg.jerk_limit_release * dt,
    )
}

/// Fraction of the recent window in which the primary object was missing
/// after having been seen, or came back under a different track id.
#[derive(Debug, Clone)]
pub struct InstabilityMonitor {
    window: usize,
    events: VecDeque<bool>,
    last_primary_id: Option<u64>,
}

impl InstabilityMonitor {
    pub fn new(window: u32) -> Self {
        assert!(window >= 1);
        Self {
            window: window as usize,
            events: VecDeque::new(),
            last_primary_id: None,
        }
    }

    /// Records one frame and returns the instability fraction in [0, 1].
    /// The denominator is the full window, so a short clean history reads 0.
    pub fn update(&mut self, primary: Option<&Track>) -> f64 {
        let bad = match (self.last_primary_id, primary) {
            (None, None) => false,
            (None, Some(p)) => {
                self.last_primary_id = Some(p.track_id);
                false
            }
            (Some(_), None) => true, // seen before, gone now; keep the old id
            (Some(last), Some(p)) => {
                let changed = p.track_id != last;
                self.last_primary_id = Some(p.track_id);
                changed
            }
        };
        self.events.push_back(bad);
        while self.events.len() > self.window {
            self.events.pop_front();
        }
        self.value()
    }

    pub fn value(&self) -> f64 {
        let bad = self.events.iter().filter(|&&b| b).count();
        bad as f64 / self.window as f64
    }
}

/// Instability fraction of a recorded bad-frame log over a window; the
/// stateless form of [`InstabilityMonitor`] for offline series.
pub fn instability_metric(frame_log: &[bool], window: u32) -> f64 {
    assert!(window >= 1);
    let w = window as usize;
    let start = frame_log.len().saturating_sub(w);
    let bad = frame_log[start..].iter().filter(|&&b| b).count();
    bad as f64 / w as f64
}

/// Conservative fallback: above the instability threshold the command is
/// capped at `fallback_decel * instability` (a mild guaranteed
/// deceleration). Never weakens an active emergency-braking command.
pub fn guard_fallback(
    cmd: ControlCommand,
    instability: f64,
    cfg: &SafeguardConfig,
) -> ControlCommand {
    if instability > cfg.instability_threshold && !cmd.eb_active {
        let cap = cfg.fallback_decel * instability;
        if cmd.a_cmd > cap {
            return ControlCommand {
                a_cmd: cap,
                source: CommandSource::Fallback,
                eb_active: false,
            };
        }
    }
    cmd
}

/// Set speed while fallback is engaged.
pub fn fallback_speed_cap(v_set: f64, instability: f64, cfg: &SafeguardConfig) -> f64 {
    if cfg.fallback && instability > cfg.instability_threshold {
        v_set * cfg.fallback_speed_cap_factor
    } else {
        v_set
    }
}

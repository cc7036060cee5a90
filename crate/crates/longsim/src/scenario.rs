//! Seeded generators for the six scenario families.
//!
//! Sampling is a pure function of `(family, seed)`: the same pair always
//! produces the same parameters, and scripted trajectories evaluate in
//! closed form as pure functions of time, so ground truth is bit-identical
//! across attack and safeguard conditions. The one documented exception is
//! the follower in `MultiVehicle`, which runs a fixed car-following rule on
//! the ego's realized trajectory (it exists to measure rear-end headway
//! after false braking and is excluded from ground-truth isolation files).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ObjectKind, TrafficObject};
use crate::seeding::{stream_seed, STREAM_SCENARIO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioFamily {
    HighwayFollowing,
    StopAndGo,
    CutIn,
    ParkedVehicle,
    CurvedRoad,
    MultiVehicle,
}

impl ScenarioFamily {
    pub const ALL: [ScenarioFamily; 6] = [
        ScenarioFamily::HighwayFollowing,
        ScenarioFamily::StopAndGo,
        ScenarioFamily::CutIn,
        ScenarioFamily::ParkedVehicle,
        ScenarioFamily::CurvedRoad,
        ScenarioFamily::MultiVehicle,
    ];

    pub fn ordinal(self) -> u64 {
        Self::ALL.iter().position(|f| *f == self).unwrap() as u64
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioFamily::HighwayFollowing => "highway_following",
            ScenarioFamily::StopAndGo => "stop_and_go",
            ScenarioFamily::CutIn => "cut_in",
            ScenarioFamily::ParkedVehicle => "parked_vehicle",
            ScenarioFamily::CurvedRoad => "curved_road",
            ScenarioFamily::MultiVehicle => "multi_vehicle",
        }
    }

    pub fn parse(s: &str) -> Option<ScenarioFamily> {
        Self::ALL.iter().copied().find(|f| f.name() == s)
    }
}

impl std::fmt::Display for ScenarioFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Inclusive sampling range, serialized as a two-element array.
pub type Range2 = [f64; 2];

fn draw(rng: &mut ChaCha8Rng, r: Range2) -> f64 {
    if r[0] >= r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Calibration of the scenario parameter distributions. The paper-facing
/// outcome bands are wide enough to absorb reasonable edits here; the
/// version tag is echoed into every run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    pub version: u32,
    /// Curvature amplification applied to distance-bias deviations on
    /// curved roads.
    pub curved_bias_amplification: f64,
    pub highway: HighwayCal,
    pub stop_and_go: StopGoCal,
    pub cut_in: CutInCal,
    pub parked: ParkedCal,
    pub curved: CurvedCal,
    pub multi: MultiCal,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            version: 1,
            curved_bias_amplification: 1.5,
            highway: HighwayCal::default(),
            stop_and_go: StopGoCal::default(),
            cut_in: CutInCal::default(),
            parked: ParkedCal::default(),
            curved: CurvedCal::default(),
            multi: MultiCal::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HighwayCal {
    pub v0: Range2,
    pub gap0: Range2,
    /// Lead speed relative to the ego's initial speed, m/s.
    pub lead_dv: Range2,
    /// Mild sinusoidal lead-speed variation.
    pub wave_amp: Range2,
    pub wave_period: Range2,
    /// Probability that the lead performs a hard-brake hazard event.
    pub hazard_probability: f64,
    pub hazard_time: Range2,
    /// Hazard deceleration magnitude, m/s^2.
    pub hazard_decel: f64,
    pub hazard_target_v: Range2,
}

impl Default for HighwayCal {
    fn default() -> Self {
        Self {
            v0: [25.0, 33.0],
            gap0: [40.0, 70.0],
            lead_dv: [-1.5, 1.5],
            wave_amp: [0.2, 0.8],
            wave_period: [15.0, 30.0],
            hazard_probability: 0.1,
            hazard_time: [6.0, 18.0],
            hazard_decel: 6.0,
            hazard_target_v: [4.5, 7.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopGoCal {
    /// Peak wave speed, m/s.
    pub v_max: Range2,
    /// Trough speed: the queue sometimes crawls instead of stopping, m/s.
    pub v_floor: Range2,
    /// Peak wave deceleration, m/s^2; sets the moving-phase length.
    pub wave_peak_decel: Range2,
    /// Trough dwell between waves, s.
    pub stop_dwell: Range2,
    /// Initial gap as a multiple of the ACC-desired spacing at v0.
    pub gap_scale: Range2,
}

impl Default for StopGoCal {
    fn default() -> Self {
        Self {
            v_max: [7.0, 11.0],
            v_floor: [0.0, 1.5],
            wave_peak_decel: [2.4, 3.4],
            stop_dwell: [2.5, 5.5],
            gap_scale: [1.0, 1.3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutInCal {
    pub v0: Range2,
    /// Gap between ego and cutter at merge start, m.
    pub gap: Range2,
    /// Ego speed minus cutter speed (positive closes), m/s.
    pub closing: Range2,
    pub aggressive_probability: f64,
    pub aggressive_gap: Range2,
    pub aggressive_closing: Range2,
    pub merge_start: Range2,
    pub merge_duration: Range2,
    /// Lateral offset of the adjacent lane, m.
    pub lane_width: f64,
}

impl Default for CutInCal {
    fn default() -> Self {
        Self {
            v0: [25.0, 33.0],
            gap: [8.0, 20.0],
            closing: [0.5, 3.0],
            aggressive_probability: 0.06,
            aggressive_gap: [8.0, 12.0],
            aggressive_closing: [3.0, 5.0],
            merge_start: [3.0, 8.0],
            merge_duration: [1.2, 2.0],
            lane_width: 3.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParkedCal {
    pub v0: Range2,
    pub gap0: Range2,
    /// Partial blockage: lateral offset of the parked body, m.
    pub lane_offset: Range2,
}

impl Default for ParkedCal {
    fn default() -> Self {
        Self {
            v0: [13.0, 21.0],
            gap0: [80.0, 130.0],
            lane_offset: [0.5, 1.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurvedCal {
    /// Slow apparent lateral wobble of tracked objects on curves.
    pub offset_amp: f64,
    pub offset_period: f64,
}

impl Default for CurvedCal {
    fn default() -> Self {
        Self {
            offset_amp: 0.3,
            offset_period: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiCal {
    pub v0: Range2,
    pub gap1: Range2,
    pub lead_dv: Range2,
    /// Second lead sits this far beyond the first, m.
    pub gap2_extra: Range2,
    pub adjacent_gap: Range2,
    pub adjacent_dv: Range2,
    /// Follower's own desired time gap behind the ego, s. Its settled
    /// headway is `time_gap + d0/v`, so tight draws cruise near 1.2 s.
    pub follower_time_gap: Range2,
    /// Follower reaction latency to the ego's motion, s.
    pub follower_reaction: Range2,
    pub hazard_probability: f64,
    pub hazard_time: Range2,
    pub hazard_decel: f64,
    pub hazard_target_v: Range2,
}

impl Default for MultiCal {
    fn default() -> Self {
        Self {
            v0: [25.0, 33.0],
            gap1: [35.0, 55.0],
            lead_dv: [-1.5, 1.5],
            gap2_extra: [20.0, 40.0],
            adjacent_gap: [10.0, 40.0],
            adjacent_dv: [-2.0, 2.0],
            follower_time_gap: [1.15, 1.8],
            follower_reaction: [0.6, 1.2],
            hazard_probability: 0.0,
            hazard_time: [6.0, 18.0],
            hazard_decel: 6.0,
            hazard_target_v: [4.5, 7.5],
        }
    }
}

/// Lead hard-brake event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardEvent {
    pub t: f64,
    pub decel: f64,
    pub target_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighwayParams {
    pub v0: f64,
    pub lead_v0: f64,
    pub gap0: f64,
    pub wave_amp: f64,
    pub wave_period: f64,
    pub wave_phase: f64,
    pub hazard: Option<HazardEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopGoParams {
    pub v_max: f64,
    /// Trough speed, m/s.
    pub v_floor: f64,
    /// Moving-phase length, s.
    pub t_move: f64,
    /// Trough dwell, s.
    pub t_stop: f64,
    /// Phase offset into the cycle, s.
    pub phase: f64,
    pub gap0: f64,
    pub v0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutInParams {
    pub v0: f64,
    pub cutter_v: f64,
    pub gap_at_merge: f64,
    pub merge_start: f64,
    pub merge_duration: f64,
    pub lane_from: f64,
    pub aggressive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkedParams {
    pub v0: f64,
    pub gap0: f64,
    pub lane_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvedParams {
    pub base: HighwayParams,
    pub offset_amp: f64,
    pub offset_period: f64,
    pub offset_phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiParams {
    pub v0: f64,
    pub lead1_v0: f64,
    pub gap1: f64,
    pub gap2: f64,
    pub lead2_v0: f64,
    pub adjacent_gap: f64,
    pub adjacent_v0: f64,
    pub follower_time_gap: f64,
    pub follower_reaction: f64,
    pub hazard: Option<HazardEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampledParams {
    Highway(HighwayParams),
    StopGo(StopGoParams),
    CutIn(CutInParams),
    Parked(ParkedParams),
    Curved(CurvedParams),
    Multi(MultiParams),
}

/// A fully sampled scenario. Deterministic in `(family, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub family: ScenarioFamily,
    pub seed: u64,
    pub duration: f64,
    pub params: SampledParams,
}

impl ScenarioSpec {
    /// Hazard onset time, when the family sampled one.
    pub fn hazard_time(&self) -> Option<f64> {
        match &self.params {
            SampledParams::Highway(p) => p.hazard.map(|h| h.t),
            SampledParams::Curved(p) => p.base.hazard.map(|h| h.t),
            SampledParams::Multi(p) => p.hazard.map(|h| h.t),
            _ => None,
        }
    }

    pub fn ego_v0(&self) -> f64 {
        match &self.params {
            SampledParams::Highway(p) => p.v0,
            SampledParams::StopGo(p) => p.v0,
            SampledParams::CutIn(p) => p.v0,
            SampledParams::Parked(p) => p.v0,
            SampledParams::Curved(p) => p.base.v0,
            SampledParams::Multi(p) => p.v0,
        }
    }

    /// Cruise set speed handed to the ACC for this run.
    pub fn ego_v_set(&self) -> f64 {
        match &self.params {
            SampledParams::StopGo(p) => p.v_max,
            _ => self.ego_v0(),
        }
    }
}

fn sample_highway(rng: &mut ChaCha8Rng, cal: &HighwayCal) -> HighwayParams {
    let v0 = draw(rng, cal.v0);
    let lead_v0 = (v0 + draw(rng, cal.lead_dv)).max(1.0);
    let gap0 = draw(rng, cal.gap0);
    let wave_amp = draw(rng, cal.wave_amp);
    let wave_period = draw(rng, cal.wave_period);
    let wave_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let hazard_draw: f64 = rng.random();
    let hazard_t = draw(rng, cal.hazard_time);
    let hazard_v = draw(rng, cal.hazard_target_v);
    let hazard = (hazard_draw < cal.hazard_probability).then_some(HazardEvent {
        t: hazard_t,
        decel: cal.hazard_decel,
        target_v: hazard_v,
    });
    HighwayParams {
        v0,
        lead_v0,
        gap0,
        wave_amp,
        wave_period,
        wave_phase,
        hazard,
    }
}

/// Samples the family-specific parameters for one run. Same `(family,
/// seed)` always yields an identical spec; the draw order per family is
/// fixed.
pub fn sample(family: ScenarioFamily, seed: u64, duration: f64, cal: &Calibration) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, STREAM_SCENARIO));
    let params = match family {
        ScenarioFamily::HighwayFollowing => {
            SampledParams::Highway(sample_highway(&mut rng, &cal.highway))
        }
        ScenarioFamily::StopAndGo => {
            let v_max = draw(&mut rng, cal.stop_and_go.v_max);
            let v_floor = draw(&mut rng, cal.stop_and_go.v_floor).min(v_max * 0.4);
            let peak = draw(&mut rng, cal.stop_and_go.wave_peak_decel);
            let t_move = (v_max - v_floor) * std::f64::consts::PI / peak;
            let t_stop = draw(&mut rng, cal.stop_and_go.stop_dwell);
            let phase = rng.random_range(0.0..t_move + t_stop);
            let v0 = stop_go_speed(v_max, v_floor, t_move, t_stop, phase);
            let desired = 2.0 + 1.8 * v0;
            let gap0 = (desired * draw(&mut rng, cal.stop_and_go.gap_scale)).max(6.0);
            SampledParams::StopGo(StopGoParams {
                v_max,
                v_floor,
                t_move,
                t_stop,
                phase,
                gap0,
                v0,
            })
        }
        ScenarioFamily::CutIn => {
            let c = &cal.cut_in;
            let v0 = draw(&mut rng, c.v0);
            let aggressive = rng.random::<f64>() < c.aggressive_probability;
            let (gap_r, closing_r) = if aggressive {
                (c.aggressive_gap, c.aggressive_closing)
            } else {
                (c.gap, c.closing)
            };
            let gap_at_merge = draw(&mut rng, gap_r);
            let closing = draw(&mut rng, closing_r);
            let merge_start = draw(&mut rng, c.merge_start);
            let merge_duration = draw(&mut rng, c.merge_duration);
            let side = if rng.random::<f64>() < 0.5 { 1.0 } else { -1.0 };
            SampledParams::CutIn(CutInParams {
                v0,
                cutter_v: (v0 - closing).max(1.0),
                gap_at_merge,
                merge_start,
                merge_duration,
                lane_from: side * c.lane_width,
                aggressive,
            })
        }
        ScenarioFamily::ParkedVehicle => {
            let c = &cal.parked;
            let side = [1.0, -1.0];
            let v0 = draw(&mut rng, c.v0);
            let gap0 = draw(&mut rng, c.gap0);
            let off = draw(&mut rng, c.lane_offset);
            let s = side[rng.random_range(0..2usize)];
            SampledParams::Parked(ParkedParams {
                v0,
                gap0,
                lane_offset: s * off,
            })
        }
        ScenarioFamily::CurvedRoad => {
            let base = sample_highway(&mut rng, &cal.highway);
            let offset_phase = rng.random_range(0.0..std::f64::consts::TAU);
            SampledParams::Curved(CurvedParams {
                base,
                offset_amp: cal.curved.offset_amp,
                offset_period: cal.curved.offset_period,
                offset_phase,
            })
        }
        ScenarioFamily::MultiVehicle => {
            let c = &cal.multi;
            let v0 = draw(&mut rng, c.v0);
            let lead1_v0 = (v0 + draw(&mut rng, c.lead_dv)).max(1.0);
            let gap1 = draw(&mut rng, c.gap1);
            let gap2 = gap1 + draw(&mut rng, c.gap2_extra);
            let lead2_v0 = (v0 + draw(&mut rng, c.lead_dv)).max(1.0);
            let adjacent_gap = draw(&mut rng, c.adjacent_gap);
            let adjacent_v0 = (v0 + draw(&mut rng, c.adjacent_dv)).max(1.0);
            let follower_time_gap = draw(&mut rng, c.follower_time_gap);
            let follower_reaction = draw(&mut rng, c.follower_reaction);
            let hazard_draw: f64 = rng.random();
            let hazard_t = draw(&mut rng, c.hazard_time);
            let hazard_v = draw(&mut rng, c.hazard_target_v);
            let hazard = (hazard_draw < c.hazard_probability).then_some(HazardEvent {
                t: hazard_t,
                decel: c.hazard_decel,
                target_v: hazard_v,
            });
            SampledParams::Multi(MultiParams {
                v0,
                lead1_v0,
                gap1,
                gap2,
                lead2_v0,
                adjacent_gap,
                adjacent_v0,
                follower_time_gap,
                follower_reaction,
                hazard,
            })
        }
    };
    ScenarioSpec {
        family,
        seed,
        duration,
        params,
    }
}

/// Longitudinal motion as a closed-form function of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LongitudinalScript {
    Stationary {
        s_rear: f64,
    },
    ConstantSpeed {
        s0: f64,
        v: f64,
    },
    /// v(t) = v0 + amp * sin(omega t + phase)
    CruiseSine {
        s0: f64,
        v0: f64,
        amp: f64,
        omega: f64,
        phase: f64,
    },
    /// CruiseSine until `t_h`, then a constant-deceleration ramp down to
    /// `target_v`, held afterwards.
    HazardCruise {
        s0: f64,
        v0: f64,
        amp: f64,
        omega: f64,
        phase: f64,
        t_h: f64,
        decel: f64,
        target_v: f64,
    },
    /// Stop-and-go waves: a raised-cosine speed pulse of length `t_move`
    /// above a trough speed `v_floor`, followed by a trough dwell of
    /// `t_stop`, repeating. `v_floor` of zero is a full standstill queue.
    StopGoWave {
        s0: f64,
        v_max: f64,
        v_floor: f64,
        t_move: f64,
        t_stop: f64,
        phase: f64,
    },
}

/// Speed of the stop-and-go wave at absolute time `t`.
pub(crate) fn stop_go_speed(v_max: f64, v_floor: f64, t_move: f64, t_stop: f64, x: f64) -> f64 {
    let cycle = t_move + t_stop;
    let tau = x.rem_euclid(cycle);
    if tau < t_move {
        v_floor + 0.5 * (v_max - v_floor) * (1.0 - (std::f64::consts::TAU * tau / t_move).cos())
    } else {
        v_floor
    }
}

fn stop_go_distance(v_max: f64, v_floor: f64, t_move: f64, t_stop: f64, x: f64) -> f64 {
    let cycle = t_move + t_stop;
    let amp = v_max - v_floor;
    let per_cycle = 0.5 * amp * t_move;
    let full = (x / cycle).floor();
    let tau = x - full * cycle;
    let within = if tau < t_move {
        0.5 * amp
            * (tau - (std::f64::consts::TAU * tau / t_move).sin() * t_move / std::f64::consts::TAU)
    } else {
        per_cycle
    };
    v_floor * x + full * per_cycle + within
}

fn cruise_sine_eval(s0: f64, v0: f64, amp: f64, omega: f64, phase: f64, t: f64) -> (f64, f64, f64) {
    let s = s0 + v0 * t - amp / omega * ((omega * t + phase).cos() - phase.cos());
    let v = v0 + amp * (omega * t + phase).sin();
    let a = amp * omega * (omega * t + phase).cos();
    (s, v, a)
}

impl LongitudinalScript {
    /// Position of the rear bumper, speed, and acceleration at time `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            LongitudinalScript::Stationary { s_rear } => (s_rear, 0.0, 0.0),
            LongitudinalScript::ConstantSpeed { s0, v } => (s0 + v * t, v, 0.0),
            LongitudinalScript::CruiseSine {
                s0,
                v0,
                amp,
                omega,
                phase,
            } => cruise_sine_eval(s0, v0, amp, omega, phase, t),
            LongitudinalScript::HazardCruise {
                s0,
                v0,
                amp,
                omega,
                phase,
                t_h,
                decel,
                target_v,
            } => {
                if t < t_h {
                    return cruise_sine_eval(s0, v0, amp, omega, phase, t);
                }
                let (s_h, v_h, _) = cruise_sine_eval(s0, v0, amp, omega, phase, t_h);
                let v_h = v_h.max(target_v);
                let t_ramp = (v_h - target_v) / decel;
                let tau = t - t_h;
                if tau < t_ramp {
                    (
                        s_h + v_h * tau - 0.5 * decel * tau * tau,
                        v_h - decel * tau,
                        -decel,
                    )
                } else {
                    let s_e = s_h + v_h * t_ramp - 0.5 * decel * t_ramp * t_ramp;
                    (s_e + target_v * (tau - t_ramp), target_v, 0.0)
                }
            }
            LongitudinalScript::StopGoWave {
                s0,
                v_max,
                v_floor,
                t_move,
                t_stop,
                phase,
            } => {
                let x = t + phase;
                let s = s0 + stop_go_distance(v_max, v_floor, t_move, t_stop, x)
                    - stop_go_distance(v_max, v_floor, t_move, t_stop, phase);
                let v = stop_go_speed(v_max, v_floor, t_move, t_stop, x);
                let cycle = t_move + t_stop;
                let tau = x.rem_euclid(cycle);
                let a = if tau < t_move {
                    0.5 * (v_max - v_floor) * std::f64::consts::TAU / t_move
                        * (std::f64::consts::TAU * tau / t_move).sin()
                } else {
                    0.0
                };
                (s, v, a)
            }
        }
    }
}

/// Lateral motion as a closed-form function of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LateralScript {
    Constant {
        offset: f64,
    },
    /// Smoothstep merge from `from` to lane center over the window.
    Merge {
        from: f64,
        t_start: f64,
        duration: f64,
    },
    /// Slow sinusoidal wobble around `base` (curved-road appearance).
    Wobble {
        base: f64,
        amp: f64,
        omega: f64,
        phase: f64,
    },
}

impl LateralScript {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            LateralScript::Constant { offset } => offset,
            LateralScript::Merge {
                from,
                t_start,
                duration,
            } => {
                if t <= t_start {
                    from
                } else if t >= t_start + duration {
                    0.0
                } else {
                    let x = (t - t_start) / duration;
                    from * (1.0 - (3.0 * x * x - 2.0 * x * x * x))
                }
            }
            LateralScript::Wobble {
                base,
                amp,
                omega,
                phase,
            } => base + amp * (omega * t + phase).sin(),
        }
    }
}

/// One scripted traffic participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedObject {
    pub id: u32,
    pub kind: ObjectKind,
    pub length: f64,
    pub motion: LongitudinalScript,
    pub lateral: LateralScript,
}

/// Evaluates a scripted object at absolute time `t`.
pub fn step_object(obj: &ScriptedObject, t: f64) -> TrafficObject {
    let (s_rear, v, a) = obj.motion.eval(t);
    TrafficObject {
        id: obj.id,
        s_rear,
        v,
        a,
        lane_offset: obj.lateral.eval(t),
        length: obj.length,
        kind: obj.kind,
    }
}

/// Initial ego conditions for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoInit {
    pub v0: f64,
    pub v_set: f64,
}

/// Fixed car-following rule for the MultiVehicle follower. Reacts to the
/// ego's realized trajectory; deliberately softer than the ego's own
/// braking authority so that hard false braking erodes its headway.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerInit {
    pub id: u32,
    pub s_front0: f64,
    pub v0: f64,
    pub length: f64,
    pub time_gap: f64,
    pub d0: f64,
    pub k_gap: f64,
    pub k_rel: f64,
    pub a_min: f64,
    pub a_max: f64,
    /// Reaction latency to the ego's motion, s.
    pub reaction: f64,
}

/// Everything needed to run one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScripts {
    pub objects: Vec<ScriptedObject>,
    pub ego: EgoInit,
    pub follower: Option<FollowerInit>,
}

/// Expands a sampled spec into traffic scripts and ego initial conditions.
pub fn build_scripts(spec: &ScenarioSpec) -> ScenarioScripts {
    const VEHICLE_LENGTH: f64 = 4.5;
    let lead_script = |p: &HighwayParams, id: u32, lateral: LateralScript| {
        let omega = std::f64::consts::TAU / p.wave_period;
        let motion = match p.hazard {
            None => LongitudinalScript::CruiseSine {
                s0: p.gap0,
                v0: p.lead_v0,
                amp: p.wave_amp,
                omega,
                phase: p.wave_phase,
            },
            Some(h) => LongitudinalScript::HazardCruise {
                s0: p.gap0,
                v0: p.lead_v0,
                amp: p.wave_amp,
                omega,
                phase: p.wave_phase,
                t_h: h.t,
                decel: h.decel,
                target_v: h.target_v,
            },
        };
        ScriptedObject {
            id,
            kind: ObjectKind::Vehicle,
            length: VEHICLE_LENGTH,
            motion,
            lateral,
        }
    };

    match &spec.params {
        SampledParams::Highway(p) => ScenarioScripts {
            objects: vec![lead_script(p, 1, LateralScript::Constant { offset: 0.0 })],
            ego: EgoInit {
                v0: p.v0,
                v_set: p.v0,
            },
            follower: None,
        },
        SampledParams::Curved(p) => {
            let omega = std::f64::consts::TAU / p.offset_period;
            ScenarioScripts {
                objects: vec![lead_script(
                    &p.base,
                    1,
                    LateralScript::Wobble {
                        base: 0.0,
                        amp: p.offset_amp,
                        omega,
                        phase: p.offset_phase,
                    },
                )],
                ego: EgoInit {
                    v0: p.base.v0,
                    v_set: p.base.v0,
                },
                follower: None,
            }
        }
        SampledParams::StopGo(p) => ScenarioScripts {
            objects: vec![ScriptedObject {
                id: 1,
                kind: ObjectKind::Vehicle,
                length: VEHICLE_LENGTH,
                motion: LongitudinalScript::StopGoWave {
                    s0: p.gap0,
                    v_max: p.v_max,
                    v_floor: p.v_floor,
                    t_move: p.t_move,
                    t_stop: p.t_stop,
                    phase: p.phase,
                },
                lateral: LateralScript::Constant { offset: 0.0 },
            }],
            ego: EgoInit {
                v0: p.v0,
                v_set: p.v_max,
            },
            follower: None,
        },
        SampledParams::CutIn(p) => {
            // The cutter holds speed; its start position is chosen so the
            // gap to a nominally cruising ego equals the sampled gap when
            // the merge begins.
            let s0 = p.v0 * p.merge_start + p.gap_at_merge - p.cutter_v * p.merge_start;
            ScenarioScripts {
                objects: vec![ScriptedObject {
                    id: 1,
                    kind: ObjectKind::Vehicle,
                    length: VEHICLE_LENGTH,
                    motion: LongitudinalScript::ConstantSpeed { s0, v: p.cutter_v },
                    lateral: LateralScript::Merge {
                        from: p.lane_from,
                        t_start: p.merge_start,
                        duration: p.merge_duration,
                    },
                }],
                ego: EgoInit {
                    v0: p.v0,
                    v_set: p.v0,
                },
                follower: None,
            }
        }
        SampledParams::Parked(p) => ScenarioScripts {
            objects: vec![ScriptedObject {
                id: 1,
                kind: ObjectKind::Parked,
                length: VEHICLE_LENGTH,
                motion: LongitudinalScript::Stationary { s_rear: p.gap0 },
                lateral: LateralScript::Constant {
                    offset: p.lane_offset,
                },
            }],
            ego: EgoInit {
                v0: p.v0,
                v_set: p.v0,
            },
            follower: None,
        },
        SampledParams::Multi(p) => {
            let hp = HighwayParams {
                v0: p.v0,
                lead_v0: p.lead1_v0,
                gap0: p.gap1,
                wave_amp: 0.3,
                wave_period: 20.0,
                wave_phase: 0.0,
                hazard: p.hazard,
            };
            let objects = vec![
                lead_script(&hp, 1, LateralScript::Constant { offset: 0.0 }),
                ScriptedObject {
                    id: 2,
                    kind: ObjectKind::Vehicle,
                    length: VEHICLE_LENGTH,
                    motion: LongitudinalScript::ConstantSpeed {
                        s0: p.gap2,
                        v: p.lead2_v0,
                    },
                    lateral: LateralScript::Constant { offset: 0.0 },
                },
                ScriptedObject {
                    id: 3,
                    kind: ObjectKind::Vehicle,
                    length: VEHICLE_LENGTH,
                    motion: LongitudinalScript::ConstantSpeed {
                        s0: p.adjacent_gap,
                        v: p.adjacent_v0,
                    },
                    lateral: LateralScript::Constant { offset: 3.5 },
                },
            ];
            let follower_gap0 = p.follower_time_gap * p.v0 + 2.0;
            let follower_front = -(crate::dynamics::EGO_LENGTH + follower_gap0);
            ScenarioScripts {
                objects,
                ego: EgoInit {
                    v0: p.v0,
                    v_set: p.v0,
                },
                follower: Some(FollowerInit {
                    id: 100,
                    s_front0: follower_front,
                    v0: p.v0,
                    length: VEHICLE_LENGTH,
                    time_gap: p.follower_time_gap,
                    d0: 2.0,
                    k_gap: 0.2,
                    k_rel: 0.7,
                    a_min: -6.0,
                    a_max: 2.0,
                    reaction: p.follower_reaction,
                }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sampling_is_deterministic() {
        let cal = Calibration::default();
        for family in ScenarioFamily::ALL {
            let a = sample(family, 42, 40.0, &cal);
            let b = sample(family, 42, 40.0, &cal);
            assert_eq!(a, b, "{family}");
            let c = sample(family, 43, 40.0, &cal);
            assert_ne!(a.params, c.params, "{family}");
        }
    }

    #[test]
    fn cut_in_gap_stays_in_documented_range() {
        let cal = Calibration::default();
        for seed in 0..1000u64 {
            let spec = sample(ScenarioFamily::CutIn, seed, 40.0, &cal);
            match spec.params {
                SampledParams::CutIn(p) => {
                    assert!(
                        (8.0..=20.0).contains(&p.gap_at_merge),
                        "seed {seed}: {}",
                        p.gap_at_merge
                    );
                    assert!(p.cutter_v < p.v0);
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn sampled_parameters_stay_in_ranges() {
        let cal = Calibration::default();
        for seed in 0..500u64 {
            match sample(ScenarioFamily::HighwayFollowing, seed, 40.0, &cal).params {
                SampledParams::Highway(p) => {
                    assert!((25.0..=33.0).contains(&p.v0));
                    assert!((40.0..=70.0).contains(&p.gap0));
                    if let Some(h) = p.hazard {
                        assert!((6.0..=18.0).contains(&h.t));
                        assert!((4.5..=7.5).contains(&h.target_v));
                    }
                }
                _ => unreachable!(),
            }
            match sample(ScenarioFamily::ParkedVehicle, seed, 40.0, &cal).params {
                SampledParams::Parked(p) => {
                    assert!((0.5..=1.2).contains(&p.lane_offset.abs()));
                    assert!((13.0..=21.0).contains(&p.v0));
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn parked_object_is_stationary_and_partially_blocking() {
        let cal = Calibration::default();
        let spec = sample(ScenarioFamily::ParkedVehicle, 7, 40.0, &cal);
        let scripts = build_scripts(&spec);
        let a = step_object(&scripts.objects[0], 0.0);
        let b = step_object(&scripts.objects[0], 17.3);
        assert_eq!(a.s_rear, b.s_rear);
        assert_eq!(b.v, 0.0);
        assert!(b.lane_offset.abs() < 1.5 && b.lane_offset.abs() > 0.0);
    }

    #[test]
    fn constant_speed_lead_advances() {
        let obj = ScriptedObject {
            id: 1,
            kind: ObjectKind::Vehicle,
            length: 4.5,
            motion: LongitudinalScript::ConstantSpeed { s0: 50.0, v: 28.0 },
            lateral: LateralScript::Constant { offset: 0.0 },
        };
        let a = step_object(&obj, 1.0);
        let b = step_object(&obj, 1.1);
        assert_relative_eq!(b.s_rear - a.s_rear, 2.8, epsilon = 1e-12);
    }

    #[test]
    fn merge_offset_is_monotone_and_bounded() {
        let lateral = LateralScript::Merge {
            from: 3.5,
            t_start: 4.0,
            duration: 1.5,
        };
        assert_eq!(lateral.eval(0.0), 3.5);
        assert_eq!(lateral.eval(10.0), 0.0);
        let mid = lateral.eval(4.75);
        assert!(mid > 0.0 && mid < 3.5);
        let mut prev = lateral.eval(4.0);
        let mut t = 4.05;
        while t < 5.5 {
            let x = lateral.eval(t);
            assert!(x < prev);
            prev = x;
            t += 0.05;
        }
    }

    #[test]
    fn hazard_scripts_cross_the_braking_threshold_open_loop() {
        // ideal-observer check: with the ego frozen at v0, ground-truth TTC
        // must dip below the AEB threshold whenever a hazard was sampled
        let cal = Calibration::default();
        let mut hazards = 0;
        for seed in 0..300u64 {
            let spec = sample(ScenarioFamily::HighwayFollowing, seed, 40.0, &cal);
            let scripts = build_scripts(&spec);
            let (v0, hazard) = match &spec.params {
                SampledParams::Highway(p) => (p.v0, p.hazard),
                _ => unreachable!(),
            };
            if hazard.is_none() {
                continue;
            }
            hazards += 1;
            let mut min_ttc = f64::INFINITY;
            let mut t = 0.0;
            while t < 40.0 {
                let obj = step_object(&scripts.objects[0], t);
                let gap = obj.s_rear - v0 * t;
                let closing = v0 - obj.v;
                if gap <= 0.0 {
                    min_ttc = 0.0;
                    break;
                }
                if closing > 0.01 {
                    min_ttc = min_ttc.min(gap / closing);
                }
                t += 0.1;
            }
            assert!(min_ttc < 1.2, "seed {seed}: open-loop min ttc {min_ttc}");
        }
        assert!(hazards > 10, "hazard probability looks broken: {hazards}");
    }

    #[test]
    fn stop_go_wave_touches_zero_and_stays_nonnegative() {
        let cal = Calibration::default();
        let spec = sample(ScenarioFamily::StopAndGo, 3, 40.0, &cal);
        let scripts = build_scripts(&spec);
        let mut vmin = f64::INFINITY;
        let mut dwell = 0usize;
        let mut t = 0.0;
        while t < 40.0 {
            let obj = step_object(&scripts.objects[0], t);
            assert!(obj.v >= 0.0);
            vmin = vmin.min(obj.v);
            if obj.v < 1.6 {
                dwell += 1;
            }
            t += 0.05;
        }
        assert!(
            vmin < 1.6,
            "wave should idle near its trough speed, got {vmin}"
        );
        assert!(
            dwell > 10,
            "wave should dwell at its trough, got {dwell} samples"
        );
    }

    #[test]
    fn scripts_are_bit_identical_across_reruns() {
        let cal = Calibration::default();
        for family in ScenarioFamily::ALL {
            let s1 = build_scripts(&sample(family, 11, 40.0, &cal));
            let s2 = build_scripts(&sample(family, 11, 40.0, &cal));
            for (a, b) in s1.objects.iter().zip(&s2.objects) {
                for k in 0..400 {
                    let t = k as f64 * 0.1;
                    assert_eq!(step_object(a, t), step_object(b, t));
                }
            }
        }
    }
}

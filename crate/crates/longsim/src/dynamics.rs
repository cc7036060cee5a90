//! Longitudinal kinematics of the ego vehicle and ground-truth geometry
//! queries (gap, collision).
//!
//! The ego integrates a first-order actuator lag exactly: per step the
//! acceleration state follows the closed-form exponential response and the
//! velocity/position updates are the analytic integrals of that response,
//! so position matches the lagged double integrator to machine precision
//! for piecewise-constant commands regardless of step size.

use serde::{Deserialize, Serialize};

/// Front-bumper ego state. Velocity never goes negative (no reverse motion).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    /// Simulation time, s.
    pub t: f64,
    /// Longitudinal position of the front bumper, m.
    pub s_front: f64,
    /// Speed, m/s. Always >= 0.
    pub v: f64,
    /// Realized longitudinal acceleration, m/s^2.
    pub a: f64,
    /// Last commanded acceleration, m/s^2 (pre-clamp).
    pub a_cmd_applied: f64,
}

impl EgoState {
    pub fn new(s_front: f64, v: f64) -> Self {
        Self {
            t: 0.0,
            s_front,
            v,
            a: 0.0,
            a_cmd_applied: 0.0,
        }
    }
}

/// Assumed ego body length, m. Used for rear-gap (follower headway) geometry.
pub const EGO_LENGTH: f64 = 4.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Vehicle,
    Parked,
    PhantomTemplate,
}

/// Ground-truth traffic participant. Scripted objects are pure functions of
/// `(scenario seed, t)` and never react to the ego.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficObject {
    pub id: u32,
    /// Longitudinal position of the rear bumper, m.
    pub s_rear: f64,
    /// Speed, m/s.
    pub v: f64,
    /// Scripted acceleration, m/s^2.
    pub a: f64,
    /// Lateral offset from the ego lane center, m.
    pub lane_offset: f64,
    /// Body length, m. Always > 0.
    pub length: f64,
    pub kind: ObjectKind,
}

/// First-order actuator lag plus hard acceleration limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActuatorModel {
    /// Lag time constant, s. Must be > 0.
    pub tau: f64,
    /// Max braking (negative), m/s^2.
    pub a_min: f64,
    /// Max acceleration (positive), m/s^2.
    pub a_max: f64,
}

impl Default for ActuatorModel {
    fn default() -> Self {
        Self {
            tau: 0.2,
            a_min: -9.0,
            a_max: 2.5,
        }
    }
}

/// Ground truth at one timestamp. Object ids are unique within a run.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub t: f64,
    pub ego: EgoState,
    pub objects: Vec<TrafficObject>,
}

/// Advances the ego one step under a held command.
///
/// The acceleration state relaxes toward the clamped command with the exact
/// exponential solution; velocity and position advance by the analytic
/// integrals of that solution. Velocity clamps at zero (no reverse) and the
/// position never decreases; when the velocity clamps, the reported
/// acceleration is the lag-state value that produced the clamp.
///
/// Panics on non-finite inputs: those are configuration errors.
pub fn step_ego(state: &EgoState, a_cmd: f64, act: &ActuatorModel, dt: f64) -> EgoState {
    assert!(a_cmd.is_finite(), "non-finite acceleration command");
    assert!(dt > 0.0 && dt.is_finite(), "non-positive step");
    assert!(act.tau > 0.0, "actuator lag must be positive");

    let a_c = a_cmd.clamp(act.a_min, act.a_max);
    let u = (-dt / act.tau).exp();
    let a_next = a_c + (state.a - a_c) * u;
    let dv = a_c * dt + (state.a - a_c) * act.tau * (1.0 - u);
    let ds =
        state.v * dt + 0.5 * a_c * dt * dt + (state.a - a_c) * act.tau * (dt - act.tau * (1.0 - u));

    EgoState {
        t: state.t + dt,
        s_front: state.s_front + ds.max(0.0),
        v: (state.v + dv).max(0.0),
        a: a_next,
        a_cmd_applied: a_cmd,
    }
}

/// Bumper-to-bumper gap, m. Negative when overlapping.
pub fn gap(ego: &EgoState, obj: &TrafficObject) -> f64 {
    obj.s_rear - ego.s_front
}

/// Record of a ground-truth collision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub t: f64,
    pub object_id: u32,
    /// Closing speed at impact, m/s.
    pub impact_speed: f64,
}

/// Checks the ego front bumper against every forward object. A collision
/// requires longitudinal overlap (gap <= 0) and lateral overlap
/// (|lane_offset| < threshold). Objects behind the ego are ignored.
pub fn collision_check(world: &WorldState, lane_overlap_threshold: f64) -> Option<Collision> {
    let mut best: Option<(f64, Collision)> = None;
    for obj in &world.objects {
        // forward object: some part of its body lies ahead of the ego front bumper
        if obj.s_rear + obj.length <= world.ego.s_front {
            continue;
        }
        let g = gap(&world.ego, obj);
        if g <= 0.0 && obj.lane_offset.abs() < lane_overlap_threshold {
            let c = Collision {
                t: world.t,
                object_id: obj.id,
                impact_speed: world.ego.v - obj.v,
            };
            let deeper = best.as_ref().is_none_or(|(bg, _)| g < *bg);
            if deeper {
                best = Some((g, c));
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Nearest in-lane forward object, if any. This is the ground-truth
/// "primary" the controllers are supposed to be reacting to.
pub fn nearest_in_lane(world: &WorldState, lane_overlap_threshold: f64) -> Option<&TrafficObject> {
    world
        .objects
        .iter()
        .filter(|o| gap(&world.ego, o) > 0.0 && o.lane_offset.abs() < lane_overlap_threshold)
        .min_by(|a, b| {
            gap(&world.ego, a)
                .partial_cmp(&gap(&world.ego, b))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
}

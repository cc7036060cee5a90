//! Closed-loop single-run executor.
//!
//! One run couples the scripted world, the perception channel (with the
//! configured attack effect), the tracker, the controllers and safeguards,
//! and the lagged ego dynamics. Control runs at the sensor frame rate with
//! zero-order hold; physics substeps at `dt_phys`. Each run is a pure
//! function of its setup, so independent runs parallelize freely.

use serde::{Deserialize, Serialize};

use crate::control::{
    arbitrate, fallback_speed_cap, guard_fallback, guard_persistence, guard_rate_limit, AccConfig,
    AccController, AebConfig, AebController, ControlCommand, InstabilityMonitor, SafeguardConfig,
};
use crate::dynamics::{
    collision_check, gap, nearest_in_lane, step_ego, ActuatorModel, Collision, EgoState,
    ObjectKind, TrafficObject, WorldState, EGO_LENGTH,
};
use crate::perception::{
    apply_attack, curvature_bias_multiplier, sense, AttackSpec, Detection, SensorConfig,
};
use crate::scenario::{
    build_scripts, sample, step_object, Calibration, FollowerInit, ScenarioFamily, ScenarioSpec,
    ScriptedObject,
};
use crate::seeding::{stream_seed, STREAM_ATTACK, STREAM_SENSOR};
use crate::trace::{RunTrace, TraceMeta, TraceRow, TRACE_SCHEMA_VERSION};
use crate::tracker::{Tracker, TrackerConfig};

/// Knobs shared by every run of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub sensor: SensorConfig,
    pub tracker: TrackerConfig,
    pub aeb: AebConfig,
    pub acc: AccConfig,
    pub actuator: ActuatorModel,
    pub calibration: Calibration,
    /// Lateral overlap below which a forward object shares the ego lane, m.
    pub lane_overlap_threshold: f64,
    /// Physics substep, s.
    pub dt_phys: f64,
    /// Run horizon, s.
    pub horizon: f64,
    /// Travel-time reference distance as a fraction of `v0 * horizon`.
    pub travel_ref_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sensor: SensorConfig::default(),
            tracker: TrackerConfig::default(),
            aeb: AebConfig::default(),
            acc: AccConfig::default(),
            actuator: ActuatorModel::default(),
            calibration: Calibration::default(),
            lane_overlap_threshold: 1.5,
            dt_phys: 0.01,
            horizon: 40.0,
            travel_ref_fraction: 0.6,
        }
    }
}

/// Result of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub spec: ScenarioSpec,
    pub trace: RunTrace,
    pub collision: Option<Collision>,
}

#[derive(Debug, Clone)]
struct FollowerState {
    init: FollowerInit,
    s_front: f64,
    v: f64,
    /// Delay line of observed ego speed: spacing is visible continuously,
    /// but the follower reacts to speed changes `reaction` seconds late.
    observed_v: std::collections::VecDeque<f64>,
    delay_steps: usize,
}

impl FollowerState {
    fn new(init: FollowerInit, dt: f64) -> Self {
        let delay_steps = (init.reaction / dt).round().max(0.0) as usize;
        Self {
            init,
            s_front: init.s_front0,
            v: init.v0,
            observed_v: std::collections::VecDeque::with_capacity(delay_steps + 1),
            delay_steps,
        }
    }

    fn object(&self) -> TrafficObject {
        TrafficObject {
            id: self.init.id,
            s_rear: self.s_front - self.init.length,
            v: self.v,
            a: 0.0,
            lane_offset: 0.0,
            length: self.init.length,
            kind: ObjectKind::Vehicle,
        }
    }

    fn step(&mut self, ego: &EgoState, dt: f64) {
        self.observed_v.push_back(ego.v);
        let ego_v = if self.observed_v.len() > self.delay_steps {
            self.observed_v.pop_front().unwrap()
        } else {
            self.init.v0 // pre-run cruise
        };
        let p = &self.init;
        let gap_f = (ego.s_front - EGO_LENGTH) - self.s_front;
        let a = (p.k_gap * (gap_f - (p.d0 + p.time_gap * self.v)) + p.k_rel * (ego_v - self.v))
            .clamp(p.a_min, p.a_max);
        let ds = self.v * dt + 0.5 * a * dt * dt;
        self.s_front += ds.max(0.0);
        self.v = (self.v + a * dt).max(0.0);
    }

    /// Time headway from the follower's front bumper to the ego's rear, s.
    fn headway(&self, ego: &EgoState) -> f64 {
        let gap_f = (ego.s_front - EGO_LENGTH) - self.s_front;
        gap_f / self.v.max(0.1)
    }
}

fn assemble_world(
    t: f64,
    ego: EgoState,
    scripts: &[ScriptedObject],
    follower: Option<&FollowerState>,
) -> WorldState {
    let mut objects: Vec<TrafficObject> = scripts.iter().map(|o| step_object(o, t)).collect();
    if let Some(f) = follower {
        objects.push(f.object());
    }
    WorldState { t, ego, objects }
}

/// Executes one run to its horizon, to collision, or to a settled
/// standstill with nothing live ahead.
pub fn run_once(
    cfg: &SimConfig,
    family: ScenarioFamily,
    seed: u64,
    condition: &str,
    attack: &AttackSpec,
    safeguards: &SafeguardConfig,
) -> RunOutcome {
    let spec = sample(family, seed, cfg.horizon, &cfg.calibration);
    let scripts = build_scripts(&spec);
    let attack = attack.resolve(spec.hazard_time());
    let kappa = curvature_bias_multiplier(family, cfg.calibration.curved_bias_amplification);
    let sensor_seed = stream_seed(seed, STREAM_SENSOR);
    let attack_seed = stream_seed(seed, STREAM_ATTACK);

    let control_dt = cfg.sensor.frame_dt();
    let substeps = (control_dt / cfg.dt_phys).round().max(1.0) as u32;
    let dt_phys = control_dt / substeps as f64;
    let n_frames = (cfg.horizon / control_dt).round() as u32;

    let mut ego = EgoState::new(0.0, scripts.ego.v0);
    let mut follower = scripts.follower.map(|f| FollowerState::new(f, cfg.dt_phys));
    let mut tracker = Tracker::new(cfg.tracker);
    let mut acc = AccController::new();
    let mut aeb = AebController::new();
    let mut monitor = InstabilityMonitor::new(safeguards.instability_window);
    let mut prev_cmd = 0.0f64;
    let mut standstill_frames = 0u32;

    let mut acc_cfg: AccConfig = cfg.acc;
    acc_cfg.v_set = spec.ego_v_set();
    let d_ref = cfg.travel_ref_fraction * scripts.ego.v0 * cfg.horizon;

    let meta = TraceMeta {
        schema_version: TRACE_SCHEMA_VERSION,
        family: family.name().to_string(),
        seed,
        condition: condition.to_string(),
        horizon: cfg.horizon,
        control_dt,
        ttc_threshold: cfg.aeb.ttc_threshold,
        d_ref,
    };
    let mut rows: Vec<TraceRow> = Vec::with_capacity(n_frames as usize + 1);
    let mut collision: Option<Collision> = None;

    'frames: for frame in 0..n_frames {
        let t = frame as f64 * control_dt;
        let world = assemble_world(t, ego, &scripts.objects, follower.as_ref());

        // perception -> attack -> tracking
        let sensed = sense(&world, &cfg.sensor, sensor_seed, frame);
        let sensed = apply_attack(
            sensed,
            &world,
            &attack,
            kappa,
            t,
            frame,
            attack_seed,
            cfg.lane_overlap_threshold,
        );
        let dets: Vec<Detection> = sensed.iter().map(|s| s.det).collect();
        tracker.step(&dets, control_dt);
        let primary = tracker.primary_object().copied();
        let instability = monitor.update(primary.as_ref());

        // controllers and safeguards
        let mut frame_acc = acc_cfg;
        if safeguards.fallback {
            frame_acc.v_set = fallback_speed_cap(acc_cfg.v_set, instability, safeguards);
        }
        let acc_cmd = acc.step(primary.as_ref(), &ego, &frame_acc, control_dt);
        let min_age = safeguards
            .persistence
            .then_some(safeguards.persistence_frames);
        let aeb_raw = aeb.step(primary.as_ref(), tracker.tracks(), ego.v, &cfg.aeb, min_age);
        let aeb_gated = if safeguards.persistence {
            guard_persistence(aeb_raw, primary.as_ref(), safeguards)
        } else {
            aeb_raw
        };
        let mut cmd: ControlCommand = arbitrate(acc_cmd, aeb_gated);
        if safeguards.fallback {
            cmd = guard_fallback(cmd, instability, safeguards);
        }
        if safeguards.rate_limit {
            cmd.a_cmd = guard_rate_limit(prev_cmd, cmd.a_cmd, control_dt, safeguards);
        }
        prev_cmd = cmd.a_cmd;

        let truth = nearest_in_lane(&world, cfg.lane_overlap_threshold);
        rows.push(TraceRow {
            t,
            s_front: ego.s_front,
            v: ego.v,
            a_realized: ego.a,
            a_cmd: cmd.a_cmd,
            source: cmd.source,
            eb_active: cmd.eb_active,
            truth_gap: truth.map(|o| gap(&ego, o)),
            truth_vrel: truth.map(|o| ego.v - o.v),
            perceived_gap: primary.map(|p| p.gap_est),
            track_vrel: primary.map(|p| p.v_rel_est),
            track_id: primary.map(|p| p.track_id),
            track_age: primary.map(|p| p.age_frames),
            instability,
            follower_headway: follower.as_ref().map(|f| f.headway(&ego)),
        });

        // physics substeps under the held command
        for k in 1..=substeps {
            let sub_t = t + k as f64 * dt_phys;
            ego = step_ego(&ego, cmd.a_cmd, &cfg.actuator, dt_phys);
            ego.t = sub_t;
            if let Some(f) = follower.as_mut() {
                f.step(&ego, dt_phys);
            }
            let world = assemble_world(sub_t, ego, &scripts.objects, follower.as_ref());
            if let Some(hit) = collision_check(&world, cfg.lane_overlap_threshold) {
                let obj = world.objects.iter().find(|o| o.id == hit.object_id);
                rows.push(TraceRow {
                    t: sub_t,
                    s_front: ego.s_front,
                    v: ego.v,
                    a_realized: ego.a,
                    a_cmd: cmd.a_cmd,
                    source: cmd.source,
                    eb_active: cmd.eb_active,
                    truth_gap: obj.map(|o| gap(&ego, o)),
                    truth_vrel: Some(hit.impact_speed),
                    perceived_gap: primary.map(|p| p.gap_est),
                    track_vrel: primary.map(|p| p.v_rel_est),
                    track_id: primary.map(|p| p.track_id),
                    track_age: primary.map(|p| p.age_frames),
                    instability,
                    follower_headway: follower.as_ref().map(|f| f.headway(&ego)),
                });
                collision = Some(hit);
                break 'frames;
            }
        }

        // settled standstill with nothing live ahead ends the run early
        if ego.v < 0.05 {
            standstill_frames += 1;
        } else {
            standstill_frames = 0;
        }
        if standstill_frames >= 10 {
            let world = assemble_world(t, ego, &scripts.objects, follower.as_ref());
            let live_ahead = world.objects.iter().any(|o| {
                let g = gap(&ego, o);
                g > 0.0
                    && g < 200.0
                    && o.lane_offset.abs() < cfg.lane_overlap_threshold
                    && o.kind != ObjectKind::Parked
            });
            if !live_ahead {
                break 'frames;
            }
        }
    }

    RunOutcome {
        spec,
        trace: RunTrace { meta, rows },
        collision,
    }
}

/// Ground-truth trajectories of the scripted objects at control rate,
/// independent of everything the ego does. Identical across attack and
/// safeguard conditions by construction; the MultiVehicle follower is
/// excluded because it reacts to the ego.
pub fn ground_truth_table(cfg: &SimConfig, family: ScenarioFamily, seed: u64) -> String {
    let spec = sample(family, seed, cfg.horizon, &cfg.calibration);
    let scripts = build_scripts(&spec);
    let control_dt = cfg.sensor.frame_dt();
    let n_frames = (cfg.horizon / control_dt).round() as u32;
    let mut out = String::with_capacity(64 * n_frames as usize);
    out.push_str("t,object_id,s_rear,v,lane_offset\n");
    for frame in 0..n_frames {
        let t = frame as f64 * control_dt;
        for script in &scripts.objects {
            let o = step_object(script, t);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t, o.id, o.s_rear, o.v, o.lane_offset
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::compute_run_metrics;
    use crate::perception::{AttackAnchor, AttackTarget};
    use crate::scenario::SampledParams;

    fn baseline(cfg: &SimConfig, family: ScenarioFamily, seed: u64) -> RunOutcome {
        run_once(
            cfg,
            family,
            seed,
            "baseline",
            &AttackSpec::None,
            &SafeguardConfig::off(),
        )
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = SimConfig::default();
        for family in [
            ScenarioFamily::HighwayFollowing,
            ScenarioFamily::MultiVehicle,
        ] {
            let a = baseline(&cfg, family, 11);
            let b = baseline(&cfg, family, 11);
            assert_eq!(a.trace, b.trace);
        }
    }

    #[test]
    fn benign_highway_following_is_uneventful() {
        let cfg = SimConfig::default();
        let mut seen = 0;
        for seed in 0..20u64 {
            let out = baseline(&cfg, ScenarioFamily::HighwayFollowing, seed);
            if matches!(&out.spec.params, SampledParams::Highway(p) if p.hazard.is_some()) {
                continue;
            }
            seen += 1;
            assert!(out.collision.is_none(), "seed {seed}");
            let m = compute_run_metrics(&out.trace).unwrap();
            assert_eq!(m.eb_event_count, 0, "seed {seed}");
            assert!(!m.oscillatory, "seed {seed}");
            assert!(m.min_gap.unwrap() > 5.0, "seed {seed}: {:?}", m.min_gap);
        }
        assert!(seen >= 10);
    }

    #[test]
    fn hazard_run_brakes_and_survives() {
        let cfg = SimConfig::default();
        let mut hazard_runs = 0;
        let mut eb_runs = 0;
        for seed in 0..200u64 {
            let spec = sample(
                ScenarioFamily::HighwayFollowing,
                seed,
                cfg.horizon,
                &cfg.calibration,
            );
            if spec.hazard_time().is_none() {
                continue;
            }
            hazard_runs += 1;
            let out = baseline(&cfg, ScenarioFamily::HighwayFollowing, seed);
            assert!(out.collision.is_none(), "baseline collision at seed {seed}");
            let m = compute_run_metrics(&out.trace).unwrap();
            if m.eb_event_count > 0 {
                eb_runs += 1;
            }
            assert_eq!(m.false_eb_count, 0, "hazard EB flagged false, seed {seed}");
        }
        assert!(hazard_runs >= 10, "too few hazard draws: {hazard_runs}");
        // tail draws stay mild enough for the ACC alone
        assert!(
            eb_runs * 10 >= hazard_runs * 6,
            "{eb_runs}/{hazard_runs} hazard runs braked"
        );
    }

    #[test]
    fn false_negative_during_hazard_delays_braking() {
        let cfg = SimConfig::default();
        let attack = AttackSpec::FalseNegative {
            start_t: 3.6,
            duration: 0.7,
            target: AttackTarget::Lead,
            anchor: AttackAnchor::Hazard,
        };
        let mut compared = 0;
        let mut delayed = 0;
        for seed in 0..200u64 {
            let spec = sample(
                ScenarioFamily::HighwayFollowing,
                seed,
                cfg.horizon,
                &cfg.calibration,
            );
            if spec.hazard_time().is_none() {
                continue;
            }
            let base = baseline(&cfg, ScenarioFamily::HighwayFollowing, seed);
            let attacked = run_once(
                &cfg,
                ScenarioFamily::HighwayFollowing,
                seed,
                "fn",
                &attack,
                &SafeguardConfig::off(),
            );
            let mb = compute_run_metrics(&base.trace).unwrap();
            let ma = compute_run_metrics(&attacked.trace).unwrap();
            if let (Some(db), Some(da)) = (mb.brake_onset_delay, ma.brake_onset_delay) {
                compared += 1;
                if da > db + 0.05 || ma.collision {
                    delayed += 1;
                }
            } else if ma.collision {
                compared += 1;
                delayed += 1;
            }
        }
        assert!(
            compared >= 8,
            "not enough comparable hazard runs: {compared}"
        );
        assert!(
            delayed * 2 >= compared,
            "FN failed to delay braking: {delayed}/{compared}"
        );
    }

    #[test]
    fn phantom_triggers_false_eb_without_collision() {
        let cfg = SimConfig::default();
        let attack = AttackSpec::FalsePositive {
            start_t: 6.0,
            duration: 0.2,
            phantom_gap: 5.5,
            phantom_rel_speed: 14.0,
            phantom_length: 4.5,
            anchor: AttackAnchor::RunStart,
        };
        let mut false_ebs = 0;
        for seed in 0..20u64 {
            let out = run_once(
                &cfg,
                ScenarioFamily::HighwayFollowing,
                seed,
                "fp",
                &attack,
                &SafeguardConfig::off(),
            );
            let m = compute_run_metrics(&out.trace).unwrap();
            if m.false_eb_count > 0 {
                false_ebs += 1;
            }
            // the phantom is not physical: braking must not cause impact
            assert!(!m.collision, "seed {seed}");
        }
        assert!(false_ebs >= 15, "phantom rarely fired: {false_ebs}/20");
    }

    #[test]
    fn ground_truth_table_ignores_condition() {
        let cfg = SimConfig::default();
        let a = ground_truth_table(&cfg, ScenarioFamily::StopAndGo, 7);
        let b = ground_truth_table(&cfg, ScenarioFamily::StopAndGo, 7);
        assert_eq!(a, b);
        assert!(a.starts_with("t,object_id,"));
    }

    #[test]
    fn parked_vehicle_baseline_stops_short() {
        let cfg = SimConfig::default();
        for seed in 0..15u64 {
            let out = baseline(&cfg, ScenarioFamily::ParkedVehicle, seed);
            assert!(out.collision.is_none(), "seed {seed}");
            let m = compute_run_metrics(&out.trace).unwrap();
            assert!(m.min_gap.unwrap() > 0.0, "seed {seed}");
        }
    }

    #[test]
    fn multi_vehicle_logs_follower_headway() {
        let cfg = SimConfig::default();
        let out = baseline(&cfg, ScenarioFamily::MultiVehicle, 3);
        let m = compute_run_metrics(&out.trace).unwrap();
        assert!(m.min_follower_headway.is_some());
        assert!(m.min_follower_headway.unwrap() > 0.5);
    }
}

//! Object-level perception channel: benign sensing of ground truth plus the
//! configured attack-effect injector.
//!
//! Errors are injected at the perception output level (on detections), never
//! on raw geometry: a false negative deletes detections, a false positive
//! appends a plausible one, distance bias rescales perceived range, and
//! flicker intermittently removes the lead. Detections carry no ground-truth
//! identity; association is the tracker's job. The injector, however, may
//! look at ground truth to decide which detection corresponds to the lead —
//! that is the attacker's knowledge, not the pipeline's.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{gap, nearest_in_lane, WorldState};
use crate::scenario::ScenarioFamily;
use crate::seeding::frame_seed;

/// One perceived object snapshot. Anonymous by design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Perceived bumper-to-bumper gap, m.
    pub perceived_gap: f64,
    /// Perceived lateral offset from the ego lane center, m.
    pub perceived_lane_offset: f64,
    /// Perceived body length, m.
    pub bbox_length: f64,
    /// Detector confidence in [0, 1].
    pub confidence: f64,
    /// Control frame the detection belongs to.
    pub frame_index: u32,
}

/// A detection plus the ground-truth object it came from. The source id is
/// visible to the attack injector only; the tracker consumes bare
/// [`Detection`]s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensed {
    pub det: Detection,
    /// `None` for synthetic (phantom) detections.
    pub source: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    /// Maximum sensing range, m.
    pub range_max: f64,
    /// Gaussian sigma on perceived gap, m.
    pub range_noise_sigma: f64,
    /// Probability that an in-range object yields no detection this frame.
    pub base_drop_prob: f64,
    /// Perception/control rate, Hz.
    pub frame_rate: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            range_max: 120.0,
            range_noise_sigma: 0.1,
            base_drop_prob: 0.005,
            frame_rate: 10.0,
        }
    }
}

impl SensorConfig {
    /// Control frame period, s.
    pub fn frame_dt(&self) -> f64 {
        1.0 / self.frame_rate
    }
}

/// Confidence reported for both real and phantom detections. Phantoms must
/// be indistinguishable downstream, so there is a single value.
pub const DETECTION_CONFIDENCE: f64 = 0.9;

/// Default phantom geometry: a vehicle-plausible body in the ego lane.
pub const PHANTOM_LENGTH: f64 = 4.5;

/// Range below which an injected distance bias stops scaling and acts as a
/// fixed displacement, m. A multiplicative range error carries no
/// time-to-collision information at all (the gap and its derivative scale
/// together and the ratio cancels), so the displacement must become
/// range-independent near the ego for biased perception to mistime braking
/// the way biased rigs do.
pub const BIAS_REFERENCE_FLOOR: f64 = 40.0;

/// Overestimation collapses inside this range, m: an object's own near
/// returns are dense and strong, so an attack cannot keep making it look
/// farther once it is close. Underestimation (injecting nearer returns)
/// keeps working at close range, so the fade applies to factors above 1
/// only.
pub const BIAS_NEAR_FIELD: f64 = 12.0;

/// Flicker removal pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlickerPattern {
    /// Remove the lead detection on alternating frames.
    Alternate,
    /// Remove the lead detection independently with probability `p`.
    DropProb { p: f64 },
}

/// Where an attack window's `start_t` is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackAnchor {
    /// `start_t` is absolute simulation time.
    #[default]
    RunStart,
    /// `start_t` is an offset from the scenario's hazard event time; falls
    /// back to run start when the scenario sampled no hazard.
    Hazard,
}

/// Which real object an FN/flicker attack suppresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackTarget {
    /// The nearest in-lane forward object.
    #[default]
    Lead,
}

/// Parameterized perception-error injection. One variant per error class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum AttackSpec {
    None,
    FalseNegative {
        start_t: f64,
        duration: f64,
        #[serde(default)]
        target: AttackTarget,
        #[serde(default)]
        anchor: AttackAnchor,
    },
    FalsePositive {
        start_t: f64,
        duration: f64,
        /// Initial perceived gap of the phantom, m.
        phantom_gap: f64,
        /// Closing speed of the phantom (positive approaches), m/s.
        phantom_rel_speed: f64,
        #[serde(default = "default_phantom_length")]
        phantom_length: f64,
        #[serde(default)]
        anchor: AttackAnchor,
    },
    DistanceBias {
        /// Multiplier on perceived gap (applied at ranges beyond
        /// [`BIAS_REFERENCE_FLOOR`]; closer in, the same displacement is
        /// held as a fixed offset).
        factor: f64,
    },
    Flicker {
        start_t: f64,
        duration: f64,
        pattern: FlickerPattern,
        #[serde(default)]
        anchor: AttackAnchor,
    },
}

fn default_phantom_length() -> f64 {
    PHANTOM_LENGTH
}

impl AttackSpec {
    pub fn is_none(&self) -> bool {
        matches!(self, AttackSpec::None)
    }

    /// Resolves hazard-anchored windows to absolute time. Identity for
    /// run-start anchors and window-free variants.
    pub fn resolve(&self, hazard_time: Option<f64>) -> AttackSpec {
        let shift = |anchor: &AttackAnchor, start: f64| match (anchor, hazard_time) {
            (AttackAnchor::Hazard, Some(th)) => (th + start).max(0.0),
            _ => start,
        };
        match *self {
            AttackSpec::FalseNegative {
                start_t,
                duration,
                target,
                anchor,
            } => AttackSpec::FalseNegative {
                start_t: shift(&anchor, start_t),
                duration,
                target,
                anchor: AttackAnchor::RunStart,
            },
            AttackSpec::FalsePositive {
                start_t,
                duration,
                phantom_gap,
                phantom_rel_speed,
                phantom_length,
                anchor,
            } => AttackSpec::FalsePositive {
                start_t: shift(&anchor, start_t),
                duration,
                phantom_gap,
                phantom_rel_speed,
                phantom_length,
                anchor: AttackAnchor::RunStart,
            },
            AttackSpec::Flicker {
                start_t,
                duration,
                pattern,
                anchor,
            } => AttackSpec::Flicker {
                start_t: shift(&anchor, start_t),
                duration,
                pattern,
                anchor: AttackAnchor::RunStart,
            },
            other => other,
        }
    }
}

/// Curvature amplification applied to a distance-bias deviation.
/// Returns 1.0 for every family except `CurvedRoad`, where curvature
/// amplifies `|factor - 1|` by the configured multiplier.
pub fn curvature_bias_multiplier(family: ScenarioFamily, curved_amplification: f64) -> f64 {
    match family {
        ScenarioFamily::CurvedRoad => curved_amplification.max(1.0),
        _ => 1.0,
    }
}

/// Effective bias factor after curvature amplification: `1 + kappa*(f-1)`.
pub fn effective_bias_factor(factor: f64, kappa: f64) -> f64 {
    1.0 + kappa * (factor - 1.0)
}

/// Projects ground truth into detections. Each forward object with gap in
/// `(0, range_max]` yields one detection with probability
/// `1 - base_drop_prob`; gap, lane offset and length pass through with
/// Gaussian noise. Behind-ego and out-of-range objects yield nothing.
///
/// Draws are a pure function of `(sensor_seed, frame)` and object order.
pub fn sense(world: &WorldState, cfg: &SensorConfig, sensor_seed: u64, frame: u32) -> Vec<Sensed> {
    let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(sensor_seed, frame));
    let gap_noise = Normal::new(0.0, cfg.range_noise_sigma).expect("sigma >= 0");
    // Lateral and size channels are coarser than range on automotive lidar;
    // half the range sigma is representative.
    let side_noise = Normal::new(0.0, cfg.range_noise_sigma * 0.5).expect("sigma >= 0");

    let mut out = Vec::with_capacity(world.objects.len());
    for obj in &world.objects {
        let g = gap(&world.ego, obj);
        if g <= 0.0 || g > cfg.range_max {
            continue;
        }
        if rng.random::<f64>() < cfg.base_drop_prob {
            continue;
        }
        out.push(Sensed {
            det: Detection {
                perceived_gap: g + gap_noise.sample(&mut rng),
                perceived_lane_offset: obj.lane_offset + side_noise.sample(&mut rng),
                bbox_length: (obj.length + side_noise.sample(&mut rng)).max(0.5),
                confidence: DETECTION_CONFIDENCE,
                frame_index: frame,
            },
            source: Some(obj.id),
        });
    }
    out
}

fn window_active(t: f64, start: f64, duration: f64) -> bool {
    t >= start && t < start + duration
}

/// Applies the configured attack effect to one frame of detections.
///
/// * `FalseNegative` removes the lead object's detections inside the window.
/// * `FalsePositive` appends one synthetic in-lane detection whose gap
///   starts at `phantom_gap` and closes at `phantom_rel_speed`.
/// * `DistanceBias` displaces every perceived gap: proportional to range far
///   out (`gap * factor`), a constant offset inside the reference floor.
/// * `Flicker` removes the lead detection on alternating frames or with
///   probability `p` inside the window.
///
/// Deterministic given `(spec, attack_seed, frame)`.
#[allow(clippy::too_many_arguments)]
pub fn apply_attack(
    mut sensed: Vec<Sensed>,
    world: &WorldState,
    spec: &AttackSpec,
    kappa: f64,
    t: f64,
    frame: u32,
    attack_seed: u64,
    lane_overlap_threshold: f64,
) -> Vec<Sensed> {
    match *spec {
        AttackSpec::None => sensed,
        AttackSpec::FalseNegative {
            start_t,
            duration,
            target: AttackTarget::Lead,
            ..
        } => {
            if window_active(t, start_t, duration) {
                if let Some(lead) = nearest_in_lane(world, lane_overlap_threshold) {
                    sensed.retain(|s| s.source != Some(lead.id));
                }
            }
            sensed
        }
        AttackSpec::FalsePositive {
            start_t,
            duration,
            phantom_gap,
            phantom_rel_speed,
            phantom_length,
            ..
        } => {
            if window_active(t, start_t, duration) {
                let g = phantom_gap - phantom_rel_speed * (t - start_t);
                sensed.push(Sensed {
                    det: Detection {
                        perceived_gap: g.max(0.1),
                        perceived_lane_offset: 0.0,
                        bbox_length: phantom_length,
                        confidence: DETECTION_CONFIDENCE,
                        frame_index: frame,
                    },
                    source: None,
                });
            }
            sensed
        }
        AttackSpec::DistanceBias { factor } => {
            let f = effective_bias_factor(factor, kappa);
            for s in &mut sensed {
                let g = s.det.perceived_gap;
                let mut displacement = (f - 1.0) * g.max(BIAS_REFERENCE_FLOOR);
                if f > 1.0 && g < BIAS_NEAR_FIELD {
                    let x = (g / BIAS_NEAR_FIELD).clamp(0.0, 1.0);
                    displacement *= x * x * (3.0 - 2.0 * x);
                }
                s.det.perceived_gap = (g + displacement).max(0.1);
            }
            sensed
        }
        AttackSpec::Flicker {
            start_t,
            duration,
            pattern,
            ..
        } => {
            if window_active(t, start_t, duration) {
                let remove = match pattern {
                    FlickerPattern::Alternate => frame.is_multiple_of(2),
                    FlickerPattern::DropProb { p } => {
                        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(attack_seed, frame));
                        rng.random::<f64>() < p
                    }
                };
                if remove {
                    if let Some(lead) = nearest_in_lane(world, lane_overlap_threshold) {
                        sensed.retain(|s| s.source != Some(lead.id));
                    }
                }
            }
            sensed
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{EgoState, ObjectKind, TrafficObject};
    use approx::assert_relative_eq;

    fn world_with(objects: Vec<TrafficObject>) -> WorldState {
        WorldState {
            t: 0.0,
            ego: EgoState::new(0.0, 30.0),
            objects,
        }
    }

    fn vehicle(id: u32, s_rear: f64, lane_offset: f64) -> TrafficObject {
        TrafficObject {
            id,
            s_rear,
            v: 28.0,
            a: 0.0,
            lane_offset,
            length: 4.5,
            kind: ObjectKind::Vehicle,
        }
    }

    fn noiseless() -> SensorConfig {
        SensorConfig {
            range_noise_sigma: 0.0,
            base_drop_prob: 0.0,
            ..SensorConfig::default()
        }
    }

    #[test]
    fn noiseless_sense_is_lossless_passthrough() {
        let world = world_with(vec![vehicle(1, 50.0, 0.0)]);
        let dets = sense(&world, &noiseless(), 1, 0);
        assert_eq!(dets.len(), 1);
        assert_relative_eq!(dets[0].det.perceived_gap, 50.0, epsilon = 1e-12);
        assert_eq!(dets[0].source, Some(1));
    }

    #[test]
    fn range_gate_and_behind_ego() {
        let world = world_with(vec![
            vehicle(1, 200.0, 0.0),
            vehicle(2, -10.0, 0.0),
            vehicle(3, 80.0, 0.0),
        ]);
        let dets = sense(&world, &noiseless(), 1, 0);
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].source, Some(3));
    }

    #[test]
    fn sense_is_deterministic_per_seed_and_frame() {
        let world = world_with(vec![vehicle(1, 50.0, 0.0), vehicle(2, 90.0, 3.5)]);
        let cfg = SensorConfig::default();
        let a = sense(&world, &cfg, 7, 12);
        let b = sense(&world, &cfg, 7, 12);
        assert_eq!(a, b);
    }

    #[test]
    fn false_negative_removes_lead_inside_window() {
        let world = world_with(vec![vehicle(1, 40.0, 0.0), vehicle(2, 90.0, 0.0)]);
        let spec = AttackSpec::FalseNegative {
            start_t: 5.0,
            duration: 0.5,
            target: AttackTarget::Lead,
            anchor: AttackAnchor::RunStart,
        };
        let dets = sense(&world, &noiseless(), 1, 52);
        let out = apply_attack(dets.clone(), &world, &spec, 1.0, 5.2, 52, 1, 1.5);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].source, Some(2));
        // outside the window: untouched
        let out = apply_attack(dets, &world, &spec, 1.0, 5.6, 56, 1, 1.5);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn fn_and_flicker_only_delete() {
        let world = world_with(vec![vehicle(1, 40.0, 0.0), vehicle(2, 90.0, 0.0)]);
        let dets = sense(&world, &SensorConfig::default(), 3, 8);
        for spec in [
            AttackSpec::FalseNegative {
                start_t: 0.0,
                duration: 10.0,
                target: AttackTarget::Lead,
                anchor: AttackAnchor::RunStart,
            },
            AttackSpec::Flicker {
                start_t: 0.0,
                duration: 10.0,
                pattern: FlickerPattern::Alternate,
                anchor: AttackAnchor::RunStart,
            },
        ] {
            let out = apply_attack(dets.clone(), &world, &spec, 1.0, 0.8, 8, 3, 1.5);
            // every surviving detection appears unchanged in the input
            for s in &out {
                assert!(dets.contains(s));
            }
            assert!(out.len() <= dets.len());
        }
    }

    #[test]
    fn false_positive_appends_exactly_one() {
        let world = world_with(vec![vehicle(1, 60.0, 0.0)]);
        let spec = AttackSpec::FalsePositive {
            start_t: 2.0,
            duration: 0.2,
            phantom_gap: 25.0,
            phantom_rel_speed: 10.0,
            phantom_length: 4.5,
            anchor: AttackAnchor::RunStart,
        };
        let dets = sense(&world, &noiseless(), 1, 21);
        // at 10 Hz a 0.2 s window covers exactly frames t=2.0 and t=2.1
        for (t, frame, expect) in [(1.9, 19, 1), (2.0, 20, 2), (2.1, 21, 2), (2.2, 22, 1)] {
            let out = apply_attack(dets.clone(), &world, &spec, 1.0, t, frame, 1, 1.5);
            assert_eq!(out.len(), expect, "t={t}");
        }
        // phantom gap evolves with its relative speed
        let out = apply_attack(dets, &world, &spec, 1.0, 2.1, 21, 1, 1.5);
        let phantom = out.iter().find(|s| s.source.is_none()).unwrap();
        assert_relative_eq!(phantom.det.perceived_gap, 24.0, epsilon = 1e-12);
    }

    #[test]
    fn distance_bias_scales_far_gaps_exactly() {
        let world = world_with(vec![vehicle(1, 50.0, 0.0)]);
        let dets = sense(&world, &noiseless(), 1, 0);
        let out = apply_attack(
            dets,
            &world,
            &AttackSpec::DistanceBias { factor: 1.2 },
            1.0,
            0.0,
            0,
            1,
            1.5,
        );
        assert_relative_eq!(out[0].det.perceived_gap, 60.0, epsilon = 1e-12);
    }

    #[test]
    fn distance_bias_holds_displacement_near_field() {
        // inside the reference floor the displacement is (f-1)*floor, constant
        let bias = |gap: f64, factor: f64| {
            let world = world_with(vec![vehicle(1, gap, 0.0)]);
            let dets = sense(&world, &noiseless(), 1, 0);
            let out = apply_attack(
                dets,
                &world,
                &AttackSpec::DistanceBias { factor },
                1.0,
                0.0,
                0,
                1,
                1.5,
            );
            out[0].det.perceived_gap
        };
        assert_relative_eq!(
            bias(20.0, 1.2),
            20.0 + 0.2 * BIAS_REFERENCE_FLOOR,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            bias(20.0, 0.8),
            20.0 - 0.2 * BIAS_REFERENCE_FLOOR,
            epsilon = 1e-12
        );
        // overestimation fades out at contact range; underestimation does not
        assert!(bias(3.0, 1.2) < 3.0 + 0.2 * BIAS_REFERENCE_FLOOR * 0.2);
        assert_relative_eq!(
            bias(8.0, 0.8),
            (8.0 - 0.2 * BIAS_REFERENCE_FLOOR).max(0.1),
            epsilon = 1e-9
        );
    }

    #[test]
    fn curvature_multiplier_examples() {
        assert_eq!(
            curvature_bias_multiplier(ScenarioFamily::HighwayFollowing, 1.5),
            1.0
        );
        let kappa = curvature_bias_multiplier(ScenarioFamily::CurvedRoad, 1.5);
        assert_relative_eq!(effective_bias_factor(1.2, kappa), 1.3, epsilon = 1e-12);
        assert_relative_eq!(effective_bias_factor(1.0, kappa), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn none_is_identity() {
        let world = world_with(vec![vehicle(1, 50.0, 0.0)]);
        let dets = sense(&world, &SensorConfig::default(), 5, 3);
        let out = apply_attack(dets.clone(), &world, &AttackSpec::None, 1.0, 0.3, 3, 5, 1.5);
        assert_eq!(out, dets);
    }

    #[test]
    fn flicker_alternate_removes_even_frames() {
        let world = world_with(vec![vehicle(1, 40.0, 0.0)]);
        let spec = AttackSpec::Flicker {
            start_t: 0.0,
            duration: 100.0,
            pattern: FlickerPattern::Alternate,
            anchor: AttackAnchor::RunStart,
        };
        let dets = sense(&world, &noiseless(), 1, 0);
        let even = apply_attack(dets.clone(), &world, &spec, 1.0, 0.0, 0, 1, 1.5);
        let odd = apply_attack(dets, &world, &spec, 1.0, 0.1, 1, 1, 1.5);
        assert!(even.is_empty());
        assert_eq!(odd.len(), 1);
    }

    #[test]
    fn hazard_anchor_resolution() {
        let spec = AttackSpec::FalseNegative {
            start_t: 2.0,
            duration: 0.7,
            target: AttackTarget::Lead,
            anchor: AttackAnchor::Hazard,
        };
        match spec.resolve(Some(9.0)) {
            AttackSpec::FalseNegative {
                start_t, anchor, ..
            } => {
                assert_relative_eq!(start_t, 11.0);
                assert_eq!(anchor, AttackAnchor::RunStart);
            }
            _ => unreachable!(),
        }
        // no hazard sampled: falls back to absolute
        match spec.resolve(None) {
            AttackSpec::FalseNegative { start_t, .. } => assert_relative_eq!(start_t, 2.0),
            _ => unreachable!(),
        }
    }
}

//! Frame-to-frame association of anonymous detections into persistent
//! tracks with estimated closing speed.
//!
//! The tracker is deliberately lightweight: greedy nearest-neighbor gating
//! on predicted gap, an alpha-beta filter per track, and a one-frame coast
//! before deletion. Its reset behavior is the load-bearing part: a track
//! that misses more than `drop_after_missed` consecutive frames is deleted,
//! and the object is treated as brand new on reappearance (fresh id, age 1,
//! zero closing-speed estimate). `age_frames` counts *consecutive* detected
//! frames, so intermittent detection keeps it pinned low.

use serde::{Deserialize, Serialize};

use crate::perception::Detection;

/// A persistent perceived object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Track {
    /// Never reused within a run.
    pub track_id: u64,
    /// Estimated gap, m.
    pub gap_est: f64,
    /// Estimated closing speed (positive approaches), m/s.
    pub v_rel_est: f64,
    /// Estimated lateral offset, m.
    pub lane_offset_est: f64,
    /// Estimated body length, m.
    pub length_est: f64,
    /// Consecutive detected frames ending at the latest detection; >= 1 for
    /// any live track. A coasted frame resets the streak.
    pub age_frames: u32,
    /// Consecutive frames without a matching detection.
    pub missed_frames: u32,
    /// Confidence carried over from the latest matched detection.
    pub confidence: f64,
    /// Exponentially decayed count of recent misses; low values mean the
    /// detection stream has been solid.
    pub miss_score: f64,
    /// True while coasting on a track whose recent stream was solid; such
    /// tracks remain usable by the controllers for the coast. Intermittent
    /// tracks drop out of controller view while coasting.
    pub coast_trusted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Association gate on |predicted gap - perceived gap|, m.
    pub gate_radius: f64,
    /// A track survives this many consecutive missed frames; one more
    /// deletes it.
    pub drop_after_missed: u32,
    /// Position smoothing gain, (0, 1].
    pub alpha: f64,
    /// Velocity gain, (0, 1].
    pub beta: f64,
    /// Lane-offset compatibility gate for association, m.
    pub lane_gate: f64,
    /// |lane_offset_est| below this counts as in-lane for primary selection.
    pub in_lane_threshold: f64,
    /// A coasting track keeps serving as a controller input only while its
    /// decayed miss score stays below this; alternating detection pushes
    /// the score well above it, isolated dropouts do not.
    pub coast_trust_max_miss_score: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            gate_radius: 5.0,
            drop_after_missed: 1,
            alpha: 0.85,
            beta: 0.4,
            lane_gate: 1.0,
            in_lane_threshold: 1.5,
            coast_trust_max_miss_score: 2.5,
        }
    }
}

/// Result of matching one frame of detections against the live tracks.
/// Decay applied to [`Track::miss_score`] each frame.
pub const MISS_SCORE_DECAY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// (track index, detection index) pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Greedy nearest-neighbor association on predicted gap.
///
/// A pair is admissible iff the gap residual is inside `gate_radius`, the
/// lane offsets agree within `lane_gate`, and the box lengths are within
/// 50% of each other. Pairs are taken smallest-distance first; ties break
/// toward the lower track id.
pub fn associate(tracks: &[Track], dets: &[Detection], cfg: &TrackerConfig, dt: f64) -> Assignment {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, track) in tracks.iter().enumerate() {
        let predicted = track.gap_est - track.v_rel_est * dt;
        for (di, det) in dets.iter().enumerate() {
            let dist = (det.perceived_gap - predicted).abs();
            if dist >= cfg.gate_radius {
                continue;
            }
            if (det.perceived_lane_offset - track.lane_offset_est).abs() >= cfg.lane_gate {
                continue;
            }
            let (lo, hi) = if det.bbox_length < track.length_est {
                (det.bbox_length, track.length_est)
            } else {
                (track.length_est, det.bbox_length)
            };
            if lo < 0.5 * hi {
                continue;
            }
            candidates.push((dist, ti, di));
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| tracks[a.1].track_id.cmp(&tracks[b.1].track_id))
            .then_with(|| a.2.cmp(&b.2))
    });

    let mut track_taken = vec![false; tracks.len()];
    let mut det_taken = vec![false; dets.len()];
    let mut pairs = Vec::new();
    for (_, ti, di) in candidates {
        if !track_taken[ti] && !det_taken[di] {
            track_taken[ti] = true;
            det_taken[di] = true;
            pairs.push((ti, di));
        }
    }
    Assignment {
        pairs,
        unmatched_tracks: (0..tracks.len()).filter(|&i| !track_taken[i]).collect(),
        unmatched_detections: (0..dets.len()).filter(|&i| !det_taken[i]).collect(),
    }
}

/// Owns the live track set for one run.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    primary_id: Option<u64>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            primary_id: None,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn find(&self, track_id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.track_id == track_id)
    }

    /// Associates one frame of detections and updates the track set.
    ///
    /// Matched tracks take an alpha-beta update and their detection streak
    /// grows; unmatched tracks coast one frame on their own prediction and
    /// are deleted once `missed_frames` exceeds the drop horizon; unmatched
    /// detections seed fresh tracks with a zero closing-speed estimate.
    pub fn step(&mut self, dets: &[Detection], dt: f64) {
        assert!(dt > 0.0);
        let assignment = associate(&self.tracks, dets, &self.cfg, dt);

        let mut next: Vec<Track> = Vec::with_capacity(self.tracks.len() + dets.len());
        for &(ti, di) in &assignment.pairs {
            let track = self.tracks[ti];
            let det = dets[di];
            let predicted = track.gap_est - track.v_rel_est * dt;
            let residual = det.perceived_gap - predicted;
            next.push(Track {
                track_id: track.track_id,
                gap_est: predicted + self.cfg.alpha * residual,
                v_rel_est: track.v_rel_est - self.cfg.beta * residual / dt,
                lane_offset_est: track.lane_offset_est
                    + self.cfg.alpha * (det.perceived_lane_offset - track.lane_offset_est),
                length_est: track.length_est
                    + self.cfg.alpha * (det.bbox_length - track.length_est),
                age_frames: track.age_frames + 1,
                missed_frames: 0,
                confidence: det.confidence,
                miss_score: track.miss_score * MISS_SCORE_DECAY,
                coast_trusted: false,
            });
        }
        for &ti in &assignment.unmatched_tracks {
            let track = self.tracks[ti];
            if track.missed_frames + 1 > self.cfg.drop_after_missed {
                continue; // deleted; a later re-detection gets a fresh id
            }
            next.push(Track {
                gap_est: track.gap_est - track.v_rel_est * dt,
                missed_frames: track.missed_frames + 1,
                coast_trusted: track.miss_score < self.cfg.coast_trust_max_miss_score,
                miss_score: track.miss_score * MISS_SCORE_DECAY + 1.0,
                age_frames: 1, // streak broken
                ..track
            });
        }
        for &di in &assignment.unmatched_detections {
            let det = dets[di];
            next.push(Track {
                track_id: self.next_id,
                gap_est: det.perceived_gap,
                v_rel_est: 0.0,
                lane_offset_est: det.perceived_lane_offset,
                length_est: det.bbox_length,
                age_frames: 1,
                missed_frames: 0,
                confidence: det.confidence,
                miss_score: 0.0,
                coast_trusted: false,
            });
            self.next_id += 1;
        }
        next.sort_by_key(|t| t.track_id);
        self.tracks = next;
        self.primary_id = self.select_primary().map(|t| t.track_id);
    }

    /// The track the controllers act on: nearest in-lane track that was
    /// detected this frame, or is coasting with an established history.
    /// The incumbent gets 10% of lateral hysteresis so estimate noise at
    /// the lane boundary cannot chatter the selection.
    pub fn primary_object(&self) -> Option<&Track> {
        self.primary_id
            .and_then(|id| self.tracks.iter().find(|t| t.track_id == id))
    }

    fn select_primary(&self) -> Option<&Track> {
        let strict = primary_object(&self.tracks, &self.cfg);
        if let Some(incumbent_id) = self.primary_id {
            if let Some(incumbent) = self.tracks.iter().find(|t| {
                t.track_id == incumbent_id
                    && (t.missed_frames == 0 || t.coast_trusted)
                    && t.lane_offset_est.abs() < self.cfg.in_lane_threshold * 1.1
            }) {
                return match strict {
                    Some(s) if s.gap_est < incumbent.gap_est => Some(s),
                    _ => Some(incumbent),
                };
            }
        }
        strict
    }
}

/// See [`Tracker::primary_object`].
pub fn primary_object<'a>(tracks: &'a [Track], cfg: &TrackerConfig) -> Option<&'a Track> {
    tracks
        .iter()
        .filter(|t| t.lane_offset_est.abs() < cfg.in_lane_threshold)
        .filter(|t| t.missed_frames == 0 || t.coast_trusted)
        .min_by(|a, b| {
            a.gap_est
                .partial_cmp(&b.gap_est)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn det(gap: f64, offset: f64) -> Detection {
        Detection {
            perceived_gap: gap,
            perceived_lane_offset: offset,
            bbox_length: 4.5,
            confidence: 0.9,
            frame_index: 0,
        }
    }

    fn track(id: u64, gap: f64, v_rel: f64) -> Track {
        Track {
            track_id: id,
            gap_est: gap,
            v_rel_est: v_rel,
            lane_offset_est: 0.0,
            length_est: 4.5,
            age_frames: 1,
            missed_frames: 0,
            confidence: 0.9,
            miss_score: 0.0,
            coast_trusted: false,
        }
    }

    #[test]
    fn association_inside_gate_matches() {
        let tracks = [track(1, 30.0, 0.0)];
        let dets = [det(30.5, 0.0)];
        let a = associate(&tracks, &dets, &TrackerConfig::default(), 0.1);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert!(a.unmatched_tracks.is_empty());
        assert!(a.unmatched_detections.is_empty());
    }

    #[test]
    fn association_outside_gate_spawns() {
        let tracks = [track(1, 30.0, 0.0)];
        let dets = [det(40.0, 0.0)];
        let a = associate(&tracks, &dets, &TrackerConfig::default(), 0.1);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_tracks, vec![0]);
        assert_eq!(a.unmatched_detections, vec![0]);
    }

    #[test]
    fn tie_breaks_to_lower_track_id() {
        // two tracks exactly equidistant from one detection
        let tracks = [track(7, 31.0, 0.0), track(3, 29.0, 0.0)];
        let dets = [det(30.0, 0.0)];
        let a = associate(&tracks, &dets, &TrackerConfig::default(), 0.0001);
        assert_eq!(a.pairs.len(), 1);
        let (ti, _) = a.pairs[0];
        assert_eq!(tracks[ti].track_id, 3);
    }

    #[test]
    fn drop_and_reset_creates_new_id() {
        let mut tracker = Tracker::new(TrackerConfig::default());
        let dt = 0.1;
        tracker.step(&[det(40.0, 0.0)], dt);
        let first_id = tracker.tracks()[0].track_id;
        // miss drop_after_missed + 1 = 2 frames -> deleted
        tracker.step(&[], dt);
        assert_eq!(tracker.tracks().len(), 1);
        tracker.step(&[], dt);
        assert!(tracker.tracks().is_empty());
        // re-detection: fresh id, age 1, zero closing-speed estimate
        tracker.step(&[det(39.0, 0.0)], dt);
        let t = tracker.tracks()[0];
        assert_ne!(t.track_id, first_id);
        assert_eq!(t.age_frames, 1);
        assert_eq!(t.v_rel_est, 0.0);
    }

    #[test]
    fn stationary_stream_converges_to_zero_closing_speed() {
        let mut tracker = Tracker::new(TrackerConfig::default());
        for _ in 0..30 {
            tracker.step(&[det(25.0, 0.0)], 0.1);
        }
        let t = tracker.tracks()[0];
        assert!(t.v_rel_est.abs() < 1e-6);
        assert_relative_eq!(t.gap_est, 25.0, epsilon = 1e-6);
    }

    #[test]
    fn closing_stream_converges_to_true_rate() {
        // detections closing at exactly 5 m/s, noiseless; the alpha-beta
        // recursion below is the independent oracle for the same gains
        let cfg = TrackerConfig::default();
        let dt = 0.1;
        let mut tracker = Tracker::new(cfg);
        let mut oracle_gap = 50.0f64;
        let mut oracle_v = 0.0f64;
        let mut truth = 50.0f64;
        tracker.step(&[det(truth, 0.0)], dt);
        for k in 1..=12 {
            truth -= 5.0 * dt;
            tracker.step(&[det(truth, 0.0)], dt);
            let predicted = oracle_gap - oracle_v * dt;
            let r = truth - predicted;
            oracle_gap = predicted + cfg.alpha * r;
            oracle_v -= cfg.beta * r / dt;
            let t = tracker.tracks()[0];
            assert_relative_eq!(t.gap_est, oracle_gap, epsilon = 1e-9);
            assert_relative_eq!(t.v_rel_est, oracle_v, epsilon = 1e-9);
            if k >= 10 {
                assert!(
                    (t.v_rel_est - 5.0).abs() < 0.01,
                    "frame {k}: {}",
                    t.v_rel_est
                );
            }
        }
    }

    #[test]
    fn benign_single_lead_keeps_identity() {
        let mut tracker = Tracker::new(TrackerConfig::default());
        let mut g = 60.0;
        tracker.step(&[det(g, 0.0)], 0.1);
        let id = tracker.tracks()[0].track_id;
        let mut last_age = tracker.tracks()[0].age_frames;
        for _ in 0..100 {
            g -= 0.2;
            tracker.step(&[det(g, 0.0)], 0.1);
            assert_eq!(tracker.tracks().len(), 1);
            let t = tracker.tracks()[0];
            assert_eq!(t.track_id, id);
            assert_eq!(t.age_frames, last_age + 1);
            last_age = t.age_frames;
        }
    }

    #[test]
    fn alternate_flicker_caps_age_at_two() {
        // drop_after_missed = 1 keeps the track alive through alternating
        // misses, but the detection streak never exceeds 2
        let mut tracker = Tracker::new(TrackerConfig::default());
        let mut g = 40.0;
        for frame in 0..60 {
            if frame % 2 == 0 {
                tracker.step(&[det(g, 0.0)], 0.1);
            } else {
                tracker.step(&[], 0.1);
            }
            g -= 0.3;
            assert_eq!(tracker.tracks().len(), 1);
            assert!(tracker.tracks()[0].age_frames <= 2);
        }
    }

    #[test]
    fn trusted_coast_still_serves_primary() {
        let cfg = TrackerConfig::default();
        let mut tracker = Tracker::new(cfg);
        for _ in 0..10 {
            tracker.step(&[det(30.0, 0.0)], 0.1);
        }
        tracker.step(&[], 0.1); // solid stream: the coast is trusted
        let t = tracker.primary_object().expect("trusted coast");
        assert_eq!(t.missed_frames, 1);
        assert!(t.coast_trusted);

        // an intermittent stream is not trusted while coasting
        let mut tracker = Tracker::new(cfg);
        let mut gap = 30.0;
        let mut blinked = false;
        for frame in 0..20 {
            if frame % 2 == 0 {
                tracker.step(&[det(gap, 0.0)], 0.1);
            } else {
                tracker.step(&[], 0.1);
                blinked |= tracker.primary_object().is_none();
            }
            gap -= 0.05;
        }
        assert!(
            blinked,
            "alternating misses should eventually drop controller view"
        );
    }

    #[test]
    fn primary_picks_nearest_in_lane() {
        let cfg = TrackerConfig::default();
        let mut tracks = vec![
            track(1, 50.0, 0.0),
            track(2, 30.0, 0.0),
            track(3, 12.0, 0.0),
        ];
        assert_eq!(primary_object(&tracks, &cfg).unwrap().track_id, 3);
        // only adjacent-lane tracks -> none
        for t in &mut tracks {
            t.lane_offset_est = 3.5;
        }
        assert!(primary_object(&tracks, &cfg).is_none());
        assert!(primary_object(&[], &cfg).is_none());
    }

    #[test]
    fn track_count_bounded_by_detections_plus_coasting() {
        let mut tracker = Tracker::new(TrackerConfig::default());
        for frame in 0..40u32 {
            let dets: Vec<Detection> = (0..(frame % 4))
                .map(|i| det(20.0 + 15.0 * i as f64, 0.0))
                .collect();
            let coasting_before = tracker
                .tracks()
                .iter()
                .filter(|t| t.missed_frames > 0)
                .count();
            let live_before = tracker.tracks().len();
            tracker.step(&dets, 0.1);
            assert!(tracker.tracks().len() <= dets.len() + live_before.max(coasting_before));
        }
    }
}

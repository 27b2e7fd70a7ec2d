//! Per-frame camera detections debounced into behavioral episodes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::ingest::{Camera, LightState, VisionEvent, VisionKind};
use crate::time_sync::ScalarSample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpisodeError {
    #[error("no eye-state records")]
    EmptyStream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EpisodeKind {
    EyesClosedEpisode,
    YawnEpisode,
    DistractionEpisode,
    PhoneUseEpisode,
    SmokingEpisode,
    LaneCrossingEvent,
    NearCollisionEvent,
    StopSignEncounter,
    TrafficLightEncounter,
    PedestrianEncounter,
}

/// A maximal run of one observed light state inside an encounter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightPhase {
    pub state: LightState,
    pub t_first: f64,
    pub t_last: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeAttrs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_yaw_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_distance_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub light_state_sequence: Vec<LightPhase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossing: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicEvent {
    pub kind: EpisodeKind,
    pub t_start: f64,
    pub t_end: f64,
    /// Raw detections contributing to the episode.
    pub n_raw: usize,
    #[serde(default)]
    pub attrs: EpisodeAttrs,
}

impl EpisodicEvent {
    fn new(kind: EpisodeKind, t_start: f64, t_end: f64, n_raw: usize) -> Self {
        Self {
            kind,
            t_start,
            t_end,
            n_raw,
            attrs: EpisodeAttrs::default(),
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeParams {
    pub perclos_window_s: f64,
    pub eyes_closed_min_duration_s: f64,
    pub distraction_yaw_thresh_deg: f64,
    pub distraction_min_duration_s: f64,
    pub mounting_calibration_s: f64,
    pub yawn_min_duration_s: f64,
    pub lane_crossing_merge_s: f64,
    pub near_collision_distance_m: f64,
    pub near_collision_merge_s: f64,
    pub encounter_gap_s: f64,
    pub frame_gap_s: f64,
}

impl From<&Config> for EpisodeParams {
    fn from(c: &Config) -> Self {
        Self {
            perclos_window_s: c.perclos_window_s,
            eyes_closed_min_duration_s: c.eyes_closed_min_duration_s,
            distraction_yaw_thresh_deg: c.distraction_yaw_thresh_deg,
            distraction_min_duration_s: c.distraction_min_duration_s,
            mounting_calibration_s: c.mounting_calibration_s,
            yawn_min_duration_s: c.yawn_min_duration_s,
            lane_crossing_merge_s: c.lane_crossing_merge_s,
            near_collision_distance_m: c.near_collision_distance_m,
            near_collision_merge_s: c.near_collision_merge_s,
            encounter_gap_s: c.encounter_gap_s,
            frame_gap_s: c.frame_gap_s,
        }
    }
}

impl Default for EpisodeParams {
    fn default() -> Self {
        Self::from(&Config::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Run {
    t_start: f64,
    t_end: f64,
    n: usize,
}

/// Runs of `active` frames in a sampled binary channel. A run ends at the
/// first inactive frame that follows within `frame_gap_s`, otherwise at its
/// last active frame.
fn sampled_runs(frames: &[(f64, bool)], frame_gap_s: f64) -> Vec<Run> {
    let mut out = Vec::new();
    let mut cur: Option<Run> = None;
    let mut last_t = f64::NEG_INFINITY;
    for &(t, active) in frames {
        if let Some(r) = cur.as_mut() {
            if t - last_t > frame_gap_s {
                out.push(*r);
                cur = None;
            } else if !active {
                r.t_end = t;
                out.push(*r);
                cur = None;
            }
        }
        if active {
            match cur.as_mut() {
                Some(r) => {
                    r.t_end = t;
                    r.n += 1;
                }
                None => cur = Some(Run { t_start: t, t_end: t, n: 1 }),
            }
        }
        last_t = t;
    }
    out.extend(cur);
    out
}

/// Groups presence-only detections whose spacing is at most `max_gap_s`.
fn presence_runs(times: &[f64], max_gap_s: f64) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    for &t in times {
        match out.last_mut() {
            Some(r) if t - r.t_end <= max_gap_s => {
                r.t_end = t;
                r.n += 1;
            }
            _ => out.push(Run { t_start: t, t_end: t, n: 1 }),
        }
    }
    out
}

pub fn eye_states(events: &[VisionEvent]) -> Vec<(f64, bool)> {
    events
        .iter()
        .filter_map(|e| match e.kind {
            VisionKind::EyeState { closed } => Some((e.t, closed)),
            _ => None,
        })
        .collect()
}

pub fn head_yaws(events: &[VisionEvent]) -> Vec<(f64, f64)> {
    events
        .iter()
        .filter_map(|e| match e.kind {
            VisionKind::HeadPose { yaw_deg, .. } => Some((e.t, yaw_deg)),
            _ => None,
        })
        .collect()
}

/// Closed-eye intervals under sample-and-hold: each state lasts until the
/// next record; the final state lasts one typical spacing.
fn hold_intervals(eye: &[(f64, bool)]) -> Vec<(f64, f64, bool)> {
    let n = eye.len();
    let mut gaps: Vec<f64> = eye.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let last_hold = if gaps.is_empty() {
        0.0
    } else {
        crate::motion::median(&mut gaps)
    };
    (0..n)
        .map(|i| {
            let end = if i + 1 < n { eye[i + 1].0 } else { eye[i].0 + last_hold };
            (eye[i].0, end, eye[i].1)
        })
        .collect()
}

/// Fraction of time with eyes closed over the trailing window. One output
/// per record, stamped at the end of that record's hold interval; the value
/// at `t` covers `(t − window_s, t]` clipped to the recorded span.
pub fn perclos(eye: &[(f64, bool)], window_s: f64) -> Result<Vec<ScalarSample>, EpisodeError> {
    assert!(window_s > 0.0, "window must be positive");
    if eye.is_empty() {
        return Err(EpisodeError::EmptyStream);
    }
    let iv = hold_intervals(eye);
    // cum[i] = closed time before the start of interval i.
    let mut cum = Vec::with_capacity(iv.len() + 1);
    cum.push(0.0);
    for &(a, b, c) in &iv {
        cum.push(cum[cum.len() - 1] + if c { b - a } else { 0.0 });
    }
    let closed_before = |x: f64| -> f64 {
        let i = iv.partition_point(|s| s.0 <= x);
        if i == 0 {
            return 0.0;
        }
        let (a, b, c) = iv[i - 1];
        cum[i - 1] + if c { x.min(b) - a } else { 0.0 }
    };
    let t0 = iv[0].0;
    Ok(iv
        .iter()
        .map(|&(_, b, c)| {
            let lo = (b - window_s).max(t0);
            let span = b - lo;
            let value = if span > 0.0 {
                ((closed_before(b) - closed_before(lo)) / span).clamp(0.0, 1.0)
            } else if c {
                1.0
            } else {
                0.0
            };
            ScalarSample { t: b, value }
        })
        .collect())
}

/// Closed-eye fraction over `[t0, t1]` under sample-and-hold.
fn closed_fraction(eye: &[(f64, bool)], t0: f64, t1: f64) -> f64 {
    if t1 <= t0 || eye.is_empty() {
        return 0.0;
    }
    let closed: f64 = hold_intervals(eye)
        .iter()
        .filter(|iv| iv.2)
        .map(|&(a, b, _)| (b.min(t1) - a.max(t0)).max(0.0))
        .sum();
    closed / (t1 - t0)
}

pub fn detect_eye_closures(eye: &[(f64, bool)], min_duration_s: f64, frame_gap_s: f64) -> Vec<EpisodicEvent> {
    sampled_runs(eye, frame_gap_s)
        .into_iter()
        .filter(|r| r.t_end - r.t_start >= min_duration_s - 1e-9)
        .map(|r| EpisodicEvent::new(EpisodeKind::EyesClosedEpisode, r.t_start, r.t_end, r.n))
        .collect()
}

/// Mouth-open detections sustained for `min_duration_s` with the eyes
/// closed for at least half of the opening.
pub fn detect_yawning(eye: &[(f64, bool)], mouth_open: &[f64], min_duration_s: f64, frame_gap_s: f64) -> Vec<EpisodicEvent> {
    presence_runs(mouth_open, frame_gap_s)
        .into_iter()
        .filter(|r| r.t_end - r.t_start >= min_duration_s - 1e-9)
        .filter(|r| closed_fraction(eye, r.t_start, r.t_end) >= 0.5)
        .map(|r| EpisodicEvent::new(EpisodeKind::YawnEpisode, r.t_start, r.t_end, r.n))
        .collect()
}

fn wrap_deg(a: f64) -> f64 {
    let r = (a + 180.0).rem_euclid(360.0) - 180.0;
    if r == -180.0 {
        180.0
    } else {
        r
    }
}

/// Camera mounting yaw: circular median of head yaw over the first
/// `calibration_s` seconds.
pub fn calibrate_mounting_yaw(head: &[(f64, f64)], calibration_s: f64) -> f64 {
    let Some(&(t0, _)) = head.first() else {
        return 0.0;
    };
    let window: Vec<f64> = head
        .iter()
        .take_while(|h| h.0 - t0 <= calibration_s)
        .map(|h| h.1)
        .collect();
    let (s, c) = window.iter().fold((0.0, 0.0), |(s, c), a| {
        (s + a.to_radians().sin(), c + a.to_radians().cos())
    });
    let mean = s.atan2(c).to_degrees();
    let mut dev: Vec<f64> = window.iter().map(|a| wrap_deg(a - mean)).collect();
    wrap_deg(mean + crate::motion::median(&mut dev))
}

pub fn detect_distraction(
    head: &[(f64, f64)],
    mounting_yaw_deg: f64,
    yaw_thresh_deg: f64,
    min_duration_s: f64,
    frame_gap_s: f64,
) -> Vec<EpisodicEvent> {
    let frames: Vec<(f64, bool)> = head
        .iter()
        .map(|&(t, y)| (t, wrap_deg(y - mounting_yaw_deg).abs() > yaw_thresh_deg))
        .collect();
    sampled_runs(&frames, frame_gap_s)
        .into_iter()
        .filter(|r| r.t_end - r.t_start >= min_duration_s - 1e-9)
        .map(|r| {
            let max = head
                .iter()
                .filter(|h| h.0 >= r.t_start && h.0 <= r.t_end)
                .map(|h| wrap_deg(h.1 - mounting_yaw_deg).abs())
                .fold(0.0, f64::max);
            let mut ep = EpisodicEvent::new(EpisodeKind::DistractionEpisode, r.t_start, r.t_end, r.n);
            ep.attrs.max_yaw_deg = Some(max);
            ep
        })
        .collect()
}

fn times_of(events: &[VisionEvent], pred: impl Fn(&VisionKind) -> bool) -> Vec<f64> {
    events.iter().filter(|e| pred(&e.kind)).map(|e| e.t).collect()
}

/// Front-camera debouncing: lane crossings, near collisions and per-encounter
/// grouping of stop signs, traffic lights and pedestrians.
pub fn episodic_counts(events: &[VisionEvent], p: &EpisodeParams) -> Vec<EpisodicEvent> {
    let front: Vec<&VisionEvent> = events.iter().filter(|e| e.camera == Camera::Front).collect();
    let mut out = Vec::new();

    let lane = times_of(events, |k| matches!(k, VisionKind::LaneCrossing));
    for r in presence_runs(&lane, p.lane_crossing_merge_s - 1e-9) {
        out.push(EpisodicEvent::new(EpisodeKind::LaneCrossingEvent, r.t_start, r.t_end, r.n));
    }

    let close: Vec<(f64, f64)> = front
        .iter()
        .filter_map(|e| match e.kind {
            VisionKind::NearCollision { distance_m } if distance_m < p.near_collision_distance_m => Some((e.t, distance_m)),
            _ => None,
        })
        .collect();
    let close_t: Vec<f64> = close.iter().map(|c| c.0).collect();
    for r in presence_runs(&close_t, p.near_collision_merge_s) {
        let min = close
            .iter()
            .filter(|c| c.0 >= r.t_start && c.0 <= r.t_end)
            .map(|c| c.1)
            .fold(f64::INFINITY, f64::min);
        let mut ep = EpisodicEvent::new(EpisodeKind::NearCollisionEvent, r.t_start, r.t_end, r.n);
        ep.attrs.min_distance_m = Some(min);
        out.push(ep);
    }

    let stops = times_of(events, |k| matches!(k, VisionKind::StopSign));
    for r in presence_runs(&stops, p.encounter_gap_s) {
        out.push(EpisodicEvent::new(EpisodeKind::StopSignEncounter, r.t_start, r.t_end, r.n));
    }

    let lights: Vec<(f64, LightState)> = front
        .iter()
        .filter_map(|e| match e.kind {
            VisionKind::TrafficLight { state } => Some((e.t, state)),
            _ => None,
        })
        .collect();
    let light_t: Vec<f64> = lights.iter().map(|l| l.0).collect();
    for r in presence_runs(&light_t, p.encounter_gap_s) {
        let mut seq: Vec<LightPhase> = Vec::new();
        for &(t, state) in lights.iter().filter(|l| l.0 >= r.t_start && l.0 <= r.t_end) {
            match seq.last_mut() {
                Some(ph) if ph.state == state => ph.t_last = t,
                _ => seq.push(LightPhase { state, t_first: t, t_last: t }),
            }
        }
        let mut ep = EpisodicEvent::new(EpisodeKind::TrafficLightEncounter, r.t_start, r.t_end, r.n);
        ep.attrs.light_state_sequence = seq;
        out.push(ep);
    }

    let peds: Vec<(f64, bool)> = front
        .iter()
        .filter_map(|e| match e.kind {
            VisionKind::Pedestrian { crossing } => Some((e.t, crossing)),
            _ => None,
        })
        .collect();
    let ped_t: Vec<f64> = peds.iter().map(|x| x.0).collect();
    for r in presence_runs(&ped_t, p.encounter_gap_s) {
        let mut ep = EpisodicEvent::new(EpisodeKind::PedestrianEncounter, r.t_start, r.t_end, r.n);
        ep.attrs.crossing = Some(peds.iter().any(|x| x.0 >= r.t_start && x.0 <= r.t_end && x.1));
        out.push(ep);
    }
    out
}

/// Times the lead vehicle's brake lights switch on.
pub fn taillight_onsets(events: &[VisionEvent]) -> Vec<f64> {
    let mut prev = false;
    let mut out = Vec::new();
    for e in events {
        if let VisionKind::FrontTaillight { on } = e.kind {
            if on && !prev {
                out.push(e.t);
            }
            prev = on;
        }
    }
    out
}

/// Every episode kind from one synchronized vision stream, sorted by start.
pub fn detect_episodes(events: &[VisionEvent], p: &EpisodeParams) -> Vec<EpisodicEvent> {
    let eye = eye_states(events);
    let head = head_yaws(events);
    let mut out = detect_eye_closures(&eye, p.eyes_closed_min_duration_s, p.frame_gap_s);
    let mouth = times_of(events, |k| matches!(k, VisionKind::Yawn));
    out.extend(detect_yawning(&eye, &mouth, p.yawn_min_duration_s, p.frame_gap_s));
    let mount = calibrate_mounting_yaw(&head, p.mounting_calibration_s);
    out.extend(detect_distraction(
        &head,
        mount,
        p.distraction_yaw_thresh_deg,
        p.distraction_min_duration_s,
        p.frame_gap_s,
    ));
    for (kind, k) in [
        (EpisodeKind::PhoneUseEpisode, VisionKind::PhoneUse),
        (EpisodeKind::SmokingEpisode, VisionKind::Smoking),
    ] {
        let times = times_of(events, |x| *x == k);
        for r in presence_runs(&times, p.frame_gap_s) {
            out.push(EpisodicEvent::new(kind, r.t_start, r.t_end, r.n));
        }
    }
    out.extend(episodic_counts(events, p));
    out.sort_by(|a, b| a.t_start.total_cmp(&b.t_start).then(a.kind.cmp(&b.kind)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perclos_counts_closed_share() {
        let eye: Vec<(f64, bool)> = (0..600).map(|i| (i as f64 * 0.1, i % 20 == 0)).collect();
        let p = perclos(&eye, 60.0).unwrap();
        assert!((p.last().unwrap().value - 0.05).abs() < 1e-9);
        let open: Vec<(f64, bool)> = (0..50).map(|i| (i as f64, false)).collect();
        assert!(perclos(&open, 10.0).unwrap().iter().all(|s| s.value == 0.0));
        let shut: Vec<(f64, bool)> = (0..50).map(|i| (i as f64, true)).collect();
        assert!(perclos(&shut, 10.0).unwrap().iter().all(|s| s.value == 1.0));
        assert_eq!(perclos(&[], 10.0), Err(EpisodeError::EmptyStream));
    }

    fn head(yaws: impl Fn(f64) -> f64, secs: f64) -> Vec<(f64, f64)> {
        (0..(secs * 10.0) as usize)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, yaws(t))
            })
            .collect()
    }

    #[test]
    fn distraction_contract() {
        assert!(detect_distraction(&head(|_| 0.0, 20.0), 0.0, 30.0, 2.0, 0.5).is_empty());
        let h = head(|t| if (5.0..8.0).contains(&t) { 40.0 } else { 0.0 }, 20.0);
        let eps = detect_distraction(&h, 0.0, 30.0, 2.0, 0.5);
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].attrs.max_yaw_deg, Some(40.0));
        assert!((eps[0].t_start - 5.0).abs() < 0.11 && (eps[0].t_end - 8.0).abs() < 0.11);
        assert!(detect_distraction(&h, 0.0, f64::INFINITY, 2.0, 0.5).is_empty());
    }

    #[test]
    fn mounting_yaw_is_circular() {
        let h = head(|t| if (t * 10.0) as i64 % 2 == 0 { 179.0 } else { -179.0 }, 30.0);
        let m = calibrate_mounting_yaw(&h, 60.0);
        assert!((m.abs() - 179.0).abs() <= 1.0 + 1e-9, "{m}");
        let h = head(|t| if (20.0..25.0).contains(&t) { 80.0 } else { 12.0 }, 60.0);
        assert!((calibrate_mounting_yaw(&h, 60.0) - 12.0).abs() < 1e-9);
    }

    #[test]
    fn yawn_rules() {
        let eye_closed: Vec<(f64, bool)> = (0..100).map(|i| (i as f64 * 0.1, true)).collect();
        let eye_open: Vec<(f64, bool)> = (0..100).map(|i| (i as f64 * 0.1, false)).collect();
        let mouth = |a: f64, b: f64| -> Vec<f64> {
            (0..100).map(|i| i as f64 * 0.1).filter(|t| *t >= a && *t <= b + 1e-9).collect()
        };
        assert_eq!(detect_yawning(&eye_closed, &mouth(2.0, 4.0), 1.5, 0.5).len(), 1);
        assert!(detect_yawning(&eye_closed, &mouth(2.0, 2.5), 1.5, 0.5).is_empty());
        assert!(detect_yawning(&eye_open, &mouth(2.0, 5.0), 1.5, 0.5).is_empty());
    }

    #[test]
    fn front_camera_debounce() {
        let p = EpisodeParams::default();
        let mut ev: Vec<VisionEvent> = [10.0, 10.3, 10.6]
            .iter()
            .map(|&t| VisionEvent::new(t, VisionKind::LaneCrossing))
            .collect();
        for i in 0..40 {
            let t = 20.0 + i as f64 * 0.1;
            let d = 12.0 - 7.0 * (1.0 - ((t - 22.0) / 2.0).powi(2));
            ev.push(VisionEvent::new(t, VisionKind::NearCollision { distance_m: d }));
        }
        for burst in [40.0, 70.0] {
            for i in 0..5 {
                ev.push(VisionEvent::new(burst + i as f64 * 0.5, VisionKind::StopSign));
            }
        }
        let eps = episodic_counts(&ev, &p);
        let count = |k| eps.iter().filter(|e| e.kind == k).count();
        assert_eq!(count(EpisodeKind::LaneCrossingEvent), 1);
        assert_eq!(count(EpisodeKind::NearCollisionEvent), 1);
        assert_eq!(count(EpisodeKind::StopSignEncounter), 2);
        let nc = eps.iter().find(|e| e.kind == EpisodeKind::NearCollisionEvent).unwrap();
        assert!((nc.attrs.min_distance_m.unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn light_sequence_and_taillights() {
        let mut ev = Vec::new();
        for i in 0..30 {
            let t = i as f64 * 0.1;
            let state = if t < 1.5 { LightState::Green } else { LightState::Red };
            ev.push(VisionEvent::new(t, VisionKind::TrafficLight { state }));
        }
        let eps = episodic_counts(&ev, &EpisodeParams::default());
        let seq = &eps[0].attrs.light_state_sequence;
        assert_eq!(seq.iter().map(|p| p.state).collect::<Vec<_>>(), vec![LightState::Green, LightState::Red]);
        let tl = [false, false, true, true, false, true]
            .iter()
            .enumerate()
            .map(|(i, &on)| VisionEvent::new(i as f64, VisionKind::FrontTaillight { on }))
            .collect::<Vec<_>>();
        assert_eq!(taillight_onsets(&tl), vec![2.0, 5.0]);
    }
}

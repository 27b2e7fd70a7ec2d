//! Detected events and the fusion rules that produce the cross-stream ones.

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::episodes::{EpisodeKind, EpisodicEvent};
use crate::geo::{detour_ratio, distances_to, MatchedPath, RoadNetwork};
use crate::ingest::{GeoPos, GnssFix, LightState};
use crate::motion::{MotionEvent, MotionKind, VehicleAccel};
use crate::time_sync::{interpolate, ScalarSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stimulus {
    LightGreenToRed,
    LightRedToGreen,
    FrontTaillight,
    Pothole,
}

impl Stimulus {
    pub const ALL: [Stimulus; 4] = [
        Stimulus::LightGreenToRed,
        Stimulus::LightRedToGreen,
        Stimulus::FrontTaillight,
        Stimulus::Pothole,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::LightGreenToRed => "light_green_to_red",
            Self::LightRedToGreen => "light_red_to_green",
            Self::FrontTaillight => "front_taillight",
            Self::Pothole => "pothole",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DetectedKind {
    HarshAccel,
    HarshBrake { gaze_offroad: bool },
    HarshCorner,
    Pothole,
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
    RedLightRun,
    StopSignViolation,
    ReactionSample { stimulus: Stimulus, latency_s: f64 },
    MissedStimulus { stimulus: Stimulus },
    GettingLost { detour_ratio: f64 },
    LaneDeviation { max_abs_lateral_m: f64 },
}

impl DetectedKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::HarshAccel => "harsh_accel",
            Self::HarshBrake { .. } => "harsh_brake",
            Self::HarshCorner => "harsh_corner",
            Self::Pothole => "pothole",
            Self::EyesClosedEpisode => "eyes_closed_episode",
            Self::YawnEpisode => "yawn_episode",
            Self::DistractionEpisode => "distraction_episode",
            Self::PhoneUseEpisode => "phone_use_episode",
            Self::SmokingEpisode => "smoking_episode",
            Self::LaneCrossingEvent => "lane_crossing_event",
            Self::NearCollisionEvent => "near_collision_event",
            Self::StopSignEncounter => "stop_sign_encounter",
            Self::TrafficLightEncounter => "traffic_light_encounter",
            Self::PedestrianEncounter => "pedestrian_encounter",
            Self::RedLightRun => "red_light_run",
            Self::StopSignViolation => "stop_sign_violation",
            Self::ReactionSample { .. } => "reaction_sample",
            Self::MissedStimulus { .. } => "missed_stimulus",
            Self::GettingLost { .. } => "getting_lost",
            Self::LaneDeviation { .. } => "lane_deviation",
        }
    }
}

impl From<MotionKind> for DetectedKind {
    fn from(k: MotionKind) -> Self {
        match k {
            MotionKind::HarshAccel => Self::HarshAccel,
            MotionKind::HarshBrake => Self::HarshBrake { gaze_offroad: false },
            MotionKind::HarshCorner => Self::HarshCorner,
            MotionKind::Pothole => Self::Pothole,
        }
    }
}

impl From<EpisodeKind> for DetectedKind {
    fn from(k: EpisodeKind) -> Self {
        match k {
            EpisodeKind::EyesClosedEpisode => Self::EyesClosedEpisode,
            EpisodeKind::YawnEpisode => Self::YawnEpisode,
            EpisodeKind::DistractionEpisode => Self::DistractionEpisode,
            EpisodeKind::PhoneUseEpisode => Self::PhoneUseEpisode,
            EpisodeKind::SmokingEpisode => Self::SmokingEpisode,
            EpisodeKind::LaneCrossingEvent => Self::LaneCrossingEvent,
            EpisodeKind::NearCollisionEvent => Self::NearCollisionEvent,
            EpisodeKind::StopSignEncounter => Self::StopSignEncounter,
            EpisodeKind::TrafficLightEncounter => Self::TrafficLightEncounter,
            EpisodeKind::PedestrianEncounter => Self::PedestrianEncounter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedEvent {
    pub kind: DetectedKind,
    pub t_sync: f64,
    pub duration_s: f64,
    pub location: Option<GeoPos>,
    /// 1 (mild) to 3 (severe).
    pub severity: u8,
}

/// Position of the positioned fix nearest `t`, if one lies within 1 s.
pub fn locate(fixes: &[GnssFix], t: f64) -> Option<GeoPos> {
    let i = fixes.partition_point(|f| f.t < t);
    let lo = i.saturating_sub(3);
    let hi = (i + 3).min(fixes.len());
    fixes[lo..hi]
        .iter()
        .filter(|f| f.position.is_some() && (f.t - t).abs() <= 1.0)
        .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
        .and_then(|f| f.position)
        .or_else(|| {
            // Sparse fixes: fall back to a full scan.
            fixes
                .iter()
                .filter(|f| f.position.is_some() && (f.t - t).abs() <= 1.0)
                .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
                .and_then(|f| f.position)
        })
}

fn grade(x: f64, mild: f64, severe: f64) -> u8 {
    if x >= severe {
        3
    } else if x >= mild {
        2
    } else {
        1
    }
}

pub fn motion_severity(e: &MotionEvent, config: &Config) -> u8 {
    let th = match e.kind {
        MotionKind::HarshAccel => config.harsh_accel_threshold,
        MotionKind::HarshBrake => config.harsh_brake_threshold,
        MotionKind::HarshCorner => config.harsh_corner_threshold,
        MotionKind::Pothole => 5.0,
    };
    grade(e.peak.abs() / th.abs(), 1.33, 1.67)
}

pub fn episode_severity(e: &EpisodicEvent) -> u8 {
    match e.kind {
        EpisodeKind::NearCollisionEvent => {
            let d = e.attrs.min_distance_m.unwrap_or(f64::INFINITY);
            grade(-d, -5.0, -3.0)
        }
        EpisodeKind::LaneCrossingEvent
        | EpisodeKind::StopSignEncounter
        | EpisodeKind::TrafficLightEncounter
        | EpisodeKind::PedestrianEncounter => 1,
        _ => grade(e.duration_s(), 3.0, 6.0),
    }
}

pub fn from_motion(e: &MotionEvent, fixes: &[GnssFix], config: &Config) -> DetectedEvent {
    DetectedEvent {
        kind: e.kind.into(),
        t_sync: e.t_start,
        duration_s: e.duration_s,
        location: locate(fixes, e.t_start),
        severity: motion_severity(e, config),
    }
}

pub fn from_episode(e: &EpisodicEvent, fixes: &[GnssFix]) -> DetectedEvent {
    DetectedEvent {
        kind: e.kind.into(),
        t_sync: e.t_start,
        duration_s: e.duration_s(),
        location: locate(fixes, e.t_start),
        severity: episode_severity(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusEvent {
    pub stimulus: Stimulus,
    pub t: f64,
}

/// Light changes inside encounters, lead-vehicle brake-light onsets and
/// pothole strikes, sorted by time. A light change is timed halfway between
/// the last frame of the old state and the first of the new one.
pub fn stimuli(encounters: &[EpisodicEvent], taillight_onsets: &[f64], potholes: &[MotionEvent]) -> Vec<StimulusEvent> {
    let mut out = Vec::new();
    for e in encounters.iter().filter(|e| e.kind == EpisodeKind::TrafficLightEncounter) {
        for w in e.attrs.light_state_sequence.windows(2) {
            let stimulus = match (w[0].state, w[1].state) {
                (LightState::Green, LightState::Red) | (LightState::Yellow, LightState::Red) => Stimulus::LightGreenToRed,
                (LightState::Red, LightState::Green) => Stimulus::LightRedToGreen,
                _ => continue,
            };
            out.push(StimulusEvent {
                stimulus,
                t: 0.5 * (w[0].t_last + w[1].t_first),
            });
        }
    }
    out.extend(taillight_onsets.iter().map(|&t| StimulusEvent {
        stimulus: Stimulus::FrontTaillight,
        t,
    }));
    out.extend(potholes.iter().filter(|p| p.kind == MotionKind::Pothole).map(|p| StimulusEvent {
        stimulus: Stimulus::Pothole,
        t: p.t_start,
    }));
    out.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.stimulus.cmp(&b.stimulus)));
    out
}

/// Driver response channels on the synchronized timeline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Responses {
    /// Longitudinal deceleration crossing the brake-onset level.
    pub brake_onsets: Vec<f64>,
    pub pedal_releases: Vec<f64>,
    pub pedal_presses: Vec<f64>,
}

/// Downward crossings of `level` by `a_long`, linearly interpolated.
pub fn brake_onsets(accel: &[VehicleAccel], level: f64) -> Vec<f64> {
    accel
        .windows(2)
        .filter(|w| w[0].a_long > level && w[1].a_long <= level)
        .map(|w| {
            let f = (w[0].a_long - level) / (w[0].a_long - w[1].a_long);
            w[0].t + f * (w[1].t - w[0].t)
        })
        .collect()
}

const PEDAL_OFF_PCT: f64 = 1.0;
const PEDAL_ON_PCT: f64 = 5.0;

/// Pedal release and press edges, each timed at the midpoint of the two
/// samples that straddle it.
pub fn pedal_edges(pedal_pct: &[ScalarSample]) -> (Vec<f64>, Vec<f64>) {
    let mut releases = Vec::new();
    let mut presses = Vec::new();
    for w in pedal_pct.windows(2) {
        let mid = 0.5 * (w[0].t + w[1].t);
        if w[0].value > PEDAL_ON_PCT && w[1].value <= PEDAL_OFF_PCT {
            releases.push(mid);
        } else if w[0].value <= PEDAL_OFF_PCT && w[1].value > PEDAL_ON_PCT {
            presses.push(mid);
        }
    }
    (releases, presses)
}

impl Responses {
    pub fn from_streams(accel: &[VehicleAccel], pedal_pct: &[ScalarSample], brake_level: f64) -> Self {
        let (pedal_releases, pedal_presses) = pedal_edges(pedal_pct);
        Self {
            brake_onsets: brake_onsets(accel, brake_level),
            pedal_releases,
            pedal_presses,
        }
    }
}

fn first_after(times: &[f64], t: f64, window: f64) -> Option<f64> {
    let i = times.partition_point(|&x| x <= t);
    times.get(i).copied().filter(|&x| x - t <= window)
}

/// One reaction sample or missed-stimulus marker per stimulus. A green
/// light calls for pressing the pedal; every other stimulus calls for
/// braking or releasing it.
pub fn reaction_time(stimuli: &[StimulusEvent], responses: &Responses, max_window_s: f64, fixes: &[GnssFix]) -> Vec<DetectedEvent> {
    stimuli
        .iter()
        .map(|s| {
            let response = match s.stimulus {
                Stimulus::LightRedToGreen => first_after(&responses.pedal_presses, s.t, max_window_s),
                _ => {
                    let a = first_after(&responses.brake_onsets, s.t, max_window_s);
                    let b = first_after(&responses.pedal_releases, s.t, max_window_s);
                    match (a, b) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        (x, y) => x.or(y),
                    }
                }
            };
            match response {
                Some(r) => DetectedEvent {
                    kind: DetectedKind::ReactionSample {
                        stimulus: s.stimulus,
                        latency_s: r - s.t,
                    },
                    t_sync: s.t,
                    duration_s: r - s.t,
                    location: locate(fixes, s.t),
                    severity: grade(r - s.t, 1.0, 2.0),
                },
                None => DetectedEvent {
                    kind: DetectedKind::MissedStimulus { stimulus: s.stimulus },
                    t_sync: s.t,
                    duration_s: 0.0,
                    location: locate(fixes, s.t),
                    severity: 3,
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalParams {
    pub red_advance_m: f64,
    pub red_hold_s: f64,
    pub stop_min_kph: f64,
    pub stop_window_s: f64,
}

impl From<&Config> for SignalParams {
    fn from(c: &Config) -> Self {
        Self {
            red_advance_m: c.red_light_advance_m,
            red_hold_s: c.red_light_hold_s,
            stop_min_kph: c.stop_sign_min_kph,
            stop_window_s: c.stop_sign_window_s,
        }
    }
}

impl Default for SignalParams {
    fn default() -> Self {
        Self::from(&Config::default())
    }
}

/// Distance covered between `t0` and `t1` by trapezoidal integration of a
/// km/h speed series.
pub fn advance_m(speed_kph: &[ScalarSample], t0: f64, t1: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = vec![(t0, interpolate(speed_kph, t0).unwrap_or(0.0))];
    pts.extend(speed_kph.iter().filter(|s| s.t > t0 && s.t < t1).map(|s| (s.t, s.value)));
    pts.push((t1, interpolate(speed_kph, t1).unwrap_or(0.0)));
    pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) / 3.6 * (w[1].0 - w[0].0)).sum()
}

/// Red-light runs and stop-sign violations.
///
/// An encounter whose last observed phase is red counts as a run when the
/// vehicle advances more than `red_advance_m` within `red_hold_s` either
/// side of the last red frame; the light leaves view as the vehicle passes
/// it. A stop-sign encounter is a violation when speed never falls below
/// `stop_min_kph` from its first sighting until `stop_window_s` after its
/// last.
pub fn signal_compliance(
    encounters: &[EpisodicEvent],
    speed_kph: &[ScalarSample],
    fixes: &[GnssFix],
    p: &SignalParams,
) -> Vec<DetectedEvent> {
    let mut out = Vec::new();
    for e in encounters {
        match e.kind {
            EpisodeKind::TrafficLightEncounter => {
                let Some(last) = e.attrs.light_state_sequence.last() else { continue };
                if last.state != LightState::Red {
                    continue;
                }
                let t = last.t_last;
                let adv = advance_m(speed_kph, t - p.red_hold_s, t + p.red_hold_s);
                if adv > p.red_advance_m {
                    out.push(DetectedEvent {
                        kind: DetectedKind::RedLightRun,
                        t_sync: t,
                        duration_s: 0.0,
                        location: locate(fixes, t),
                        severity: 3,
                    });
                }
            }
            EpisodeKind::StopSignEncounter => {
                let t1 = e.t_end + p.stop_window_s;
                let min = speed_kph
                    .iter()
                    .filter(|s| s.t >= e.t_start && s.t <= t1)
                    .map(|s| s.value)
                    .fold(f64::INFINITY, f64::min);
                if min.is_finite() && min >= p.stop_min_kph {
                    out.push(DetectedEvent {
                        kind: DetectedKind::StopSignViolation,
                        t_sync: e.t_end,
                        duration_s: t1 - e.t_start,
                        location: locate(fixes, e.t_end),
                        severity: grade(min, 10.0, 20.0),
                    });
                }
            }
            _ => {}
        }
    }
    out
}

/// Marks each harsh brake preceded within `lookback_s` by a distraction or
/// eyes-closed episode.
pub fn braking_pattern(events: &mut [DetectedEvent], lookback_s: f64) {
    let offroad: Vec<(f64, f64)> = events
        .iter()
        .filter(|e| matches!(e.kind, DetectedKind::DistractionEpisode | DetectedKind::EyesClosedEpisode))
        .map(|e| (e.t_sync, e.t_sync + e.duration_s))
        .collect();
    for e in events.iter_mut() {
        if let DetectedKind::HarshBrake { gaze_offroad } = &mut e.kind {
            let (lo, hi) = (e.t_sync - lookback_s, e.t_sync);
            *gaze_offroad = offroad.iter().any(|&(a, b)| a <= hi && b >= lo);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LostParams {
    pub ratio_threshold: f64,
    /// Half-width of the search window around the GNSS node-passage time.
    pub turn_search_s: f64,
    pub turn_level_mps2: f64,
}

impl From<&Config> for LostParams {
    fn from(c: &Config) -> Self {
        Self {
            ratio_threshold: c.detour_ratio_threshold,
            turn_search_s: 5.0,
            turn_level_mps2: 1.0,
        }
    }
}

impl Default for LostParams {
    fn default() -> Self {
        Self::from(&Config::default())
    }
}

/// Centroid of the `|a_lat|` excursion above `level` nearest `t_hint`.
pub fn turn_centroid(accel: &[VehicleAccel], t_hint: f64, half_window_s: f64, level: f64) -> Option<f64> {
    let lo = accel.partition_point(|a| a.t < t_hint - half_window_s);
    let hi = accel.partition_point(|a| a.t <= t_hint + half_window_s);
    let win = &accel[lo..hi];
    if win.is_empty() {
        return None;
    }
    let t: Vec<f64> = win.iter().map(|a| a.t).collect();
    let lat: Vec<f64> = win.iter().map(|a| a.a_lat).collect();
    let smooth: Vec<f64> = crate::motion::lowpass_zero_phase(&t, &lat, 2.0).iter().map(|x| x.abs()).collect();
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < smooth.len() {
        if smooth[i] <= level {
            i += 1;
            continue;
        }
        let start = i;
        while i < smooth.len() && smooth[i] > level {
            i += 1;
        }
        let (mut w, mut wt) = (0.0, 0.0);
        for j in start..i {
            w += smooth[j];
            wt += smooth[j] * t[j];
        }
        let c = wt / w;
        if best.is_none_or(|(_, d)| (c - t_hint).abs() < d) {
            best = Some((c, (c - t_hint).abs()));
        }
    }
    best.map(|b| b.0)
}

/// A trip whose matched route is much longer than the shortest one. The
/// event is placed where the driven route first stops closing the distance
/// to the destination, timed by the turn there.
pub fn getting_lost(
    matched: &MatchedPath,
    network: &RoadNetwork,
    fixes: &[GnssFix],
    accel: &[VehicleAccel],
    p: &LostParams,
) -> Option<DetectedEvent> {
    let detour = detour_ratio(matched, network).ok()?;
    if detour.ratio <= p.ratio_threshold {
        return None;
    }
    let to_end = distances_to(network, detour.end);
    let lo = matched.edges.iter().position(|e| Some(e) == detour.edges.first())?;
    let k = detour.edges.iter().position(|&e| {
        let edge = network.edge(e);
        to_end[edge.from.0 as usize] - to_end[edge.to.0 as usize] < edge.length_m - 0.5
    })?;
    let seq = lo + k;
    let node = network.node(network.edge(matched.edges[seq]).from).pos();
    // GNSS estimate: the fix nearest the node among those matched around it.
    let t_gnss = matched
        .assignments
        .iter()
        .filter(|a| a.seq_idx + 1 == seq || a.seq_idx == seq)
        .filter_map(|a| fixes.get(a.fix_index).and_then(|f| f.position).map(|pos| (a.t, crate::geo::haversine(pos, node))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|x| x.0)?;
    let t = turn_centroid(accel, t_gnss, p.turn_search_s, p.turn_level_mps2).unwrap_or(t_gnss);
    Some(DetectedEvent {
        kind: DetectedKind::GettingLost {
            detour_ratio: detour.ratio,
        },
        t_sync: t,
        duration_s: 0.0,
        location: Some(node),
        severity: grade(detour.ratio, 2.0, 3.0),
    })
}

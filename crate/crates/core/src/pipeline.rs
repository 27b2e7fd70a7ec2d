//! All processing stages for one trip's streams, in memory.
//!
//! Each stage is a plain function so that the CLI can run and persist them
//! one at a time while tests run the whole chain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::episodes::{detect_episodes, taillight_onsets, EpisodeKind, EpisodeParams};
use crate::fusion::events::{
    braking_pattern, from_episode, from_motion, getting_lost, locate, reaction_time, signal_compliance, stimuli,
    LostParams, Responses, SignalParams,
};
use crate::fusion::{segment_trips, travel_pattern, DetectedEvent, DetectedKind, NightWindow, Trip, TripParams, WeatherRecord};
use crate::geo::{lane_deviation, match_trajectory, GeoError, MatchParams, MatchedPath, RoadNetwork, SpatialIndex};
use crate::ingest::{
    parse_gnss_log_line, parse_imu_record, parse_lines, parse_obd_line, parse_vision_event, split_stream, validate_stream,
    GnssFix, HeaderError, ImuSample, LineError, NmeaSentence, ObdReading, ObdValue, ParseError, ValidationReport,
    VisionEvent,
};
use crate::motion::{detect_harsh_events, detect_potholes, gravity_align, HarshThresholds, MotionError, MountingHints, VehicleAccel};
use crate::time_sync::{apply_sync, estimate_clock_model, ClockAnchor, ClockModel, ScalarSample, SyncError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{file}: {source}")]
    Header {
        file: &'static str,
        #[source]
        source: HeaderError,
    },
    #[error("{file}: {source}")]
    Parse {
        file: &'static str,
        #[source]
        source: LineError,
    },
    #[error("{file}: expected stream `{expected}`, header says `{found}`")]
    WrongStream {
        file: &'static str,
        expected: &'static str,
        found: String,
    },
    #[error("{stream} clock: {source}")]
    Sync {
        stream: &'static str,
        #[source]
        source: SyncError,
    },
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Raw stream file contents of one recording.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripInputs {
    pub gnss: String,
    pub imu: String,
    pub obd: String,
    pub vision: String,
    /// GNSS time marks logged on the vision unit's clock.
    pub vision_gnss: Option<String>,
}

/// Parsed records, still on their unit clocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    /// Unix seconds of synchronized time zero (the GNSS stream epoch).
    pub epoch: i64,
    pub fixes: Vec<GnssFix>,
    pub telemetry_anchors: Vec<ClockAnchor>,
    pub vision_anchors: Vec<ClockAnchor>,
    pub imu: Vec<ImuSample>,
    pub obd: Vec<ObdReading>,
    pub vision: Vec<VisionEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub epoch: i64,
    pub n_fixes: usize,
    pub n_telemetry_anchors: usize,
    pub n_vision_anchors: usize,
    pub n_imu: usize,
    pub n_obd: usize,
    pub n_vision: usize,
    pub validation: Vec<(String, ValidationReport)>,
}

fn body<'a>(
    file: &'static str,
    expected: &'static str,
    text: &'a str,
) -> Result<(crate::ingest::StreamHeader, Vec<(usize, &'a str)>), PipelineError> {
    let (h, b) = split_stream(text).map_err(|source| PipelineError::Header { file, source })?;
    if h.stream != expected {
        return Err(PipelineError::WrongStream {
            file,
            expected,
            found: h.stream,
        });
    }
    Ok((h, b))
}

fn gnss_log(
    file: &'static str,
    text: &str,
    epoch: Option<i64>,
) -> Result<(i64, Vec<GnssFix>, Vec<ClockAnchor>), PipelineError> {
    let (h, b) = body(file, "gnss", text)?;
    let epoch = epoch.unwrap_or(h.epoch);
    let lines = parse_lines(&b, parse_gnss_log_line).map_err(|source| PipelineError::Parse { file, source })?;
    let mut fixes = Vec::new();
    let mut anchors = Vec::new();
    for (t, s) in lines {
        match s {
            NmeaSentence::Gga(g) => fixes.push(GnssFix::from_gga(t, &g)),
            NmeaSentence::Rmc(r) if r.valid => anchors.push(ClockAnchor {
                t_unit: t,
                t_gps: r.unix_time() - epoch as f64,
            }),
            NmeaSentence::Rmc(_) => {}
        }
    }
    Ok((epoch, fixes, anchors))
}

fn parse_file<T>(
    file: &'static str,
    expected: &'static str,
    text: &str,
    parse: impl Fn(&str) -> Result<T, ParseError>,
) -> Result<Vec<T>, PipelineError> {
    let (_, b) = body(file, expected, text)?;
    parse_lines(&b, parse).map_err(|source| PipelineError::Parse { file, source })
}

pub fn ingest(inputs: &TripInputs) -> Result<Ingested, PipelineError> {
    let (epoch, fixes, telemetry_anchors) = gnss_log("gnss.nmea", &inputs.gnss, None)?;
    let vision_anchors = match &inputs.vision_gnss {
        Some(text) => gnss_log("vision_gnss.nmea", text, Some(epoch))?.2,
        None => Vec::new(),
    };
    let imu = parse_file("imu.csv", "imu", &inputs.imu, parse_imu_record)?;
    let obd = parse_file("obd.csv", "obd", &inputs.obd, |l| {
        parse_obd_line(l).and_then(|f| crate::ingest::decode_obd_frame(&f))
    })?;
    let vision = parse_file("vision.jsonl", "vision", &inputs.vision, parse_vision_event)?;
    Ok(Ingested {
        epoch,
        fixes,
        telemetry_anchors,
        vision_anchors,
        imu,
        obd,
        vision,
    })
}

impl Ingested {
    pub fn summary(&self, config: &Config) -> IngestSummary {
        let gap = config.validation_gap_s;
        IngestSummary {
            epoch: self.epoch,
            n_fixes: self.fixes.len(),
            n_telemetry_anchors: self.telemetry_anchors.len(),
            n_vision_anchors: self.vision_anchors.len(),
            n_imu: self.imu.len(),
            n_obd: self.obd.len(),
            n_vision: self.vision.len(),
            validation: vec![
                ("gnss".into(), validate_stream(&self.fixes, gap)),
                ("imu".into(), validate_stream(&self.imu, gap)),
                ("obd".into(), validate_stream(&self.obd, gap)),
                ("vision".into(), vision_validation(&self.vision)),
            ],
        }
    }
}

/// Vision events are sparse and one frame may carry several detections, so
/// gaps and repeated timestamps are both expected.
fn vision_validation(events: &[VisionEvent]) -> ValidationReport {
    let mut r = validate_stream(events, f64::INFINITY);
    r.findings
        .retain(|f| !matches!(f, crate::ingest::Finding::NonMonotonic { t, prev_t, .. } if t == prev_t));
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clocks {
    pub telemetry: ClockModel,
    pub vision: ClockModel,
}

/// Clock models for both units. A vision unit without time marks is
/// assumed to share the telemetry clock.
pub fn estimate_clocks(ing: &Ingested) -> Result<Clocks, PipelineError> {
    let telemetry = estimate_clock_model(&ing.telemetry_anchors).map_err(|source| PipelineError::Sync {
        stream: "telemetry",
        source,
    })?;
    let vision = if ing.vision_anchors.is_empty() {
        telemetry
    } else {
        estimate_clock_model(&ing.vision_anchors).map_err(|source| PipelineError::Sync { stream: "vision", source })?
    };
    Ok(Clocks { telemetry, vision })
}

/// Records on the synchronized timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Synced {
    pub epoch: i64,
    pub fixes: Vec<GnssFix>,
    pub imu: Vec<ImuSample>,
    pub obd: Vec<ObdReading>,
    pub vision: Vec<VisionEvent>,
}

pub fn synchronize(ing: Ingested, clocks: &Clocks) -> Synced {
    let sort = |v: &mut Vec<VisionEvent>| v.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut vision = apply_sync(ing.vision, &clocks.vision, "vision").records;
    sort(&mut vision);
    Synced {
        epoch: ing.epoch,
        fixes: apply_sync(ing.fixes, &clocks.telemetry, "telemetry").records,
        imu: apply_sync(ing.imu, &clocks.telemetry, "telemetry").records,
        obd: apply_sync(ing.obd, &clocks.telemetry, "telemetry").records,
        vision,
    }
}

/// Continuous channels derived from the synchronized telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct Signals {
    pub accel: Vec<VehicleAccel>,
    pub speed_kph: Vec<ScalarSample>,
    pub pedal_pct: Vec<ScalarSample>,
}

fn channel(obd: &[ObdReading], pick: impl Fn(ObdValue) -> Option<f64>) -> Vec<ScalarSample> {
    obd.iter()
        .filter_map(|r| pick(r.value).map(|value| ScalarSample { t: r.t, value }))
        .collect()
}

pub fn signals(synced: &Synced, config: &Config) -> Result<Signals, PipelineError> {
    let speed_kph = channel(&synced.obd, |v| match v {
        ObdValue::SpeedKph(x) => Some(x),
        _ => None,
    });
    let pedal_pct = channel(&synced.obd, |v| match v {
        ObdValue::PedalPct(x) => Some(x),
        _ => None,
    });
    let speed_mps: Vec<ScalarSample> = speed_kph
        .iter()
        .map(|s| ScalarSample {
            t: s.t,
            value: s.value / 3.6,
        })
        .collect();
    let imu = if config.adaptive_sampling {
        crate::ingest::adaptive_downsample(
            &synced.imu,
            |w| {
                w.iter()
                    .any(|s| (s.accel_norm() - crate::motion::GRAVITY).abs() > config.sampling_interest_accel)
            },
            config.sampling_base_period_s,
            config.sampling_burst_radius_s,
        )
    } else {
        synced.imu.clone()
    };
    let hints = MountingHints {
        yaw_deg: config.mounting_yaw_deg,
    };
    let speed_ref = (!speed_mps.is_empty()).then_some(speed_mps.as_slice());
    let (accel, _) = gravity_align(&imu, hints, speed_ref, config.gravity_lowpass_hz)?;
    Ok(Signals {
        accel,
        speed_kph,
        pedal_pct,
    })
}

/// Every event that does not depend on the road network, sorted by time.
pub fn detect_events(synced: &Synced, sig: &Signals, config: &Config) -> Vec<DetectedEvent> {
    let fixes = &synced.fixes;
    let harsh = detect_harsh_events(&sig.accel, &HarshThresholds::from(config));
    let potholes = detect_potholes(&sig.accel, config.pothole_window_s, config.pothole_z_thresh, config.pothole_highpass_hz);
    let episodes = detect_episodes(&synced.vision, &EpisodeParams::from(config));

    let mut events: Vec<DetectedEvent> = harsh
        .iter()
        .chain(&potholes)
        .map(|e| from_motion(e, fixes, config))
        .collect();
    events.extend(episodes.iter().map(|e| from_episode(e, fixes)));

    let encounters: Vec<_> = episodes
        .iter()
        .filter(|e| matches!(e.kind, EpisodeKind::TrafficLightEncounter | EpisodeKind::StopSignEncounter))
        .cloned()
        .collect();
    events.extend(signal_compliance(&encounters, &sig.speed_kph, fixes, &SignalParams::from(config)));

    let st = stimuli(&encounters, &taillight_onsets(&synced.vision), &potholes);
    let responses = Responses::from_streams(&sig.accel, &sig.pedal_pct, config.reaction_brake_onset);
    events.extend(reaction_time(&st, &responses, config.reaction_max_window_s, fixes));

    braking_pattern(&mut events, config.braking_lookback_s);
    sort_events(&mut events);
    events
}

pub fn sort_events(events: &mut [DetectedEvent]) {
    events.sort_by(|a, b| a.t_sync.total_cmp(&b.t_sync).then_with(|| a.kind.name().cmp(b.kind.name())));
}

pub fn match_path(synced: &Synced, index: &SpatialIndex, config: &Config) -> Result<MatchedPath, PipelineError> {
    Ok(match_trajectory(&synced.fixes, index, &MatchParams::from(config))?)
}

/// Network-dependent events, trip segmentation and travel statistics.
#[allow(clippy::too_many_arguments)]
pub fn fuse(
    trip_id: &str,
    driver_id: &str,
    synced: &Synced,
    sig: &Signals,
    mut events: Vec<DetectedEvent>,
    matched: &MatchedPath,
    network: &RoadNetwork,
    weather: &[WeatherRecord],
    config: &Config,
) -> Vec<Trip> {
    let fixes = &synced.fixes;
    if let Some(e) = getting_lost(matched, network, fixes, &sig.accel, &LostParams::from(config)) {
        events.push(e);
    }
    for d in lane_deviation(matched, fixes, config.lane_half_width_m, config.lane_deviation_min_s).events {
        events.push(DetectedEvent {
            kind: DetectedKind::LaneDeviation {
                max_abs_lateral_m: d.max_abs_lateral_m,
            },
            t_sync: d.t_start,
            duration_s: d.t_end - d.t_start,
            location: locate(fixes, d.t_start),
            severity: if d.max_abs_lateral_m > 2.0 * config.lane_half_width_m { 3 } else { 2 },
        });
    }
    sort_events(&mut events);

    let night = NightWindow::from_config(config);
    let mut trips = segment_trips(trip_id, driver_id, synced.epoch, fixes, &sig.speed_kph, &TripParams::from(config));
    for trip in &mut trips {
        trip.events = events
            .iter()
            .filter(|e| e.t_sync >= trip.t_start && e.t_sync <= trip.t_end)
            .cloned()
            .collect();
        let used: std::collections::BTreeSet<usize> = matched
            .assignments
            .iter()
            .filter(|a| a.t >= trip.t_start && a.t <= trip.t_end)
            .map(|a| a.seq_idx)
            .collect();
        trip.matched_edges = used.into_iter().map(|i| matched.edges[i]).collect();
        trip.travel = travel_pattern(fixes, trip.t_start, trip.t_end, synced.epoch, Some(matched), network, weather, &night);
        trip.streams = ["gnss.nmea", "imu.csv", "obd.csv", "vision.jsonl"].map(String::from).to_vec();
    }
    trips
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripResult {
    pub clocks: Clocks,
    pub events: Vec<DetectedEvent>,
    pub matched: MatchedPath,
    pub trips: Vec<Trip>,
}

/// Every stage over one recording.
pub fn run_trip(
    inputs: &TripInputs,
    trip_id: &str,
    driver_id: &str,
    index: &SpatialIndex,
    weather: &[WeatherRecord],
    config: &Config,
) -> Result<TripResult, PipelineError> {
    let ing = ingest(inputs)?;
    let clocks = estimate_clocks(&ing)?;
    let synced = synchronize(ing, &clocks);
    let sig = signals(&synced, config)?;
    let events = detect_events(&synced, &sig, config);
    let matched = match_path(&synced, index, config)?;
    let trips = fuse(trip_id, driver_id, &synced, &sig, events.clone(), &matched, index.network(), weather, config);
    Ok(TripResult {
        clocks,
        events,
        matched,
        trips,
    })
}

impl From<&crate::sim::SimOutput> for TripInputs {
    fn from(s: &crate::sim::SimOutput) -> Self {
        Self {
            gnss: s.gnss.clone(),
            imu: s.imu.clone(),
            obd: s.obd.clone(),
            vision: s.vision.clone(),
            vision_gnss: Some(s.vision_gnss.clone()),
        }
    }
}

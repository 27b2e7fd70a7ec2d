//! Time-stepped vehicle simulation and rendering of the four sensor streams.

use chrono::{DateTime, Timelike};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::path::PathGeometry;
use super::truth::{EdgePassage, GroundTruth, TruthEvent, TruthKind};
use super::{rng_stream, DriveScript, InjectKind, SimError};
use crate::geo::{RoadClass, RoadNetwork};
use crate::ingest::{
    encode_gnss_log_line, encode_imu_record, encode_obd_frame, encode_vision_event, obd::encode_obd_value,
    FixQuality, GeoPos, GgaSentence, ImuSample, LightState, NmeaSentence, ObdValue, RmcSentence, StreamHeader,
    VisionEvent, VisionKind,
};
use crate::time_sync::ClockModel;

pub const DT: f64 = 0.01;
pub use crate::motion::GRAVITY;
const ACCEL_COMFORT: f64 = 1.0;
const DECEL_COMFORT: f64 = 1.2;
const SPEED_GAIN: f64 = 2.0;
const LIGHT_VISIBLE_M: f64 = 90.0;
const RED_TRIGGER_STOP_M: f64 = 70.0;
const RED_TRIGGER_RUN_M: f64 = 40.0;
const RED_STOP_SETBACK_M: f64 = 5.0;
const RED_STOP_DECEL: f64 = 2.0;
const RED_MIN_WAIT_S: f64 = 6.0;
const SIGN_VISIBLE_M: f64 = 60.0;
const SIGN_STOP_SETBACK_M: f64 = 3.0;
const SIGN_WAIT_S: f64 = 2.0;
const LEAD_GAP_M: f64 = 20.0;
const NEAR_COLLISION_M: f64 = 8.0;
const BRAKE_RAMP_S: f64 = 0.1;
const LEAD_DECEL: f64 = 1.5;
const LEAD_DECEL_S: f64 = 1.5;
const POTHOLE_PULSE_S: f64 = 0.08;
const GAZE_LOOKBACK_S: f64 = 3.0;
const MAX_SIM_S: f64 = 7200.0;

/// Raw stream files and ground truth for one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub gnss: String,
    pub imu: String,
    pub obd: String,
    pub vision: String,
    pub vision_gnss: String,
    pub truth: GroundTruth,
}

/// Runtime state of one injection.
#[derive(Debug, Clone, Default)]
struct Fired {
    t0: Option<f64>,
    /// Time the vehicle passed the event's node, for node-anchored events.
    t_cross: Option<f64>,
    t_stop: Option<f64>,
    t_green: Option<f64>,
    t_release: Option<f64>,
    t_react: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Override {
    t0: f64,
    /// Plateau acceleration.
    a: f64,
    /// Time integral equals `a·duration`.
    duration: f64,
}

impl Override {
    fn accel(&self, t: f64) -> Option<f64> {
        let u = t - self.t0;
        let total = self.duration + BRAKE_RAMP_S;
        if !(0.0..total).contains(&u) {
            return None;
        }
        let f = if u < BRAKE_RAMP_S {
            u / BRAKE_RAMP_S
        } else if u > self.duration {
            (total - u) / BRAKE_RAMP_S
        } else {
            1.0
        };
        Some(self.a * f)
    }
}

struct Limit {
    s: f64,
    v: f64,
    latched: bool,
}

/// Trace of the simulated vehicle at each step.
#[derive(Default)]
struct Trace {
    s: Vec<f64>,
    v: Vec<f64>,
    a_long: Vec<f64>,
    a_vert: Vec<f64>,
    pedal: Vec<f64>,
    lateral: Vec<f64>,
}

impl Trace {
    fn at(&self, series: &[f64], t: f64) -> f64 {
        let x = (t / DT).max(0.0);
        let i = (x.floor() as usize).min(series.len() - 1);
        let j = (i + 1).min(series.len() - 1);
        let w = (x - i as f64).clamp(0.0, 1.0);
        series[i] * (1.0 - w) + series[j] * w
    }
}

/// Where an injection fires relative to its position, given the speed on
/// approach. A light the driver will stop for turns red early enough for an
/// ordinary stop at `RED_STOP_DECEL`.
fn trigger_offset(kind: &InjectKind, v: f64) -> f64 {
    match *kind {
        InjectKind::RedLight {
            run: false, latency_s, ..
        } => -RED_TRIGGER_STOP_M.max(v * latency_s + v * v / (2.0 * RED_STOP_DECEL) + RED_STOP_SETBACK_M + 5.0),
        InjectKind::RedLight { run: true, .. } => -RED_TRIGGER_RUN_M,
        InjectKind::StopSign { .. } => -SIGN_VISIBLE_M,
        _ => 0.0,
    }
}

pub fn synthesize(script: &DriveScript, network: &RoadNetwork) -> Result<SimOutput, SimError> {
    let nodes = script.route_nodes(network)?;
    let geom = PathGeometry::new(network, &nodes, script.turn_radius_m)?;
    let s_start = script.park_offset_m;
    let s_end = geom.length - script.park_offset_m;
    if s_end <= s_start + 10.0 {
        return Err(SimError::InvalidRoute("route is too short to drive".into()));
    }
    for inj in &script.events {
        let trig = inj.at_m + trigger_offset(&inj.kind, 0.0);
        if !(inj.at_m.is_finite() && trig >= s_start && inj.at_m <= s_end) {
            return Err(SimError::ScriptEventOutsideDrive {
                at_m: inj.at_m,
                length_m: s_end,
            });
        }
    }
    let trace_and_fired = run_vehicle(script, network, &geom, s_start, s_end)?;
    render(script, network, &geom, s_start, s_end, trace_and_fired)
}

fn cruise_mps(script: &DriveScript, network: &RoadNetwork, geom: &PathGeometry, k: usize) -> f64 {
    match network.edge(geom.edges[k]).road_class {
        RoadClass::Highway => script.highway_cruise_kph / 3.6,
        _ => script.cruise_kph / 3.6,
    }
}

fn run_vehicle(
    script: &DriveScript,
    network: &RoadNetwork,
    geom: &PathGeometry,
    s_start: f64,
    s_end: f64,
) -> Result<(Trace, Vec<Fired>, f64, f64), SimError> {
    let v_turn = script.turn_speed_mps;
    let mut limits: Vec<Limit> = Vec::new();
    for &(a, _) in &geom.arcs {
        limits.push(Limit { s: a, v: v_turn, latched: false });
    }
    for k in 1..geom.edges.len() {
        let (prev, next) = (cruise_mps(script, network, geom, k - 1), cruise_mps(script, network, geom, k));
        if next < prev {
            limits.push(Limit {
                s: geom.node_s[k],
                v: next,
                latched: false,
            });
        }
    }
    limits.push(Limit {
        s: s_end,
        v: 0.0,
        latched: false,
    });

    let events = &script.events;
    let mut fired = vec![Fired::default(); events.len()];
    // Stop constraints: (event index, stop position).
    let mut stops: Vec<(usize, f64)> = Vec::new();
    let mut overrides: Vec<Override> = Vec::new();
    let mut pothole_t0: Vec<(f64, f64)> = Vec::new();
    let mut drifts: Vec<(f64, f64, f64)> = Vec::new();

    let mut tr = Trace::default();
    let (mut s, mut v) = (s_start, 0.0f64);
    let mut step = 0usize;
    let mut t_move: Option<f64> = None;
    let mut t_arrive: Option<f64> = None;
    loop {
        let t = step as f64 * DT;
        if t > MAX_SIM_S {
            return Err(SimError::InvalidScript("drive did not finish within the time limit".into()));
        }
        if let Some(ta) = t_arrive {
            if t >= ta + script.post_roll_s {
                break;
            }
        }

        // Triggers.
        for (i, inj) in events.iter().enumerate() {
            let f = &mut fired[i];
            let trig = inj.at_m + trigger_offset(&inj.kind, v);
            if f.t0.is_none() && s >= trig && t >= script.pre_roll_s {
                f.t0 = Some(t);
                match inj.kind {
                    InjectKind::HarshBrake { decel_mps2, duration_s } => overrides.push(Override {
                        t0: t,
                        a: -decel_mps2.abs(),
                        duration: duration_s,
                    }),
                    InjectKind::HarshAccel { accel_mps2, duration_s } => overrides.push(Override {
                        t0: t,
                        a: accel_mps2.abs(),
                        duration: duration_s,
                    }),
                    InjectKind::Pothole { amplitude_mps2 } => pothole_t0.push((t, amplitude_mps2)),
                    InjectKind::LaneDrift { offset_m, duration_s } => drifts.push((t, offset_m, duration_s)),
                    InjectKind::LeadBrake { latency_s: Some(l) } => {
                        let t_react = t + 2.0 + l;
                        f.t_react = Some(t_react);
                        overrides.push(Override {
                            t0: t_react,
                            a: -LEAD_DECEL,
                            duration: LEAD_DECEL_S,
                        });
                    }
                    InjectKind::RedLight { run: false, latency_s, .. } => {
                        f.t_react = Some(t + latency_s);
                    }
                    InjectKind::StopSign { comply: true } => stops.push((i, inj.at_m - SIGN_STOP_SETBACK_M)),
                    _ => {}
                }
            }
            if f.t0.is_some() && f.t_cross.is_none() && s >= inj.at_m {
                f.t_cross = Some(t);
            }
            if let (InjectKind::RedLight { run: false, .. }, Some(tr_)) = (&inj.kind, f.t_react) {
                if t >= tr_ && !stops.iter().any(|x| x.0 == i) && f.t_release.is_none() {
                    stops.push((i, inj.at_m - RED_STOP_SETBACK_M));
                }
            }
        }

        // Stop bookkeeping and releases.
        let mut released = Vec::new();
        for &(i, s_stop) in &stops {
            let f = &mut fired[i];
            if f.t_stop.is_none() && v == 0.0 && s_stop - s < 1.0 {
                f.t_stop = Some(t);
                match events[i].kind {
                    InjectKind::RedLight { green_latency_s, .. } => {
                        let t_green = (t + RED_MIN_WAIT_S).max(f.t0.unwrap_or(t) + 12.0);
                        f.t_green = Some(t_green);
                        f.t_release = Some(t_green + green_latency_s);
                    }
                    _ => f.t_release = Some(t + SIGN_WAIT_S),
                }
            }
            if f.t_release.is_some_and(|r| t >= r) {
                released.push(i);
            }
        }
        stops.retain(|x| !released.contains(&x.0));

        // Controller.
        let moving_allowed = t >= script.pre_roll_s && t_arrive.is_none();
        let mut a;
        let mut reacting = false;
        if let Some(o) = overrides.iter().find_map(|o| o.accel(t)) {
            a = o;
        } else if !moving_allowed {
            a = 0.0;
        } else {
            let k = geom.edge_index(s);
            let mut v_cap = cruise_mps(script, network, geom, k);
            if geom.arc_at(s).is_some() {
                v_cap = v_cap.min(v_turn);
            }
            a = if v < v_cap {
                ACCEL_COMFORT.min(SPEED_GAIN * (v_cap - v))
            } else {
                (-DECEL_COMFORT).max(SPEED_GAIN * (v_cap - v))
            };
            for lim in limits.iter_mut() {
                if lim.s <= s || lim.s - s > 300.0 {
                    lim.latched = lim.latched && lim.s > s;
                    continue;
                }
                if v <= lim.v {
                    lim.latched = false;
                    continue;
                }
                let d = (lim.s - s).max(1e-3);
                let a_req = (lim.v * lim.v - v * v) / (2.0 * d);
                if a_req <= -DECEL_COMFORT * 0.999 {
                    lim.latched = true;
                }
                if lim.latched {
                    a = a.min(a_req.max(-6.0));
                }
            }
            for &(_, s_stop) in &stops {
                let d = s_stop - s;
                reacting = true;
                if d < 0.3 || v == 0.0 {
                    a = a.min(0.0);
                    if v < 0.3 {
                        v = 0.0;
                        a = 0.0;
                    } else {
                        a = a.min(-(v * v) / (2.0 * d.max(0.05)));
                    }
                } else {
                    a = a.min((-(v * v) / (2.0 * d)).max(-6.0));
                }
            }
        }
        // Parked at the destination.
        if t_arrive.is_none() && t_move.is_some() && s >= s_end - 0.3 && v < 0.3 && overrides.iter().all(|o| o.accel(t).is_none()) {
            t_arrive = Some(t);
            v = 0.0;
            a = 0.0;
        }
        if t_arrive.is_some() {
            v = 0.0;
            a = 0.0;
        }
        let v_new = (v + a * DT).max(0.0);
        let a_eff = (v_new - v) / DT;
        let pedal = if a_eff > 0.05 {
            (15.0 + 20.0 * a_eff).min(60.0)
        } else if a_eff < -0.05 || v_new < 0.05 || reacting && a_eff < 0.0 {
            0.0
        } else {
            12.0
        };
        let a_vert: f64 = pothole_t0
            .iter()
            .map(|&(t0, amp)| {
                let u = t - t0;
                if (0.0..POTHOLE_PULSE_S).contains(&u) {
                    amp * (std::f64::consts::PI * u / POTHOLE_PULSE_S).sin()
                } else if (POTHOLE_PULSE_S..2.0 * POTHOLE_PULSE_S).contains(&u) {
                    -0.6 * amp * (std::f64::consts::PI * (u - POTHOLE_PULSE_S) / POTHOLE_PULSE_S).sin()
                } else {
                    0.0
                }
            })
            .sum();
        let lateral: f64 = drifts
            .iter()
            .map(|&(t0, off, dur)| {
                let u = t - t0;
                let ramp = 0.5;
                if u < 0.0 || u > dur + ramp {
                    0.0
                } else if u < ramp {
                    off * u / ramp
                } else if u > dur {
                    off * (dur + ramp - u) / ramp
                } else {
                    off
                }
            })
            .sum();
        tr.s.push(s);
        tr.v.push(v);
        tr.a_long.push(a_eff);
        tr.a_vert.push(a_vert);
        tr.pedal.push(pedal);
        tr.lateral.push(lateral);
        if t_move.is_none() && v_new > 0.0 {
            t_move = Some(t);
        }
        s = (s + 0.5 * (v + v_new) * DT).min(s_end.max(s));
        v = v_new;
        step += 1;
    }
    let t_move = t_move.unwrap_or(script.pre_roll_s);
    let t_arrive = t_arrive.unwrap_or(step as f64 * DT);
    Ok((tr, fired, t_move, t_arrive))
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

/// Device-to-vehicle rotation from yaw, pitch, roll (degrees).
fn rotation(yaw: f64, pitch: f64, roll: f64) -> [[f64; 3]; 3] {
    let (sy, cy) = yaw.to_radians().sin_cos();
    let (sp, cp) = pitch.to_radians().sin_cos();
    let (sr, cr) = roll.to_radians().sin_cos();
    [
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ]
}

/// Applies the transpose (vehicle → device).
fn to_device(r: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        r[0][0] * v[0] + r[1][0] * v[1] + r[2][0] * v[2],
        r[0][1] * v[0] + r[1][1] * v[1] + r[2][1] * v[2],
        r[0][2] * v[0] + r[1][2] * v[1] + r[2][2] * v[2],
    ]
}

fn utc_parts(epoch: i64, t: f64) -> (f64, chrono::NaiveDate) {
    let whole = t.floor();
    let frac = t - whole;
    let dt = DateTime::from_timestamp(epoch + whole as i64, 0).expect("timestamp in range");
    let tod = dt.num_seconds_from_midnight() as f64 + frac;
    (tod, dt.date_naive())
}

fn render(
    script: &DriveScript,
    network: &RoadNetwork,
    geom: &PathGeometry,
    s_start: f64,
    s_end: f64,
    (tr, fired, t_move, t_arrive): (Trace, Vec<Fired>, f64, f64),
) -> Result<SimOutput, SimError> {
    let proj = network.projection();
    let n_steps = tr.s.len();
    let t_total = (n_steps - 1) as f64 * DT;
    let noise = &script.noise;
    let tele = script.telemetry_clock;
    let vis = script.vision_clock;
    let geo_at = |s: f64, lateral: f64| -> (GeoPos, f64) {
        let p = geom.pose(s);
        let (nx, ny) = (-p.heading.sin(), p.heading.cos());
        (proj.to_geo(p.x + nx * lateral, p.y + ny * lateral), p.heading)
    };

    // IMU at every step.
    let mut imu_rng = rng_stream(script.seed, 2);
    let rot = rotation(script.device.imu_yaw_deg, script.device.imu_pitch_deg, script.device.imu_roll_deg);
    let acc_sigma = noise.imu_noise_density * (1.0 / DT / 2.0).sqrt();
    let mut imu = String::with_capacity(n_steps * 80);
    imu.push_str(&StreamHeader::new("imu", "telemetry", script.epoch, "s,m/s2,rad/s,uT").to_string());
    imu.push('\n');
    for i in 0..n_steps {
        let t = i as f64 * DT;
        let pose = geom.pose(tr.s[i]);
        let v = tr.v[i];
        let a_lat = v * v * pose.curvature;
        let yaw_rate = v * pose.curvature;
        let f_v = [tr.a_long[i], a_lat, GRAVITY + tr.a_vert[i]];
        let fd = to_device(&rot, f_v);
        let gd = to_device(&rot, [0.0, 0.0, yaw_rate]);
        // Earth field (east, north, up) seen in the vehicle frame.
        let (sh, ch) = pose.heading.sin_cos();
        let b_en = (0.0, 20.0);
        let b_v = [b_en.0 * ch + b_en.1 * sh, -b_en.0 * sh + b_en.1 * ch, -45.0];
        let md = to_device(&rot, b_v);
        let sample = ImuSample {
            t: tele.to_unit(t),
            accel: [
                fd[0] + gauss(&mut imu_rng, acc_sigma),
                fd[1] + gauss(&mut imu_rng, acc_sigma),
                fd[2] + gauss(&mut imu_rng, acc_sigma),
            ],
            gyro: [
                gd[0] + gauss(&mut imu_rng, noise.gyro_noise_rad_s),
                gd[1] + gauss(&mut imu_rng, noise.gyro_noise_rad_s),
                gd[2] + gauss(&mut imu_rng, noise.gyro_noise_rad_s),
            ],
            mag: [
                md[0] + gauss(&mut imu_rng, 0.3 * (acc_sigma > 0.0) as u8 as f64),
                md[1] + gauss(&mut imu_rng, 0.3 * (acc_sigma > 0.0) as u8 as f64),
                md[2] + gauss(&mut imu_rng, 0.3 * (acc_sigma > 0.0) as u8 as f64),
            ],
        };
        imu.push_str(&encode_imu_record(&sample));
        imu.push('\n');
    }

    // OBD: three PIDs at 10 Hz, staggered.
    let mut obd = String::with_capacity(n_steps * 6);
    obd.push_str(&StreamHeader::new("obd", "telemetry", script.epoch, "s,pid,hex").to_string());
    obd.push('\n');
    let n_obd = (t_total / 0.1).floor() as usize;
    for k in 0..n_obd {
        let base = k as f64 * 0.1;
        let t_rpm = base;
        let t_spd = base + 0.033;
        let t_ped = base + 0.066;
        let v = tr.at(&tr.v, t_rpm);
        let rpm = (800.0 + 100.0 * v).min(6000.0);
        let spd = (tr.at(&tr.v, t_spd) * 3.6).round().clamp(0.0, 255.0);
        // Pedal is a step signal; sample without interpolation.
        let ped = tr.pedal[((t_ped / DT).floor() as usize).min(n_steps - 1)];
        for (t, val) in [(t_rpm, ObdValue::Rpm(rpm)), (t_spd, ObdValue::SpeedKph(spd)), (t_ped, ObdValue::PedalPct(ped))] {
            obd.push_str(&encode_obd_frame(&encode_obd_value(tele.to_unit(t), val)));
            obd.push('\n');
        }
    }

    // GNSS: GGA at 10 Hz, RMC at 1 Hz.
    let mut gps_rng = rng_stream(script.seed, 1);
    let mut anchor_rng = rng_stream(script.seed, 4);
    let mut gnss = String::with_capacity(n_steps * 10);
    gnss.push_str(&StreamHeader::new("gnss", "telemetry", script.epoch, "s,nmea").to_string());
    gnss.push('\n');
    let (sigma, quality) = if noise.rtk {
        (noise.rtk_sigma_m, FixQuality::RtkFixed)
    } else {
        (noise.gps_sigma_m, FixQuality::Gps)
    };
    // Error process: Gauss-Markov knots once per second, linearly
    // interpolated to the fix rate.
    let phi = if noise.rtk || noise.gps_tau_s <= 0.0 {
        0.0
    } else {
        (-1.0 / noise.gps_tau_s).exp()
    };
    let innov = sigma * (1.0 - phi * phi).sqrt();
    let n_fix = (t_total / 0.1 + 1e-9).floor() as usize + 1;
    let mut knots = Vec::with_capacity(n_fix / 10 + 2);
    knots.push((gauss(&mut gps_rng, sigma), gauss(&mut gps_rng, sigma)));
    while knots.len() < n_fix / 10 + 2 {
        let (ex, ey) = *knots.last().expect("non-empty");
        knots.push((phi * ex + gauss(&mut gps_rng, innov), phi * ey + gauss(&mut gps_rng, innov)));
    }
    for k in 0..n_fix {
        let t = k as f64 * 0.1;
        let (j, f) = (k / 10, (k % 10) as f64 / 10.0);
        let err = (
            knots[j].0 + f * (knots[j + 1].0 - knots[j].0),
            knots[j].1 + f * (knots[j + 1].1 - knots[j].1),
        );
        let s = tr.at(&tr.s, t);
        let lateral = tr.at(&tr.lateral, t);
        let p = geom.pose(s);
        let (nx, ny) = (-p.heading.sin(), p.heading.cos());
        let pos = proj.to_geo(p.x + nx * lateral + err.0, p.y + ny * lateral + err.1);
        let (tod, date) = utc_parts(script.epoch, t);
        let gga = GgaSentence {
            talker: "GP".into(),
            utc_tod_s: tod,
            position: Some(pos),
            alt_m: 250.0,
            fix_quality: quality,
            n_sats: if noise.rtk { 14 } else { 9 },
            hdop: if noise.rtk { 0.6 } else { 0.9 },
        };
        gnss.push_str(&encode_gnss_log_line(tele.to_unit(t), &NmeaSentence::Gga(gga)));
        gnss.push('\n');
        if k % 10 == 0 {
            let v = tr.at(&tr.v, t);
            let rmc = RmcSentence {
                talker: "GP".into(),
                utc_tod_s: tod,
                date,
                valid: true,
                position: Some(pos),
                speed_knots: v * 3600.0 / 1852.0,
                course_deg: Some((90.0 - p.heading.to_degrees()).rem_euclid(360.0)),
            };
            let t_unit = tele.to_unit(t) + gauss(&mut anchor_rng, noise.anchor_jitter_s);
            gnss.push_str(&encode_gnss_log_line(t_unit, &NmeaSentence::Rmc(rmc)));
            gnss.push('\n');
        }
    }

    // Vision unit time reference.
    let mut vis_anchor_rng = rng_stream(script.seed, 5);
    let mut vision_gnss = String::new();
    vision_gnss.push_str(&StreamHeader::new("gnss", "vision", script.epoch, "s,nmea").to_string());
    vision_gnss.push('\n');
    for k in 0..=(t_total.floor() as usize) {
        let t = k as f64;
        let (pos, heading) = geo_at(tr.at(&tr.s, t), 0.0);
        let (tod, date) = utc_parts(script.epoch, t);
        let rmc = RmcSentence {
            talker: "GN".into(),
            utc_tod_s: tod,
            date,
            valid: true,
            position: Some(pos),
            speed_knots: tr.at(&tr.v, t) * 3600.0 / 1852.0,
            course_deg: Some((90.0 - heading.to_degrees()).rem_euclid(360.0)),
        };
        let t_unit = vis.to_unit(t) + gauss(&mut vis_anchor_rng, noise.anchor_jitter_s);
        vision_gnss.push_str(&encode_gnss_log_line(t_unit, &NmeaSentence::Rmc(rmc)));
        vision_gnss.push('\n');
    }

    // Vision frames.
    let vision_events = render_vision(script, &tr, &fired, t_total);
    let mut vision = String::with_capacity(vision_events.len() * 70);
    vision.push_str(&StreamHeader::new("vision", "vision", script.epoch, "s,json").to_string());
    vision.push('\n');
    for mut e in vision_events {
        e.t = vis.to_unit(e.t);
        vision.push_str(&encode_vision_event(&e));
        vision.push('\n');
    }

    let truth = build_truth(script, network, geom, &tr, &fired, s_start, s_end, t_move, t_arrive, t_total);
    Ok(SimOutput {
        gnss,
        imu,
        obd,
        vision,
        vision_gnss,
        truth,
    })
}

fn render_vision(script: &DriveScript, tr: &Trace, fired: &[Fired], t_total: f64) -> Vec<VisionEvent> {
    let mut rng = rng_stream(script.seed, 3);
    let mut dist_rng = rng_stream(script.seed, 6);
    let noise = &script.noise;
    let cam = script.device.camera_yaw_deg;
    let events = &script.events;
    let frame_t = |k: usize| k as f64 * 0.1 + 0.05;
    let n_frames = ((t_total - 0.05) / 0.1).floor() as usize + 1;

    // Background blinks and mirror checks.
    let mut blinks: Vec<(f64, f64)> = Vec::new();
    let mut t = rng.random_range(2.0..5.0);
    while t < t_total {
        let frames = rng.random_range(1..=2) as f64;
        blinks.push((t, t + frames * 0.1));
        t += rng.random_range(3.0..6.0);
    }
    let mut mirrors: Vec<(f64, f64, f64)> = Vec::new();
    let mut t = rng.random_range(15.0..30.0);
    while t < t_total {
        let side = if rng.random_bool(0.5) { 25.0 } else { -25.0 };
        mirrors.push((t, t + 0.6, side));
        t += rng.random_range(20.0..40.0);
    }
    let jitter = Normal::new(0.0, noise.head_yaw_jitter_deg.max(0.0)).expect("valid σ");

    let active = |kind: fn(&InjectKind) -> Option<f64>, t: f64| -> Option<(usize, f64)> {
        events.iter().enumerate().find_map(|(i, inj)| {
            let dur = kind(&inj.kind)?;
            let t0 = fired[i].t0?;
            (t >= t0 && t < t0 + dur).then_some((i, t - t0))
        })
    };

    let mut out = Vec::with_capacity(n_frames * 3);
    for k in 0..n_frames {
        let t = frame_t(k);
        // Driver camera.
        let eyes_event = active(
            |k| match k {
                InjectKind::EyesClosed { duration_s } => Some(*duration_s),
                _ => None,
            },
            t,
        )
        .is_some();
        let yawn = active(
            |k| match k {
                InjectKind::Yawn { duration_s } => Some(*duration_s),
                _ => None,
            },
            t,
        );
        let yawn_eyes = yawn.is_some_and(|(i, u)| match events[i].kind {
            InjectKind::Yawn { duration_s } => u >= 0.15 * duration_s && u < 0.85 * duration_s,
            _ => false,
        });
        let blink = blinks.iter().any(|&(a, b)| t >= a && t < b);
        out.push(VisionEvent::new(t, VisionKind::EyeState { closed: eyes_event || yawn_eyes || blink }));

        let mut yaw = cam;
        if noise.head_yaw_jitter_deg > 0.0 {
            yaw += jitter.sample(&mut rng);
        }
        let distraction = events.iter().enumerate().find_map(|(i, inj)| match inj.kind {
            InjectKind::Distraction { duration_s, yaw_deg } => {
                let t0 = fired[i].t0?;
                (t >= t0 && t < t0 + duration_s).then_some(yaw_deg)
            }
            _ => None,
        });
        if let Some(y) = distraction {
            yaw += y;
        } else if let Some(&(_, _, side)) = mirrors.iter().find(|&&(a, b, _)| t >= a && t < b) {
            yaw += side;
        }
        let pitch = if noise.head_yaw_jitter_deg > 0.0 {
            -5.0 + jitter.sample(&mut rng) * 0.5
        } else {
            -5.0
        };
        out.push(VisionEvent::new(t, VisionKind::HeadPose { yaw_deg: yaw, pitch_deg: pitch }));
        if yawn.is_some() {
            out.push(VisionEvent::new(t, VisionKind::Yawn));
        }
        if active(
            |k| match k {
                InjectKind::PhoneUse { duration_s } => Some(*duration_s),
                _ => None,
            },
            t,
        )
        .is_some()
        {
            out.push(VisionEvent::new(t, VisionKind::PhoneUse));
        }

        // Front camera.
        let s = tr.at(&tr.s, t);
        for (i, inj) in events.iter().enumerate() {
            let f = &fired[i];
            match inj.kind {
                InjectKind::RedLight { .. } => {
                    let near = s >= inj.at_m - LIGHT_VISIBLE_M || f.t0.is_some_and(|t0| t >= t0 - 3.0);
                    if near && s < inj.at_m && f.t_cross.is_none_or(|c| t < c) {
                        let red = f.t0.is_some_and(|t0| t >= t0) && f.t_green.is_none_or(|g| t < g);
                        let state = if red { LightState::Red } else { LightState::Green };
                        out.push(VisionEvent::new(t, VisionKind::TrafficLight { state }));
                    }
                }
                InjectKind::StopSign { .. } => {
                    if s >= inj.at_m - SIGN_VISIBLE_M && s < inj.at_m && f.t_cross.is_none_or(|c| t < c) {
                        out.push(VisionEvent::new(t, VisionKind::StopSign));
                    }
                }
                InjectKind::LeadBrake { .. } => {
                    if let Some(t0) = f.t0 {
                        let u = t - t0;
                        if (0.0..6.0).contains(&u) {
                            let on = (2.0..5.0).contains(&u);
                            out.push(VisionEvent::new(t, VisionKind::FrontTaillight { on }));
                        }
                    }
                }
                InjectKind::NearCollision { min_distance_m, duration_s } => {
                    if let Some(t0) = f.t0 {
                        let u = t - t0;
                        if (0.0..=duration_s).contains(&u) {
                            let d = LEAD_GAP_M - (LEAD_GAP_M - min_distance_m) * (std::f64::consts::PI * u / duration_s).sin();
                            let d = (d + gauss(&mut dist_rng, noise.distance_noise_m)).max(0.1);
                            out.push(VisionEvent::new(t, VisionKind::NearCollision { distance_m: d }));
                        }
                    }
                }
                InjectKind::Pedestrian { crossing } => {
                    if let Some(t0) = f.t0 {
                        if (0.0..3.0).contains(&(t - t0)) {
                            out.push(VisionEvent::new(t, VisionKind::Pedestrian { crossing }));
                        }
                    }
                }
                _ => {}
            }
        }
    }
    for (i, inj) in events.iter().enumerate() {
        if let (InjectKind::LaneCrossing, Some(t0)) = (&inj.kind, fired[i].t0) {
            for d in [0.0, 0.3, 0.6] {
                out.push(VisionEvent::new(t0 + d, VisionKind::LaneCrossing));
            }
        }
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    out
}

#[allow(clippy::too_many_arguments)]
fn build_truth(
    script: &DriveScript,
    network: &RoadNetwork,
    geom: &PathGeometry,
    tr: &Trace,
    fired: &[Fired],
    s_start: f64,
    s_end: f64,
    t_move: f64,
    t_arrive: f64,
    t_total: f64,
) -> GroundTruth {
    let proj = network.projection();
    let loc = |t: f64| {
        let p = geom.pose(tr.at(&tr.s, t));
        proj.to_geo(p.x, p.y)
    };
    let time_at_s = |s_target: f64| -> Option<f64> {
        let i = tr.s.partition_point(|&s| s < s_target);
        (i < tr.s.len()).then(|| i as f64 * DT)
    };
    let ev = |kind, t_start: f64, t_end: f64| {
        let p = loc(t_start);
        TruthEvent {
            kind,
            t_start,
            t_end,
            lat: p.lat,
            lon: p.lon,
            stimulus: None,
            latency_s: None,
            gaze_offroad: None,
        }
    };
    let mut events = Vec::new();
    for (inj, f) in script.events.iter().zip(fired) {
        let Some(t0) = f.t0 else { continue };
        match inj.kind {
            InjectKind::HarshBrake { duration_s, .. } => {
                events.push(ev(TruthKind::HarshBrake, t0, t0 + duration_s + BRAKE_RAMP_S))
            }
            InjectKind::HarshAccel { duration_s, .. } => {
                events.push(ev(TruthKind::HarshAccel, t0, t0 + duration_s + BRAKE_RAMP_S))
            }
            InjectKind::Pothole { .. } => events.push(ev(TruthKind::Pothole, t0, t0 + 2.0 * POTHOLE_PULSE_S)),
            InjectKind::Distraction { duration_s, .. } => {
                events.push(ev(TruthKind::DistractionEpisode, t0, t0 + duration_s))
            }
            InjectKind::EyesClosed { duration_s } => events.push(ev(TruthKind::EyesClosedEpisode, t0, t0 + duration_s)),
            InjectKind::Yawn { duration_s } => events.push(ev(TruthKind::YawnEpisode, t0, t0 + duration_s)),
            InjectKind::PhoneUse { duration_s } => events.push(ev(TruthKind::PhoneUseEpisode, t0, t0 + duration_s)),
            InjectKind::NearCollision {
                min_distance_m,
                duration_s,
            } => {
                if min_distance_m < NEAR_COLLISION_M {
                    let u = duration_s / std::f64::consts::PI
                        * ((LEAD_GAP_M - NEAR_COLLISION_M) / (LEAD_GAP_M - min_distance_m)).asin();
                    events.push(ev(TruthKind::NearCollisionEvent, t0 + u, t0 + duration_s - u));
                }
            }
            InjectKind::LaneCrossing => events.push(ev(TruthKind::LaneCrossingEvent, t0, t0 + 0.6)),
            InjectKind::Pedestrian { .. } => events.push(ev(TruthKind::PedestrianEncounter, t0, t0 + 3.0)),
            InjectKind::LaneDrift { duration_s, .. } => events.push(ev(TruthKind::LaneDeviation, t0, t0 + duration_s)),
            InjectKind::LeadBrake { latency_s } => {
                let stim = t0 + 2.0;
                let mut e = match latency_s {
                    Some(l) => {
                        let mut e = ev(TruthKind::ReactionSample, stim, stim + l);
                        e.latency_s = Some(l);
                        e
                    }
                    None => ev(TruthKind::MissedStimulus, stim, stim),
                };
                e.stimulus = Some("front_taillight".into());
                events.push(e);
            }
            InjectKind::RedLight {
                run,
                latency_s,
                green_latency_s,
            } => {
                if run {
                    let tc = f.t_cross.unwrap_or(t0);
                    events.push(ev(TruthKind::RedLightRun, tc, tc));
                    let mut m = ev(TruthKind::MissedStimulus, t0, t0);
                    m.stimulus = Some("light_green_to_red".into());
                    events.push(m);
                } else {
                    let tg = f.t_green.unwrap_or(t0);
                    events.push(ev(TruthKind::RedLightStop, t0, tg));
                    let mut r1 = ev(TruthKind::ReactionSample, t0, t0 + latency_s);
                    r1.stimulus = Some("light_green_to_red".into());
                    r1.latency_s = Some(latency_s);
                    events.push(r1);
                    if let Some(tg) = f.t_green {
                        let mut r2 = ev(TruthKind::ReactionSample, tg, tg + green_latency_s);
                        r2.stimulus = Some("light_red_to_green".into());
                        r2.latency_s = Some(green_latency_s);
                        events.push(r2);
                    }
                }
            }
            InjectKind::StopSign { comply } => {
                if comply {
                    events.push(ev(TruthKind::StopSignStop, t0, f.t_release.unwrap_or(t0)));
                } else {
                    let tc = f.t_cross.unwrap_or(t0);
                    events.push(ev(TruthKind::StopSignViolation, t0, tc));
                }
            }
            InjectKind::GettingLost => {
                let tc = time_at_s(inj.at_m).unwrap_or(t0);
                events.push(ev(TruthKind::GettingLost, tc, tc));
            }
        }
    }
    // Gaze annotation of harsh brakes.
    let offroad: Vec<(f64, f64)> = events
        .iter()
        .filter(|e| matches!(e.kind, TruthKind::DistractionEpisode | TruthKind::EyesClosedEpisode))
        .map(|e| (e.t_start, e.t_end))
        .collect();
    for e in events.iter_mut().filter(|e| e.kind == TruthKind::HarshBrake) {
        let (lo, hi) = (e.t_start - GAZE_LOOKBACK_S, e.t_start);
        e.gaze_offroad = Some(offroad.iter().any(|&(a, b)| a <= hi && b >= lo));
    }
    events.sort_by(|a, b| a.t_start.total_cmp(&b.t_start).then(a.kind.cmp(&b.kind)));

    let mut passages = Vec::with_capacity(geom.edges.len());
    let mut t_enter = 0.0;
    for k in 0..geom.edges.len() {
        let t_exit = if k + 1 < geom.edges.len() {
            time_at_s(geom.node_s[k + 1]).unwrap_or(t_total)
        } else {
            t_total
        };
        passages.push(EdgePassage {
            edge: geom.edges[k],
            t_enter,
            t_exit,
        });
        t_enter = t_exit;
    }
    // Edges never reached (parking offsets) still bound the passage list.
    passages.retain(|p| p.t_exit > p.t_enter || p.t_enter < t_total);

    let model = |c: super::ClockParams| ClockModel {
        offset_s: c.offset_s,
        drift_ppm: c.drift_ppm,
        rms_residual_s: 0.0,
        n_anchors: 0,
    };
    GroundTruth {
        trip_id: script.trip_id.clone(),
        driver_id: script.driver_id.clone(),
        epoch: script.epoch,
        telemetry_clock: model(script.telemetry_clock),
        vision_clock: model(script.vision_clock),
        route_nodes: geom.nodes.clone(),
        route_edges: geom.edges.clone(),
        edge_passages: passages,
        t_drive_start: t_move,
        t_drive_end: t_arrive,
        distance_m: s_end - s_start,
        events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::NodeId;
    use crate::ingest::{parse_gnss_log_line, parse_imu_record, parse_obd_line, parse_vision_event, split_stream};
    use crate::sim::{gen_network, Injection, NoiseSpec, RouteSpec};

    fn straight_script() -> DriveScript {
        DriveScript {
            route: RouteSpec::Nodes {
                nodes: vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)],
            },
            noise: NoiseSpec::noiseless(),
            ..DriveScript::default()
        }
    }

    #[test]
    fn constant_speed_straight_is_clean() {
        let net = gen_network(2, 4, 200.0, &[], 0);
        let out = synthesize(&straight_script(), &net).unwrap();
        let (_, body) = split_stream(&out.imu).unwrap();
        let imu: Vec<ImuSample> = body.iter().map(|l| parse_imu_record(l.1).unwrap()).collect();
        // Cruise segment: no longitudinal accel, gravity only.
        let cruise: Vec<&ImuSample> = imu.iter().filter(|s| (40.0..45.0).contains(&s.t)).collect();
        assert!(!cruise.is_empty());
        for s in cruise {
            assert!(s.accel[0].abs() < 1e-3 && s.accel[1].abs() < 1e-3, "{:?}", s.accel);
            assert!((s.accel[2] - GRAVITY).abs() < 1e-3);
        }
        // Noiseless GNSS sits on the centerline.
        let (_, body) = split_stream(&out.gnss).unwrap();
        let proj = net.projection();
        for (_, l) in body {
            if let (_, NmeaSentence::Gga(g)) = parse_gnss_log_line(l).unwrap() {
                let (_, y) = proj.to_xy(g.position.unwrap());
                let (_, y0) = proj.to_xy(net.node(NodeId(0)).pos());
                assert!((y - y0).abs() < 0.01);
            }
        }
        assert!(out.truth.events.is_empty());
        assert!((out.truth.distance_m - 560.0).abs() < 0.1);
    }

    #[test]
    fn harsh_brake_drops_speed_by_a_t() {
        let net = gen_network(2, 4, 200.0, &[], 0);
        let mut script = straight_script();
        script.events.push(Injection {
            at_m: 300.0,
            kind: InjectKind::HarshBrake {
                decel_mps2: 4.0,
                duration_s: 1.0,
            },
        });
        let out = synthesize(&script, &net).unwrap();
        let brake = &out.truth.events[0];
        assert_eq!(brake.kind, TruthKind::HarshBrake);
        let (_, body) = split_stream(&out.obd).unwrap();
        let speed: Vec<(f64, f64)> = body
            .iter()
            .map(|l| crate::ingest::decode_obd_frame(&parse_obd_line(l.1).unwrap()).unwrap())
            .filter_map(|r| match r.value {
                ObdValue::SpeedKph(v) => Some((r.t, v)),
                _ => None,
            })
            .collect();
        let at = |t: f64| speed.iter().min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs())).unwrap().1;
        let drop = at(brake.t_start - 0.2) - at(brake.t_end + 0.1);
        assert!((drop - 14.4).abs() <= 1.0, "drop {drop}");
    }

    #[test]
    fn event_outside_drive_rejected() {
        let net = gen_network(2, 4, 200.0, &[], 0);
        let mut script = straight_script();
        script.events.push(Injection {
            at_m: 5000.0,
            kind: InjectKind::Pothole { amplitude_mps2: 10.0 },
        });
        assert!(matches!(
            synthesize(&script, &net),
            Err(SimError::ScriptEventOutsideDrive { .. })
        ));
    }

    #[test]
    fn deterministic_and_parseable() {
        let net = gen_network(3, 4, 200.0, &[], 0);
        let script = DriveScript {
            seed: 11,
            route: RouteSpec::Nodes {
                nodes: vec![NodeId(0), NodeId(1), NodeId(2), NodeId(6), NodeId(10)],
            },
            telemetry_clock: crate::sim::ClockParams {
                offset_s: 2.5,
                drift_ppm: 20.0,
            },
            events: vec![
                Injection {
                    at_m: 250.0,
                    kind: InjectKind::Distraction {
                        duration_s: 3.0,
                        yaw_deg: 50.0,
                    },
                },
                Injection {
                    at_m: 100.0,
                    kind: InjectKind::LaneCrossing,
                },
            ],
            ..DriveScript::default()
        };
        let a = synthesize(&script, &net).unwrap();
        let b = synthesize(&script, &net).unwrap();
        assert_eq!(a, b);
        for text in [&a.vision] {
            let (_, body) = split_stream(text).unwrap();
            for (_, l) in body {
                parse_vision_event(l).unwrap();
            }
        }
        assert!(a.truth.edge_passages.windows(2).all(|w| w[0].t_exit == w[1].t_enter));
        assert_eq!(a.truth.route_edges.len(), 4);
    }
}

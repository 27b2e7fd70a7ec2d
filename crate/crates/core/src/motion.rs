//! Telematics event layer: IMU gravity alignment, harsh manoeuvres,
//! pothole strikes, and OBD/GNSS speed cross-checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::geo::haversine;
use crate::ingest::{GnssFix, ImuSample};
use crate::time_sync::{interpolate, ScalarSample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MotionError {
    #[error("IMU stream too short: {0:.1} s of data, need at least 5 s")]
    TooShort(f64),
    #[error("no quiescent period found to estimate gravity")]
    NoQuiescentPeriod,
    #[error("forward axis unobservable: no mounting yaw and no usable speed signal")]
    NoForwardReference,
    #[error("OBD and GNSS streams do not overlap in time")]
    NoOverlap,
}

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;

/// Gravity-free acceleration in the vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleAccel {
    pub t: f64,
    /// + forward
    pub a_long: f64,
    /// + left
    pub a_lat: f64,
    /// + up, gravity removed
    pub a_vert: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    HarshAccel,
    HarshBrake,
    HarshCorner,
    Pothole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionEvent {
    pub kind: MotionKind,
    pub t_start: f64,
    pub t_end: f64,
    pub peak: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardSource {
    MountingYaw,
    SpeedCorrelation,
}

/// Device-frame unit vectors of the vehicle axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub up: [f64; 3],
    pub forward: [f64; 3],
    pub left: [f64; 3],
    pub gravity_m_s2: f64,
    pub forward_source: ForwardSource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MountingHints {
    pub yaw_deg: Option<f64>,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    scale(a, 1.0 / norm(a))
}

/// Zero-phase first-order low-pass (forward then backward pass).
pub fn lowpass_zero_phase(t: &[f64], x: &[f64], cutoff_hz: f64) -> Vec<f64> {
    let rc = 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz);
    let mut y = x.to_vec();
    for i in 1..y.len() {
        let dt = (t[i] - t[i - 1]).max(0.0);
        let a = dt / (rc + dt);
        y[i] = y[i - 1] + a * (y[i] - y[i - 1]);
    }
    for i in (0..y.len().saturating_sub(1)).rev() {
        let dt = (t[i + 1] - t[i]).max(0.0);
        let a = dt / (rc + dt);
        y[i] = y[i + 1] + a * (y[i] - y[i + 1]);
    }
    y
}

/// First-order high-pass; removes DC exactly.
pub fn highpass(t: &[f64], x: &[f64], cutoff_hz: f64) -> Vec<f64> {
    let rc = 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz);
    let mut y = vec![0.0; x.len()];
    for i in 1..x.len() {
        let dt = (t[i] - t[i - 1]).max(1e-9);
        let a = rc / (rc + dt);
        y[i] = a * (y[i - 1] + x[i] - x[i - 1]);
    }
    y
}

/// Windowed mean via prefix sums over `[t - half, t + half]`.
struct WindowMean {
    t: Vec<f64>,
    prefix: Vec<[f64; 3]>,
}

impl WindowMean {
    fn new(t: Vec<f64>, v: impl Iterator<Item = [f64; 3]>) -> Self {
        let mut prefix = vec![[0.0; 3]];
        for x in v {
            let p = *prefix.last().unwrap();
            prefix.push([p[0] + x[0], p[1] + x[1], p[2] + x[2]]);
        }
        Self { t, prefix }
    }

    fn mean(&self, lo: f64, hi: f64) -> Option<[f64; 3]> {
        let a = self.t.partition_point(|&x| x < lo);
        let b = self.t.partition_point(|&x| x <= hi);
        if b <= a {
            return None;
        }
        let n = (b - a) as f64;
        let (pa, pb) = (self.prefix[a], self.prefix[b]);
        Some([(pb[0] - pa[0]) / n, (pb[1] - pa[1]) / n, (pb[2] - pa[2]) / n])
    }
}

fn estimate_gravity(imu: &[ImuSample], lowpass_hz: f64) -> Result<[f64; 3], MotionError> {
    let t: Vec<f64> = imu.iter().map(|s| s.t).collect();
    let lp: Vec<[f64; 3]> = {
        let chans: Vec<Vec<f64>> = (0..3)
            .map(|k| {
                let x: Vec<f64> = imu.iter().map(|s| s.accel[k]).collect();
                lowpass_zero_phase(&t, &x, lowpass_hz)
            })
            .collect();
        (0..imu.len()).map(|i| [chans[0][i], chans[1][i], chans[2][i]]).collect()
    };
    // Quiescent: raw accel varies little around its own 1 s mean.
    let raw = WindowMean::new(t.clone(), imu.iter().map(|s| s.accel));
    let sq = WindowMean::new(
        t.clone(),
        imu.iter().map(|s| [s.accel[0] * s.accel[0], s.accel[1] * s.accel[1], s.accel[2] * s.accel[2]]),
    );
    let quiet: Vec<usize> = (0..imu.len())
        .filter(|&i| {
            let (Some(m), Some(m2)) = (raw.mean(t[i] - 0.5, t[i] + 0.5), sq.mean(t[i] - 0.5, t[i] + 0.5)) else {
                return false;
            };
            let var: f64 = (0..3).map(|k| (m2[k] - m[k] * m[k]).max(0.0)).sum();
            let g = norm(lp[i]);
            var.sqrt() < 1.0 && (g - GRAVITY).abs() < 1.5
        })
        .collect();
    let dt = if imu.len() > 1 {
        (t[t.len() - 1] - t[0]) / (imu.len() - 1) as f64
    } else {
        0.0
    };
    if quiet.is_empty() || quiet.len() as f64 * dt < 1.0 {
        return Err(MotionError::NoQuiescentPeriod);
    }
    let mean_of = |idx: &[usize]| -> [f64; 3] {
        let mut s = [0.0; 3];
        for &i in idx {
            for k in 0..3 {
                s[k] += lp[i][k];
            }
        }
        scale(s, 1.0 / idx.len() as f64)
    };
    let mut g = mean_of(&quiet);
    // Drop samples where sustained manoeuvres tilt the low-passed vector.
    for tol in [0.6, 0.3] {
        let kept: Vec<usize> = quiet.iter().copied().filter(|&i| norm(sub(lp[i], g)) < tol).collect();
        if kept.len() as f64 * dt >= 1.0 {
            g = mean_of(&kept);
        }
    }
    Ok(g)
}

fn horizontal_basis(up: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let x = [1.0, 0.0, 0.0];
    let y = [0.0, 1.0, 0.0];
    let px = sub(x, scale(up, dot(x, up)));
    let e1 = if norm(px) > 0.2 {
        normalize(px)
    } else {
        normalize(sub(y, scale(up, dot(y, up))))
    };
    (e1, cross(up, e1))
}

/// Gravity direction and vehicle axes in the device frame.
///
/// `speed_mps` is the synchronized vehicle speed; it is only consulted when
/// no mounting yaw is configured.
pub fn estimate_alignment(
    imu: &[ImuSample],
    hints: MountingHints,
    speed_mps: Option<&[ScalarSample]>,
    lowpass_hz: f64,
) -> Result<Alignment, MotionError> {
    let span = match (imu.first(), imu.last()) {
        (Some(a), Some(b)) => b.t - a.t,
        _ => 0.0,
    };
    if span < 5.0 {
        return Err(MotionError::TooShort(span));
    }
    let g = estimate_gravity(imu, lowpass_hz)?;
    let gravity_m_s2 = norm(g);
    let up = scale(g, 1.0 / gravity_m_s2);
    let (e1, e2) = horizontal_basis(up);

    let (forward, forward_source) = if let Some(yaw) = hints.yaw_deg {
        let (s, c) = yaw.to_radians().sin_cos();
        (sub(scale(e1, c), scale(e2, s)), ForwardSource::MountingYaw)
    } else {
        let speed = speed_mps.ok_or(MotionError::NoForwardReference)?;
        let t: Vec<f64> = imu.iter().map(|s| s.t).collect();
        let horiz = WindowMean::new(
            t,
            imu.iter().map(|s| {
                let h = sub(s.accel, scale(up, dot(s.accel, up)));
                [dot(h, e1), dot(h, e2), 0.0]
            }),
        );
        let (mut c1, mut c2) = (0.0, 0.0);
        for s in speed {
            let (Some(v_hi), Some(v_lo)) = (interpolate(speed, s.t + 0.5), interpolate(speed, s.t - 0.5)) else {
                continue;
            };
            let dv = v_hi - v_lo;
            if let Some(h) = horiz.mean(s.t - 0.5, s.t + 0.5) {
                c1 += h[0] * dv;
                c2 += h[1] * dv;
            }
        }
        if c1.hypot(c2) < 1e-6 {
            return Err(MotionError::NoForwardReference);
        }
        let theta = c2.atan2(c1);
        let (s, c) = theta.sin_cos();
        (
            normalize([
                e1[0] * c + e2[0] * s,
                e1[1] * c + e2[1] * s,
                e1[2] * c + e2[2] * s,
            ]),
            ForwardSource::SpeedCorrelation,
        )
    };
    Ok(Alignment {
        up,
        forward,
        left: cross(up, forward),
        gravity_m_s2,
        forward_source,
    })
}

impl Alignment {
    pub fn apply(&self, s: &ImuSample) -> VehicleAccel {
        VehicleAccel {
            t: s.t,
            a_long: dot(s.accel, self.forward),
            a_lat: dot(s.accel, self.left),
            a_vert: dot(s.accel, self.up) - self.gravity_m_s2,
        }
    }
}

pub fn gravity_align(
    imu: &[ImuSample],
    hints: MountingHints,
    speed_mps: Option<&[ScalarSample]>,
    lowpass_hz: f64,
) -> Result<(Vec<VehicleAccel>, Alignment), MotionError> {
    let alignment = estimate_alignment(imu, hints, speed_mps, lowpass_hz)?;
    Ok((imu.iter().map(|s| alignment.apply(s)).collect(), alignment))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarshThresholds {
    pub accel: f64,
    pub brake: f64,
    pub corner: f64,
    pub min_duration_s: f64,
    pub hysteresis: f64,
    pub merge_gap_s: f64,
}

impl Default for HarshThresholds {
    fn default() -> Self {
        Self::from(&Config::default())
    }
}

impl From<&Config> for HarshThresholds {
    fn from(c: &Config) -> Self {
        Self {
            accel: c.harsh_accel_threshold,
            brake: c.harsh_brake_threshold,
            corner: c.harsh_corner_threshold,
            min_duration_s: c.harsh_min_duration_s,
            hysteresis: c.harsh_hysteresis,
            merge_gap_s: c.harsh_merge_gap_s,
        }
    }
}

/// Excursions of `x` (exceedance direction positive) above `thr`, closing
/// below `hyst·thr`, merged across gaps shorter than `merge_gap`.
fn excursions(t: &[f64], x: &[f64], thr: f64, hyst: f64, merge_gap: f64) -> Vec<(usize, usize, usize)> {
    let mut raw: Vec<(usize, usize, usize)> = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for i in 0..x.len() {
        match open {
            None if x[i] >= thr => open = Some((i, i)),
            None => {}
            Some((start, peak)) => {
                if x[i] < hyst * thr {
                    raw.push((start, i, peak));
                    open = None;
                } else if x[i] > x[peak] {
                    open = Some((start, i));
                }
            }
        }
    }
    if let Some((start, peak)) = open {
        raw.push((start, x.len() - 1, peak));
    }
    let mut merged: Vec<(usize, usize, usize)> = Vec::new();
    for e in raw {
        match merged.last_mut() {
            Some(last) if t[e.0] - t[last.1] < merge_gap => {
                last.1 = e.1;
                if x[e.2] > x[last.2] {
                    last.2 = e.2;
                }
            }
            _ => merged.push(e),
        }
    }
    merged
}

pub fn detect_harsh_events(accel: &[VehicleAccel], th: &HarshThresholds) -> Vec<MotionEvent> {
    let t: Vec<f64> = accel.iter().map(|a| a.t).collect();
    let channels: [(MotionKind, Vec<f64>, f64, f64); 3] = [
        (MotionKind::HarshAccel, accel.iter().map(|a| a.a_long).collect(), th.accel, 1.0),
        (MotionKind::HarshBrake, accel.iter().map(|a| -a.a_long).collect(), -th.brake, -1.0),
        (MotionKind::HarshCorner, accel.iter().map(|a| a.a_lat.abs()).collect(), th.corner, 1.0),
    ];
    let mut events = Vec::new();
    for (kind, x, thr, sign) in channels {
        for (s, e, p) in excursions(&t, &x, thr, th.hysteresis, th.merge_gap_s) {
            let duration_s = t[e] - t[s];
            if duration_s < th.min_duration_s || duration_s <= 0.0 {
                continue;
            }
            let peak = if kind == MotionKind::HarshCorner {
                accel[p].a_lat
            } else {
                sign * x[p]
            };
            events.push(MotionEvent {
                kind,
                t_start: t[s],
                t_end: t[e],
                peak,
                duration_s,
            });
        }
    }
    events.sort_by(|a, b| a.t_start.total_cmp(&b.t_start).then(a.kind.cmp(&b.kind)));
    events
}

/// Robust σ floor so a perfectly quiet channel does not yield a zero threshold.
const MIN_VERTICAL_SIGMA: f64 = 0.05;

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Pothole / raised-marker strikes: windowed peaks of the high-passed
/// vertical channel above `z_thresh` robust standard deviations
/// (1.4826·MAD) of the whole trip.
pub fn detect_potholes(accel: &[VehicleAccel], window_s: f64, z_thresh: f64, highpass_hz: f64) -> Vec<MotionEvent> {
    assert!(window_s > 0.0, "window_s must be positive");
    if accel.len() < 2 {
        return Vec::new();
    }
    let t: Vec<f64> = accel.iter().map(|a| a.t).collect();
    let x: Vec<f64> = accel.iter().map(|a| a.a_vert).collect();
    let hp = highpass(&t, &x, highpass_hz);
    let mut tmp = hp.clone();
    let med = median(&mut tmp);
    let mut dev: Vec<f64> = hp.iter().map(|v| (v - med).abs()).collect();
    let sigma = (1.4826 * median(&mut dev)).max(MIN_VERTICAL_SIGMA);
    let thr = z_thresh * sigma;

    let t0 = t[0];
    let mut events: Vec<MotionEvent> = Vec::new();
    let mut cur: Option<(usize, usize, usize, i64)> = None; // first, last, peak, window
    let mut i = 0;
    while i < hp.len() {
        let w = ((t[i] - t0) / window_s).floor() as i64;
        let mut j = i;
        let mut first = None;
        let mut last = i;
        let mut peak = i;
        while j < hp.len() && ((t[j] - t0) / window_s).floor() as i64 == w {
            if hp[j].abs() > thr {
                first.get_or_insert(j);
                last = j;
            }
            if hp[j].abs() > hp[peak].abs() {
                peak = j;
            }
            j += 1;
        }
        if let Some(f) = first {
            cur = match cur {
                Some((cf, _, cp, cw)) if cw + 1 == w => {
                    let p = if hp[peak].abs() > hp[cp].abs() { peak } else { cp };
                    Some((cf, last, p, w))
                }
                other => {
                    if let Some(done) = other {
                        events.push(pothole_event(&t, &hp, done));
                    }
                    Some((f, last, peak, w))
                }
            };
        }
        i = j;
    }
    if let Some(done) = cur {
        events.push(pothole_event(&t, &hp, done));
    }
    events
}

fn pothole_event(t: &[f64], hp: &[f64], (first, last, peak, _): (usize, usize, usize, i64)) -> MotionEvent {
    let t_start = t[first];
    let t_end = if last > first {
        t[last]
    } else {
        t.get(first + 1).copied().unwrap_or(t_start + 0.01)
    };
    MotionEvent {
        kind: MotionKind::Pothole,
        t_start,
        t_end,
        peak: hp[peak],
        duration_s: t_end - t_start,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub rms_kph: f64,
    pub n_compared: usize,
    /// Intervals where |OBD − GNSS| exceeded the mismatch threshold for
    /// longer than the minimum duration.
    pub flagged: Vec<(f64, f64)>,
}

/// Compares OBD speed (km/h) with speed derived from GNSS fixes by
/// finite-differencing haversine displacement across `smoothing_s`.
pub fn speed_consistency(
    obd_kph: &[ScalarSample],
    fixes: &[GnssFix],
    smoothing_s: f64,
    mismatch_kph: f64,
    mismatch_s: f64,
) -> Result<ConsistencyReport, MotionError> {
    let positioned: Vec<(f64, crate::ingest::GeoPos)> =
        fixes.iter().filter_map(|f| f.position.map(|p| (f.t, p))).collect();
    let gnss_speed = gnss_speed_kph(&positioned, smoothing_s);
    let (Some(g0), Some(g1)) = (gnss_speed.first(), gnss_speed.last()) else {
        return Err(MotionError::NoOverlap);
    };
    let compared: Vec<(f64, f64)> = obd_kph
        .iter()
        .filter(|s| s.t >= g0.t && s.t <= g1.t)
        .map(|s| (s.t, s.value - interpolate(&gnss_speed, s.t).unwrap_or(0.0)))
        .collect();
    if compared.is_empty() {
        return Err(MotionError::NoOverlap);
    }
    let rms_kph = (compared.iter().map(|(_, d)| d * d).sum::<f64>() / compared.len() as f64).sqrt();
    let mut flagged = Vec::new();
    let mut run: Option<(f64, f64)> = None;
    for &(t, d) in &compared {
        if d.abs() > mismatch_kph {
            run = Some(run.map_or((t, t), |(s, _)| (s, t)));
        } else if let Some((s, e)) = run.take() {
            if e - s > mismatch_s {
                flagged.push((s, e));
            }
        }
    }
    if let Some((s, e)) = run {
        if e - s > mismatch_s {
            flagged.push((s, e));
        }
    }
    Ok(ConsistencyReport {
        rms_kph,
        n_compared: compared.len(),
        flagged,
    })
}

/// Centered displacement speed (km/h) at each fix with fixes available on
/// both sides of the baseline.
pub fn gnss_speed_kph(positioned: &[(f64, crate::ingest::GeoPos)], baseline_s: f64) -> Vec<ScalarSample> {
    let half = baseline_s / 2.0;
    let times: Vec<f64> = positioned.iter().map(|p| p.0).collect();
    let mut out = Vec::new();
    for &(t, _) in positioned {
        let lo = times.partition_point(|&x| x < t - half);
        let hi = times.partition_point(|&x| x <= t + half);
        if hi == 0 || lo >= positioned.len() || hi - 1 <= lo {
            continue;
        }
        let (a, b) = (positioned[lo], positioned[hi - 1]);
        if b.0 - a.0 < 0.5 * baseline_s {
            continue;
        }
        out.push(ScalarSample {
            t,
            value: haversine(a.1, b.1) / (b.0 - a.0) * 3.6,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FixQuality, GeoPos};

    fn imu_const(accel: [f64; 3], secs: f64) -> Vec<ImuSample> {
        (0..(secs * 100.0) as usize)
            .map(|i| ImuSample {
                t: i as f64 * 0.01,
                accel,
                gyro: [0.0; 3],
                mag: [20.0, 0.0, 40.0],
            })
            .collect()
    }

    fn va(t: f64, a_long: f64, a_lat: f64, a_vert: f64) -> VehicleAccel {
        VehicleAccel { t, a_long, a_lat, a_vert }
    }

    #[test]
    fn stationary_gravity_removed() {
        let hints = MountingHints { yaw_deg: Some(0.0) };
        for g in [[0.0, 0.0, 9.81], [0.0, 0.0, -9.81]] {
            let (out, _) = gravity_align(&imu_const(g, 10.0), hints, None, 0.2).unwrap();
            for a in out {
                assert!(a.a_long.abs() < 1e-9 && a.a_lat.abs() < 1e-9 && a.a_vert.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn alignment_errors() {
        let hints = MountingHints { yaw_deg: Some(0.0) };
        assert!(matches!(
            gravity_align(&imu_const([0.0, 0.0, 9.81], 2.0), hints, None, 0.2),
            Err(MotionError::TooShort(_))
        ));
        // Free fall: nothing resembles gravity.
        assert_eq!(
            gravity_align(&imu_const([0.0, 0.0, 0.0], 10.0), hints, None, 0.2).unwrap_err(),
            MotionError::NoQuiescentPeriod
        );
        assert_eq!(
            gravity_align(&imu_const([0.0, 0.0, 9.81], 10.0), MountingHints::default(), None, 0.2).unwrap_err(),
            MotionError::NoForwardReference
        );
    }

    #[test]
    fn forward_from_speed_correlation() {
        // Device rotated 90° about z: vehicle forward is device +y.
        let mut imu = Vec::new();
        let mut speed = Vec::new();
        for i in 0..3000 {
            let t = i as f64 * 0.01;
            let a = if (5.0..10.0).contains(&t) {
                1.0
            } else if (15.0..20.0).contains(&t) {
                -1.0
            } else {
                0.0
            };
            imu.push(ImuSample {
                t,
                accel: [0.0, a, 9.81],
                gyro: [0.0; 3],
                mag: [0.0; 3],
            });
            if i % 10 == 0 {
                let v = if t < 5.0 {
                    0.0
                } else if t < 10.0 {
                    t - 5.0
                } else if t < 15.0 {
                    5.0
                } else if t < 20.0 {
                    5.0 - (t - 15.0)
                } else {
                    0.0
                };
                speed.push(ScalarSample { t, value: v });
            }
        }
        let al = estimate_alignment(&imu, MountingHints::default(), Some(&speed), 0.2).unwrap();
        assert_eq!(al.forward_source, ForwardSource::SpeedCorrelation);
        assert!((al.forward[1] - 1.0).abs() < 1e-3, "{:?}", al.forward);
        assert!((al.left[0] + 1.0).abs() < 1e-3, "{:?}", al.left);
    }

    #[test]
    fn clear_brake_exceedance() {
        let accel: Vec<_> = (0..500)
            .map(|i| {
                let t = i as f64 * 0.01;
                va(t, if (100..200).contains(&i) { -4.0 } else { 0.0 }, 0.0, 0.0)
            })
            .collect();
        let ev = detect_harsh_events(&accel, &HarshThresholds::default());
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, MotionKind::HarshBrake);
        assert_eq!(ev[0].peak, -4.0);
        assert!((ev[0].duration_s - 1.0).abs() < 1e-9);
        assert!((ev[0].t_start - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quiet_has_no_events() {
        let accel: Vec<_> = (0..500).map(|i| va(i as f64 * 0.01, 0.0, 0.0, 0.0)).collect();
        assert!(detect_harsh_events(&accel, &HarshThresholds::default()).is_empty());
        assert!(detect_potholes(&accel, 0.5, 6.0, 1.0).is_empty());
    }

    #[test]
    fn merge_and_duration_filter() {
        // Two 0.2 s dips 0.5 s apart merge into one 0.9 s event.
        let accel: Vec<_> = (0..400)
            .map(|i| {
                let dip = (100..120).contains(&i) || (170..190).contains(&i);
                va(i as f64 * 0.01, if dip { -3.5 } else { 0.0 }, 0.0, 0.0)
            })
            .collect();
        let ev = detect_harsh_events(&accel, &HarshThresholds::default());
        assert_eq!(ev.len(), 1);
        assert!((ev[0].duration_s - 0.9).abs() < 1e-9);
        // A lone 0.2 s dip is too short.
        let accel: Vec<_> = (0..400)
            .map(|i| va(i as f64 * 0.01, if (100..120).contains(&i) { -3.5 } else { 0.0 }, 0.0, 0.0))
            .collect();
        assert!(detect_harsh_events(&accel, &HarshThresholds::default()).is_empty());
    }

    #[test]
    fn cornering_and_acceleration() {
        let accel: Vec<_> = (0..600)
            .map(|i| {
                let t = i as f64 * 0.01;
                let lat = if (100..200).contains(&i) { -4.0 } else { 0.0 };
                let lon = if (300..400).contains(&i) { 3.5 } else { 0.0 };
                va(t, lon, lat, 0.0)
            })
            .collect();
        let ev = detect_harsh_events(&accel, &HarshThresholds::default());
        let kinds: Vec<_> = ev.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![MotionKind::HarshCorner, MotionKind::HarshAccel]);
        assert_eq!(ev[0].peak, -4.0);
    }

    #[test]
    fn single_impulse_is_one_pothole() {
        let accel: Vec<_> = (0..2000)
            .map(|i| va(i as f64 * 0.01, 0.0, 0.0, if i == 1000 { 20.0 } else { 0.0 }))
            .collect();
        let ev = detect_potholes(&accel, 0.5, 6.0, 1.0);
        assert_eq!(ev.len(), 1);
        assert!((ev[0].t_start - 10.0).abs() < 0.02);
        assert!(ev[0].duration_s > 0.0);
    }

    #[test]
    fn smooth_sinusoid_no_pothole() {
        let accel: Vec<_> = (0..3000)
            .map(|i| {
                let t = i as f64 * 0.01;
                va(t, 0.0, 0.0, 0.8 * (2.0 * std::f64::consts::PI * 1.5 * t).sin())
            })
            .collect();
        assert!(detect_potholes(&accel, 0.5, 6.0, 1.0).is_empty());
    }

    fn fixes_along(speed_mps: f64, secs: f64) -> Vec<GnssFix> {
        (0..(secs * 10.0) as usize)
            .map(|i| {
                let t = i as f64 * 0.1;
                let east = speed_mps * t;
                GnssFix {
                    t,
                    position: Some(GeoPos::new(40.0, -83.0 + east / (6_371_000.0 * 40f64.to_radians().cos()) * 180.0 / std::f64::consts::PI)),
                    alt_m: 0.0,
                    fix_quality: FixQuality::Gps,
                    hdop: 1.0,
                    n_sats: 8,
                }
            })
            .collect()
    }

    #[test]
    fn consistent_speeds() {
        let fixes = fixes_along(50.0 / 3.6, 60.0);
        let obd: Vec<_> = (0..600).map(|i| ScalarSample { t: i as f64 * 0.1, value: 50.0 }).collect();
        let r = speed_consistency(&obd, &fixes, 1.0, 10.0, 5.0).unwrap();
        assert!(r.rms_kph < 0.05, "{}", r.rms_kph);
        assert!(r.flagged.is_empty());
    }

    #[test]
    fn inconsistent_speeds_flagged() {
        let fixes = fixes_along(70.0 / 3.6, 60.0);
        let obd: Vec<_> = (0..600).map(|i| ScalarSample { t: i as f64 * 0.1, value: 50.0 }).collect();
        let r = speed_consistency(&obd, &fixes, 1.0, 10.0, 5.0).unwrap();
        assert_eq!(r.flagged.len(), 1);
        let (s, e) = r.flagged[0];
        assert!(s < 1.0 && e > 58.0);
        let late: Vec<_> = obd.iter().map(|s| ScalarSample { t: s.t + 1000.0, ..*s }).collect();
        assert_eq!(speed_consistency(&late, &fixes, 1.0, 10.0, 5.0), Err(MotionError::NoOverlap));
    }
}

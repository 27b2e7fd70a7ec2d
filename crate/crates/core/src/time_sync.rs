//! Unit-clock to GPS-time synchronization.
//!
//! Each sensing unit's clock is modelled as affine in GPS time:
//! `t_unit = t_gps·(1 + drift_ppm·1e-6) + offset_s`, fitted by least squares
//! from `(t_unit, t_gps)` anchor pairs harvested from RMC sentences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CheckInvariants, Timestamped};

pub const MAX_DRIFT_PPM: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyncError {
    #[error("need at least 2 clock anchors, got {0}")]
    InsufficientAnchors(usize),
    #[error("all anchors at one instant; drift is unobservable")]
    DegenerateFit,
    #[error("fitted drift {0:.1} ppm exceeds the ±500 ppm plausibility bound")]
    DriftOutOfRange(f64),
    #[error("need at least 2 samples to resample, got {0}")]
    TooFewSamples(usize),
    #[error("rate must be positive, got {0}")]
    BadRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockAnchor {
    pub t_unit: f64,
    pub t_gps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub offset_s: f64,
    pub drift_ppm: f64,
    pub rms_residual_s: f64,
    pub n_anchors: usize,
}

impl ClockModel {
    pub fn identity() -> Self {
        Self {
            offset_s: 0.0,
            drift_ppm: 0.0,
            rms_residual_s: 0.0,
            n_anchors: 0,
        }
    }

    pub fn new(offset_s: f64, drift_ppm: f64) -> Self {
        Self {
            offset_s,
            drift_ppm,
            ..Self::identity()
        }
    }

    pub fn to_sync(&self, t_unit: f64) -> f64 {
        (t_unit - self.offset_s) / (1.0 + self.drift_ppm * 1e-6)
    }

    pub fn to_unit(&self, t_sync: f64) -> f64 {
        t_sync * (1.0 + self.drift_ppm * 1e-6) + self.offset_s
    }
}

pub fn estimate_clock_model(anchors: &[ClockAnchor]) -> Result<ClockModel, SyncError> {
    let n = anchors.len();
    if n < 2 {
        return Err(SyncError::InsufficientAnchors(n));
    }
    let nf = n as f64;
    let mean_gps = anchors.iter().map(|a| a.t_gps).sum::<f64>() / nf;
    let mean_unit = anchors.iter().map(|a| a.t_unit).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxe = 0.0;
    for a in anchors {
        let dg = a.t_gps - mean_gps;
        let du = a.t_unit - mean_unit;
        sxx += dg * dg;
        // Regress the excess (du - dg) so the ppm-scale slope keeps precision.
        sxe += dg * (du - dg);
    }
    let span = anchors
        .iter()
        .map(|a| a.t_gps)
        .fold(f64::NEG_INFINITY, f64::max)
        - anchors.iter().map(|a| a.t_gps).fold(f64::INFINITY, f64::min);
    if sxx <= 0.0 || span < 1e-9 {
        return Err(SyncError::DegenerateFit);
    }
    let excess_slope = sxe / sxx;
    let drift_ppm = excess_slope * 1e6;
    if drift_ppm.abs() >= MAX_DRIFT_PPM {
        return Err(SyncError::DriftOutOfRange(drift_ppm));
    }
    let offset_s = mean_unit - (1.0 + excess_slope) * mean_gps;
    let ss: f64 = anchors
        .iter()
        .map(|a| {
            let r = a.t_unit - (a.t_gps * (1.0 + excess_slope) + offset_s);
            r * r
        })
        .sum();
    Ok(ClockModel {
        offset_s,
        drift_ppm,
        rms_residual_s: (ss / nf).sqrt(),
        n_anchors: n,
    })
}

/// A stream re-expressed on the synchronized timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncedStream<T> {
    pub source_unit: String,
    pub records: Vec<T>,
}

impl<T> SyncedStream<T> {
    pub fn new(source_unit: impl Into<String>, records: Vec<T>) -> Self {
        Self {
            source_unit: source_unit.into(),
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn apply_sync<T: Timestamped>(mut records: Vec<T>, model: &ClockModel, source_unit: &str) -> SyncedStream<T> {
    for r in &mut records {
        r.set_t(model.to_sync(r.t()));
    }
    SyncedStream::new(source_unit, records)
}

/// A timestamped scalar channel value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSample {
    pub t: f64,
    pub value: f64,
}

impl Timestamped for ScalarSample {
    fn t(&self) -> f64 {
        self.t
    }
    fn set_t(&mut self, t: f64) {
        self.t = t;
    }
}

impl CheckInvariants for ScalarSample {
    fn check_invariants(&self) -> Result<(), String> {
        if self.t.is_finite() && self.value.is_finite() {
            Ok(())
        } else {
            Err("non-finite sample".into())
        }
    }
}

/// Linear interpolation onto the grid `first + k/rate_hz` covering
/// `[first, last]`; never extrapolates.
pub fn resample_uniform(
    stream: &SyncedStream<ScalarSample>,
    rate_hz: f64,
) -> Result<SyncedStream<ScalarSample>, SyncError> {
    if !(rate_hz > 0.0) {
        return Err(SyncError::BadRate(rate_hz));
    }
    let recs = &stream.records;
    if recs.len() < 2 {
        return Err(SyncError::TooFewSamples(recs.len()));
    }
    let (first, last) = (recs[0].t, recs[recs.len() - 1].t);
    let n = ((last - first) * rate_hz + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = (first + k as f64 / rate_hz).min(last);
        while j + 2 < recs.len() && recs[j + 1].t <= t {
            j += 1;
        }
        let (a, b) = (recs[j], recs[j + 1]);
        let value = if b.t > a.t {
            let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
            a.value + w * (b.value - a.value)
        } else {
            a.value
        };
        out.push(ScalarSample { t, value });
    }
    Ok(SyncedStream::new(stream.source_unit.clone(), out))
}

/// Linear interpolation of a sorted scalar series at `t`, clamped at the ends.
pub fn interpolate(samples: &[ScalarSample], t: f64) -> Option<f64> {
    let first = samples.first()?;
    let last = samples.last()?;
    if t <= first.t {
        return Some(first.value);
    }
    if t >= last.t {
        return Some(last.value);
    }
    let i = samples.partition_point(|s| s.t <= t);
    let (a, b) = (samples[i - 1], samples[i]);
    if b.t > a.t {
        Some(a.value + (t - a.t) / (b.t - a.t) * (b.value - a.value))
    } else {
        Some(a.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchors(f: impl Fn(f64) -> f64) -> Vec<ClockAnchor> {
        (0..60)
            .map(|i| {
                let t_gps = i as f64 * 10.0;
                ClockAnchor {
                    t_unit: f(t_gps),
                    t_gps,
                }
            })
            .collect()
    }

    #[test]
    fn pure_offset() {
        let m = estimate_clock_model(&anchors(|t| t + 2.5)).unwrap();
        assert!((m.offset_s - 2.5).abs() < 1e-12);
        assert!(m.drift_ppm.abs() < 1e-9);
        assert!(m.rms_residual_s < 1e-12);
        assert_eq!(m.n_anchors, 60);
    }

    #[test]
    fn offset_and_drift() {
        let m = estimate_clock_model(&anchors(|t| t * (1.0 + 50e-6) + 1.0)).unwrap();
        assert!((m.offset_s - 1.0).abs() < 1e-9);
        assert!((m.drift_ppm - 50.0).abs() < 1e-6);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(
            estimate_clock_model(&anchors(|t| t)[..1]),
            Err(SyncError::InsufficientAnchors(1))
        );
        let same = vec![
            ClockAnchor { t_unit: 1.0, t_gps: 5.0 },
            ClockAnchor { t_unit: 1.1, t_gps: 5.0 },
        ];
        assert_eq!(estimate_clock_model(&same), Err(SyncError::DegenerateFit));
        assert!(matches!(
            estimate_clock_model(&anchors(|t| t * 1.001)),
            Err(SyncError::DriftOutOfRange(_))
        ));
    }

    #[test]
    fn apply_arithmetic() {
        let s = apply_sync(
            vec![ScalarSample { t: 10.0, value: 0.0 }],
            &ClockModel::new(2.5, 0.0),
            "telemetry",
        );
        assert_eq!(s.records[0].t, 7.5);
        let raw = vec![
            ScalarSample { t: 1.0, value: 1.0 },
            ScalarSample { t: 2.0, value: 2.0 },
        ];
        assert_eq!(apply_sync(raw.clone(), &ClockModel::identity(), "x").records, raw);
        assert!(apply_sync(Vec::<ScalarSample>::new(), &ClockModel::identity(), "x").is_empty());
    }

    #[test]
    fn resample_linear() {
        let s = SyncedStream::new(
            "x",
            vec![
                ScalarSample { t: 0.0, value: 0.0 },
                ScalarSample { t: 1.0, value: 10.0 },
            ],
        );
        let r = resample_uniform(&s, 4.0).unwrap();
        let v: Vec<f64> = r.records.iter().map(|s| s.value).collect();
        assert_eq!(v, vec![0.0, 2.5, 5.0, 7.5, 10.0]);
    }

    #[test]
    fn resample_uniform_is_idempotent() {
        let recs: Vec<_> = (0..50)
            .map(|i| ScalarSample {
                t: i as f64 * 0.5,
                value: (i as f64).sin(),
            })
            .collect();
        let s = SyncedStream::new("x", recs.clone());
        let r = resample_uniform(&s, 2.0).unwrap();
        assert_eq!(r.records.len(), recs.len());
        for (a, b) in r.records.iter().zip(&recs) {
            assert!((a.value - b.value).abs() < 1e-12);
            assert!((a.t - b.t).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_needs_two() {
        let s = SyncedStream::new("x", vec![ScalarSample { t: 0.0, value: 1.0 }]);
        assert_eq!(resample_uniform(&s, 1.0), Err(SyncError::TooFewSamples(1)));
    }
}

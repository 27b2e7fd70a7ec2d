use serde::{Deserialize, Serialize};

use super::events::DetectedEvent;
use super::travel::TravelStats;
use crate::config::Config;
use crate::geo::{haversine, EdgeId};
use crate::ingest::GnssFix;
use crate::time_sync::ScalarSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub trip_id: String,
    pub driver_id: String,
    /// Unix seconds of synchronized time zero.
    pub epoch: i64,
    pub t_start: f64,
    pub t_end: f64,
    pub distance_m: f64,
    #[serde(default)]
    pub matched_edges: Vec<EdgeId>,
    #[serde(default)]
    pub events: Vec<DetectedEvent>,
    #[serde(default)]
    pub streams: Vec<String>,
    #[serde(default)]
    pub travel: TravelStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripParams {
    pub start_kph: f64,
    pub start_sustain_s: f64,
    pub end_kph: f64,
    pub end_sustain_s: f64,
}

impl From<&Config> for TripParams {
    fn from(c: &Config) -> Self {
        Self {
            start_kph: c.trip_start_kph,
            start_sustain_s: c.trip_start_sustain_s,
            end_kph: c.trip_end_kph,
            end_sustain_s: c.trip_end_sustain_s,
        }
    }
}

impl Default for TripParams {
    fn default() -> Self {
        Self::from(&Config::default())
    }
}

/// Moving spans `(t_start, t_end)` of a speed series (km/h).
///
/// A span opens at the first sample of a run above `start_kph` lasting
/// `start_sustain_s`, and closes at the first sample of a run below
/// `end_kph` lasting `end_sustain_s`. A span still open when the series ends
/// closes at the start of its terminal stop, or at the last sample.
pub fn moving_spans(speed_kph: &[ScalarSample], p: &TripParams) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    let mut fast_since: Option<f64> = None;
    let mut stop_since: Option<f64> = None;
    for s in speed_kph {
        match open {
            None => {
                if s.value > p.start_kph {
                    let t0 = *fast_since.get_or_insert(s.t);
                    if s.t - t0 >= p.start_sustain_s {
                        open = Some(t0);
                        stop_since = None;
                    }
                } else {
                    fast_since = None;
                }
            }
            Some(t0) => {
                if s.value < p.end_kph {
                    let ts = *stop_since.get_or_insert(s.t);
                    if s.t - ts >= p.end_sustain_s {
                        out.push((t0, ts));
                        open = None;
                        fast_since = None;
                    }
                } else {
                    stop_since = None;
                }
            }
        }
    }
    if let (Some(t0), Some(last)) = (open, speed_kph.last()) {
        out.push((t0, stop_since.unwrap_or(last.t)));
    }
    out
}

/// Haversine length of the positioned fixes inside `[t0, t1]`.
pub fn path_length(fixes: &[GnssFix], t0: f64, t1: f64) -> f64 {
    let mut prev = None;
    let mut d = 0.0;
    for f in fixes.iter().filter(|f| f.t >= t0 && f.t <= t1) {
        if let Some(p) = f.position {
            if let Some(q) = prev {
                d += haversine(q, p);
            }
            prev = Some(p);
        }
    }
    d
}

/// Trips from synchronized GNSS fixes and OBD speed. A single trip keeps
/// `trip_id`; several are numbered `trip_id-01`, `trip_id-02`, …
pub fn segment_trips(
    trip_id: &str,
    driver_id: &str,
    epoch: i64,
    fixes: &[GnssFix],
    speed_kph: &[ScalarSample],
    p: &TripParams,
) -> Vec<Trip> {
    let spans = moving_spans(speed_kph, p);
    let n = spans.len();
    spans
        .into_iter()
        .enumerate()
        .filter(|(_, (a, b))| b > a)
        .map(|(k, (t_start, t_end))| Trip {
            trip_id: if n == 1 {
                trip_id.to_string()
            } else {
                format!("{trip_id}-{:02}", k + 1)
            },
            driver_id: driver_id.to_string(),
            epoch,
            t_start,
            t_end,
            distance_m: path_length(fixes, t_start, t_end),
            matched_edges: Vec::new(),
            events: Vec::new(),
            streams: Vec::new(),
            travel: TravelStats::default(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LocalProjection;
    use crate::ingest::{FixQuality, GeoPos};

    fn speed(profile: impl Fn(f64) -> f64, secs: f64) -> Vec<ScalarSample> {
        (0..(secs * 10.0) as usize)
            .map(|i| {
                let t = i as f64 * 0.1;
                ScalarSample { t, value: profile(t) }
            })
            .collect()
    }

    fn fixes_at(v_mps: impl Fn(f64) -> f64, secs: f64) -> Vec<GnssFix> {
        let proj = LocalProjection::new(GeoPos { lat: 40.0, lon: -83.0 });
        let mut x = 0.0;
        (0..(secs * 10.0) as usize)
            .map(|i| {
                let t = i as f64 * 0.1;
                x += v_mps(t) * 0.1;
                GnssFix {
                    t,
                    position: Some(proj.to_geo(x, 0.0)),
                    alt_m: 0.0,
                    fix_quality: FixQuality::Gps,
                    hdop: 1.0,
                    n_sats: 8,
                }
            })
            .collect()
    }

    #[test]
    fn single_drive() {
        let v = |t: f64| if (10.0..610.0).contains(&t) { 10.0 } else { 0.0 };
        let trips = segment_trips("T", "D", 0, &fixes_at(v, 700.0), &speed(|t| v(t) * 3.6, 700.0), &TripParams::default());
        assert_eq!(trips.len(), 1);
        assert_eq!(trips[0].trip_id, "T");
        assert!((trips[0].t_start - 10.0).abs() < 0.11);
        assert!((trips[0].t_end - 610.0).abs() < 0.11);
        assert!((trips[0].distance_m - 6000.0).abs() < 2.0, "{}", trips[0].distance_m);
    }

    #[test]
    fn ten_minute_stop_splits() {
        let v = |t: f64| if (10.0..300.0).contains(&t) || (900.0..1200.0).contains(&t) { 10.0 } else { 0.0 };
        let trips = segment_trips("T", "D", 0, &fixes_at(v, 1300.0), &speed(|t| v(t) * 3.6, 1300.0), &TripParams::default());
        assert_eq!(trips.len(), 2);
        assert_eq!(trips[1].trip_id, "T-02");
        assert!((trips[1].t_start - 900.0).abs() < 0.11);
    }

    #[test]
    fn short_stop_and_blip_do_not_split_or_start() {
        let v = |t: f64| match t {
            t if (10.0..200.0).contains(&t) => 10.0,
            t if (200.0..260.0).contains(&t) => 0.0,
            t if (260.0..400.0).contains(&t) => 10.0,
            t if (800.0..805.0).contains(&t) => 10.0,
            _ => 0.0,
        };
        let sp = speed(|t| v(t) * 3.6, 1000.0);
        let spans = moving_spans(&sp, &TripParams::default());
        assert_eq!(spans.len(), 1);
        assert!((spans[0].1 - 400.0).abs() < 0.11);
        assert!(moving_spans(&speed(|_| 0.0, 100.0), &TripParams::default()).is_empty());
    }
}

//! Distance driven, split by road class, time of day and weather.

use serde::{Deserialize, Serialize};

use super::weather::{severe_at, WeatherRecord};
use crate::geo::{haversine, MatchedPath, RoadClass, RoadNetwork};
use crate::ingest::{GeoPos, GnssFix};

/// Distances in whole millimetres so that sums are exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TravelStats {
    pub n_trips: u64,
    pub total_mm: u64,
    pub highway_mm: u64,
    pub night_mm: u64,
    pub severe_weather_mm: u64,
}

pub const MM_PER_MILE: f64 = 1_609_344.0;

impl TravelStats {
    pub fn merge(&self, o: &Self) -> Self {
        Self {
            n_trips: self.n_trips + o.n_trips,
            total_mm: self.total_mm + o.total_mm,
            highway_mm: self.highway_mm + o.highway_mm,
            night_mm: self.night_mm + o.night_mm,
            severe_weather_mm: self.severe_weather_mm + o.severe_weather_mm,
        }
    }

    pub fn miles(&self) -> f64 {
        self.total_mm as f64 / MM_PER_MILE
    }
    pub fn highway_miles(&self) -> f64 {
        self.highway_mm as f64 / MM_PER_MILE
    }
    pub fn night_miles(&self) -> f64 {
        self.night_mm as f64 / MM_PER_MILE
    }
    pub fn severe_weather_miles(&self) -> f64 {
        self.severe_weather_mm as f64 / MM_PER_MILE
    }
}

/// Local night window in seconds after midnight. `start > end` wraps
/// through midnight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NightWindow {
    pub start_s: f64,
    pub end_s: f64,
    pub utc_offset_h: f64,
}

impl NightWindow {
    pub fn from_config(c: &crate::Config) -> Self {
        let (start_s, end_s) = c.night_window_s();
        Self {
            start_s,
            end_s,
            utc_offset_h: c.utc_offset_h,
        }
    }

    pub fn contains(&self, unix_t: f64) -> bool {
        let local = (unix_t + self.utc_offset_h * 3600.0).rem_euclid(86_400.0);
        if self.start_s <= self.end_s {
            local >= self.start_s && local < self.end_s
        } else {
            local >= self.start_s || local < self.end_s
        }
    }
}

/// Travel statistics of one trip over its fixes in `[t0, t1]`.
///
/// Each consecutive pair of positioned fixes contributes its haversine
/// length to the total. The same length counts as highway when the earlier
/// fix is matched to a highway edge, as night when the pair's midpoint time
/// falls in the night window, and as severe weather when a severe record
/// covers the midpoint.
#[allow(clippy::too_many_arguments)]
pub fn travel_pattern(
    fixes: &[GnssFix],
    t0: f64,
    t1: f64,
    epoch: i64,
    matched: Option<&MatchedPath>,
    network: &RoadNetwork,
    weather: &[WeatherRecord],
    night: &NightWindow,
) -> TravelStats {
    let mut edge_of = std::collections::HashMap::new();
    if let Some(m) = matched {
        for a in &m.assignments {
            edge_of.insert(a.fix_index, a.edge);
        }
    }
    let pts: Vec<(usize, f64, GeoPos)> = fixes
        .iter()
        .enumerate()
        .filter(|(_, f)| f.t >= t0 && f.t <= t1)
        .filter_map(|(i, f)| f.position.map(|p| (i, f.t, p)))
        .collect();
    let mut out = TravelStats {
        n_trips: 1,
        ..TravelStats::default()
    };
    for w in pts.windows(2) {
        let (i, ta, a) = w[0];
        let (_, tb, b) = w[1];
        let mm = (haversine(a, b) * 1000.0).round() as u64;
        out.total_mm += mm;
        if edge_of
            .get(&i)
            .is_some_and(|&e| network.edge(e).road_class == RoadClass::Highway)
        {
            out.highway_mm += mm;
        }
        let t_mid = epoch as f64 + 0.5 * (ta + tb);
        if night.contains(t_mid) {
            out.night_mm += mm;
        }
        let mid = GeoPos::new(0.5 * (a.lat + b.lat), 0.5 * (a.lon + b.lon));
        if severe_at(weather, mid, t_mid) {
            out.severe_weather_mm += mm;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::WeatherCondition;
    use crate::geo::LocalProjection;
    use crate::ingest::FixQuality;
    use crate::sim::gen_network;

    fn straight(n: usize, step_m: f64) -> Vec<GnssFix> {
        let proj = LocalProjection::new(GeoPos::new(40.0, -83.0));
        (0..n)
            .map(|i| GnssFix {
                t: i as f64,
                position: Some(proj.to_geo(i as f64 * step_m, 0.0)),
                alt_m: 0.0,
                fix_quality: FixQuality::Gps,
                hdop: 1.0,
                n_sats: 8,
            })
            .collect()
    }

    fn night() -> NightWindow {
        NightWindow {
            start_s: 21.0 * 3600.0,
            end_s: 6.0 * 3600.0,
            utc_offset_h: 0.0,
        }
    }

    #[test]
    fn night_window_wraps() {
        let n = night();
        assert!(n.contains(2.0 * 3600.0));
        assert!(n.contains(22.0 * 3600.0));
        assert!(!n.contains(12.0 * 3600.0));
        let shifted = NightWindow { utc_offset_h: -5.0, ..n };
        // 03:00Z is 22:00 local.
        assert!(shifted.contains(3.0 * 3600.0));
        assert!(!shifted.contains(12.0 * 3600.0));
    }

    #[test]
    fn ten_km_at_two_am_is_all_night_no_highway() {
        let net = gen_network(3, 3, 300.0, &[], 0);
        let fixes = straight(1001, 10.0);
        let s = travel_pattern(&fixes, 0.0, 1e9, 2 * 3600, None, &net, &[], &night());
        assert!((s.total_mm as f64 - 1e7).abs() < 1e7 * 1e-3);
        assert_eq!(s.night_mm, s.total_mm);
        assert_eq!(s.highway_mm, 0);
        assert_eq!(s.severe_weather_mm, 0);
    }

    #[test]
    fn half_covered_by_rain() {
        let net = gen_network(3, 3, 300.0, &[], 0);
        let fixes = straight(1001, 10.0);
        let epoch = 12 * 3600;
        let rec = WeatherRecord {
            condition: WeatherCondition::SevereRain,
            min_lat: 39.0,
            min_lon: -84.0,
            max_lat: 41.0,
            max_lon: -82.0,
            t_start: 0,
            t_end: epoch + 500,
        };
        let s = travel_pattern(&fixes, 0.0, 1e9, epoch, None, &net, &[rec], &night());
        // Per-fix brute force: pairs whose midpoint precedes t = 500.
        let brute: u64 = fixes
            .windows(2)
            .filter(|w| 0.5 * (w[0].t + w[1].t) < 500.0)
            .map(|w| (haversine(w[0].position.unwrap(), w[1].position.unwrap()) * 1000.0).round() as u64)
            .sum();
        assert_eq!(s.severe_weather_mm, brute);
        assert!((s.severe_weather_mm as f64 - s.total_mm as f64 / 2.0).abs() <= 10_000.0);
    }
}

//! Multi-day driving schedules for one driver.

use chrono::{NaiveDate, NaiveTime};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{build_script, rng_stream, DriveScript, ScenarioSpec, SimError};
use crate::fusion::{WeatherCondition, WeatherRecord};
use crate::geo::RoadNetwork;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetPlan {
    pub driver_id: String,
    pub start_date: NaiveDate,
    pub days: u32,
    pub trips_per_day: u32,
    pub seed: u64,
    /// Local time offset used when drawing departure hours.
    pub utc_offset_h: f64,
    /// Share of trips departing at night.
    pub night_share: f64,
    /// Share of days with a severe-weather record.
    pub severe_weather_share: f64,
    pub noise: crate::sim::NoiseSpec,
}

impl Default for FleetPlan {
    fn default() -> Self {
        Self {
            driver_id: "D1".into(),
            start_date: NaiveDate::from_ymd_opt(2026, 3, 2).expect("valid date"),
            days: 14,
            trips_per_day: 2,
            seed: 0,
            utc_offset_h: 0.0,
            night_share: 0.2,
            severe_weather_share: 0.3,
            noise: crate::sim::NoiseSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetTrip {
    pub date: NaiveDate,
    pub script: DriveScript,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetSchedule {
    pub trips: Vec<FleetTrip>,
    pub weather: Vec<WeatherRecord>,
}

/// Scripts for every trip of the plan plus the weather records covering it.
pub fn simulate_fleet(plan: &FleetPlan, network: &RoadNetwork) -> Result<FleetSchedule, SimError> {
    let mut rng = rng_stream(plan.seed, 8);
    let (mut lat0, mut lon0, mut lat1, mut lon1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for n in network.nodes() {
        lat0 = lat0.min(n.lat);
        lon0 = lon0.min(n.lon);
        lat1 = lat1.max(n.lat);
        lon1 = lon1.max(n.lon);
    }
    let offset_s = (plan.utc_offset_h * 3600.0).round() as i64;
    let mut trips = Vec::new();
    let mut weather = Vec::new();
    let mut n_trip = 0u64;
    for day in 0..plan.days {
        let date = plan.start_date + chrono::Days::new(day as u64);
        let midnight_local = date.and_time(NaiveTime::MIN).and_utc().timestamp() - offset_s;
        let mut hours: Vec<u32> = (0..plan.trips_per_day)
            .map(|_| {
                if rng.random_bool(plan.night_share.clamp(0.0, 1.0)) {
                    if rng.random_bool(0.5) {
                        22
                    } else {
                        4
                    }
                } else {
                    rng.random_range(7..19)
                }
            })
            .collect();
        hours.sort_unstable();
        hours.dedup();
        for h in hours {
            n_trip += 1;
            let epoch = midnight_local + h as i64 * 3600 + rng.random_range(0..40) as i64 * 60;
            let spec = ScenarioSpec {
                trip_id: format!("{}-{}-{:02}", plan.driver_id, date.format("%Y%m%d"), h),
                driver_id: plan.driver_id.clone(),
                epoch,
                min_base_edges: 6,
                max_base_edges: 8,
                harsh_brakes: rng.random_range(0..=2),
                potholes: rng.random_range(0..=1),
                lead_brakes: rng.random_range(0..=1),
                distractions: rng.random_range(0..=2),
                eyes_closed: rng.random_range(0..=1),
                lane_crossings: rng.random_range(0..=2),
                near_collisions: rng.random_range(0..=1),
                red_light_stops: rng.random_range(0..=1),
                stop_sign_stops: rng.random_range(0..=1),
                getting_lost: rng.random_bool(0.1),
                noise: plan.noise,
                ..ScenarioSpec::default()
            };
            let script = build_script(plan.seed.wrapping_mul(1_000_003).wrapping_add(n_trip), network, &spec)?;
            trips.push(FleetTrip { date, script });
        }
        if rng.random_bool(plan.severe_weather_share.clamp(0.0, 1.0)) {
            let start_h = rng.random_range(0..20) as i64;
            let condition = if rng.random_bool(0.5) {
                WeatherCondition::SevereRain
            } else {
                WeatherCondition::Fog
            };
            weather.push(WeatherRecord {
                condition,
                min_lat: lat0,
                min_lon: lon0,
                max_lat: lat1,
                max_lon: lon1,
                t_start: midnight_local + start_h * 3600,
                t_end: midnight_local + (start_h + rng.random_range(2..6)) * 3600,
            });
        }
    }
    Ok(FleetSchedule { trips, weather })
}

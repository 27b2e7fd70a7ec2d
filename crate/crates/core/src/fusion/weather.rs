//! Weather records joined against fix positions and times.

use serde::{Deserialize, Serialize};

use crate::ingest::GeoPos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherCondition {
    Clear,
    Rain,
    SevereRain,
    Fog,
}

impl WeatherCondition {
    pub fn is_severe(self) -> bool {
        matches!(self, Self::SevereRain | Self::Fog)
    }
}

/// Condition over a lat/lon box during `[t_start, t_end)` unix seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub condition: WeatherCondition,
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
    pub t_start: i64,
    pub t_end: i64,
}

impl WeatherRecord {
    pub fn covers(&self, p: GeoPos, unix_t: f64) -> bool {
        p.lat >= self.min_lat
            && p.lat <= self.max_lat
            && p.lon >= self.min_lon
            && p.lon <= self.max_lon
            && unix_t >= self.t_start as f64
            && unix_t < self.t_end as f64
    }
}

pub fn severe_at(records: &[WeatherRecord], p: GeoPos, unix_t: f64) -> bool {
    records.iter().any(|r| r.condition.is_severe() && r.covers(p, unix_t))
}

pub fn parse_weather_json(text: &str) -> Result<Vec<WeatherRecord>, serde_json::Error> {
    serde_json::from_str(text)
}

//! Pipeline thresholds.
//!
//! The configuration file is flat TOML, one `key = value` per threshold.
//! Unknown keys are rejected; missing keys take the defaults below. Units
//! are part of each key's name.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("configuration key `{key}` has the wrong type: {message}")]
    TypeMismatch { key: String, message: String },
    #[error("configuration is not valid TOML: {0}")]
    Syntax(String),
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    // stream validation / sampling
    pub validation_gap_s: f64,
    pub adaptive_sampling: bool,
    pub sampling_base_period_s: f64,
    pub sampling_burst_radius_s: f64,
    pub sampling_interest_accel: f64,

    // motion events
    pub gravity_lowpass_hz: f64,
    /// Device x-axis yaw relative to vehicle forward; absent means estimate
    /// from OBD speed.
    pub mounting_yaw_deg: Option<f64>,
    pub harsh_accel_threshold: f64,
    pub harsh_brake_threshold: f64,
    pub harsh_corner_threshold: f64,
    pub harsh_min_duration_s: f64,
    pub harsh_hysteresis: f64,
    pub harsh_merge_gap_s: f64,
    pub pothole_window_s: f64,
    pub pothole_z_thresh: f64,
    pub pothole_highpass_hz: f64,
    pub speed_mismatch_kph: f64,
    pub speed_mismatch_s: f64,
    pub speed_smoothing_s: f64,

    // vision episodes
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

    // map matching
    pub spatial_cell_m: f64,
    pub match_candidates: usize,
    pub match_max_distance_m: f64,
    pub gps_sigma_m: f64,
    pub rtk_sigma_m: f64,
    pub detour_ratio_threshold: f64,
    pub lane_half_width_m: f64,
    pub lane_deviation_min_s: f64,

    // trips and fusion
    pub trip_start_kph: f64,
    pub trip_start_sustain_s: f64,
    pub trip_end_kph: f64,
    pub trip_end_sustain_s: f64,
    pub reaction_max_window_s: f64,
    pub reaction_brake_onset: f64,
    pub red_light_advance_m: f64,
    pub red_light_hold_s: f64,
    pub stop_sign_min_kph: f64,
    pub stop_sign_window_s: f64,
    pub braking_lookback_s: f64,
    pub night_start: String,
    pub night_end: String,
    pub utc_offset_h: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            validation_gap_s: 1.0,
            adaptive_sampling: false,
            sampling_base_period_s: 0.1,
            sampling_burst_radius_s: 2.0,
            sampling_interest_accel: 2.0,

            gravity_lowpass_hz: 0.2,
            mounting_yaw_deg: None,
            harsh_accel_threshold: 3.0,
            harsh_brake_threshold: -3.0,
            harsh_corner_threshold: 3.5,
            harsh_min_duration_s: 0.3,
            harsh_hysteresis: 0.8,
            harsh_merge_gap_s: 1.0,
            pothole_window_s: 0.5,
            pothole_z_thresh: 6.0,
            pothole_highpass_hz: 1.0,
            speed_mismatch_kph: 10.0,
            speed_mismatch_s: 5.0,
            speed_smoothing_s: 1.0,

            perclos_window_s: 60.0,
            eyes_closed_min_duration_s: 0.5,
            distraction_yaw_thresh_deg: 30.0,
            distraction_min_duration_s: 2.0,
            mounting_calibration_s: 60.0,
            yawn_min_duration_s: 1.5,
            lane_crossing_merge_s: 1.0,
            near_collision_distance_m: 8.0,
            near_collision_merge_s: 1.0,
            encounter_gap_s: 5.0,
            frame_gap_s: 0.5,

            spatial_cell_m: 250.0,
            match_candidates: 8,
            match_max_distance_m: 200.0,
            gps_sigma_m: 4.9,
            rtk_sigma_m: 0.03,
            detour_ratio_threshold: 1.6,
            lane_half_width_m: 1.8,
            lane_deviation_min_s: 1.0,

            trip_start_kph: 3.0,
            trip_start_sustain_s: 10.0,
            trip_end_kph: 1.0,
            trip_end_sustain_s: 300.0,
            reaction_max_window_s: 5.0,
            reaction_brake_onset: -1.0,
            red_light_advance_m: 10.0,
            red_light_hold_s: 3.0,
            stop_sign_min_kph: 2.0,
            stop_sign_window_s: 10.0,
            braking_lookback_s: 3.0,
            night_start: "21:00".into(),
            night_end: "06:00".into(),
            utc_offset_h: 0.0,
        }
    }
}

/// Every accepted key, in declaration order.
pub fn known_keys() -> Vec<String> {
    match toml::Value::try_from(Config::default()) {
        Ok(toml::Value::Table(t)) => {
            let mut keys: Vec<String> = t.keys().cloned().collect();
            // `mounting_yaw_deg` defaults to absent and is not serialized.
            keys.push("mounting_yaw_deg".into());
            keys.sort();
            keys
        }
        _ => unreachable!("config serializes to a table"),
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
        let known = known_keys();
        for key in table.keys() {
            if !known.contains(key) {
                return Err(ConfigError::UnknownKey(key.clone()));
            }
        }
        // Deserialize key by key so type errors can name the offending key.
        let defaults = toml::Value::try_from(Config::default()).expect("serializable");
        let mut merged = defaults.as_table().cloned().unwrap_or_default();
        for (k, v) in table {
            let mut probe = merged.clone();
            probe.insert(k.clone(), v.clone());
            if let Err(e) = toml::Value::Table(probe).try_into::<Config>() {
                return Err(ConfigError::TypeMismatch {
                    key: k,
                    message: e.message().to_string(),
                });
            }
            merged.insert(k, v);
        }
        let cfg: Config = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, message: &str| ConfigError::InvalidValue {
            key: key.into(),
            message: message.into(),
        };
        for (key, v) in [
            ("harsh_accel_threshold", self.harsh_accel_threshold),
            ("harsh_corner_threshold", self.harsh_corner_threshold),
            ("harsh_min_duration_s", self.harsh_min_duration_s),
            ("pothole_window_s", self.pothole_window_s),
            ("sampling_base_period_s", self.sampling_base_period_s),
            ("spatial_cell_m", self.spatial_cell_m),
            ("perclos_window_s", self.perclos_window_s),
            ("gps_sigma_m", self.gps_sigma_m),
            ("rtk_sigma_m", self.rtk_sigma_m),
        ] {
            if !(v > 0.0) {
                return Err(bad(key, "must be positive"));
            }
        }
        if !(self.harsh_brake_threshold < 0.0) {
            return Err(bad("harsh_brake_threshold", "must be negative"));
        }
        if !(self.harsh_hysteresis > 0.0 && self.harsh_hysteresis <= 1.0) {
            return Err(bad("harsh_hysteresis", "must be in (0, 1]"));
        }
        if self.match_candidates == 0 {
            return Err(bad("match_candidates", "must be at least 1"));
        }
        parse_clock(&self.night_start).ok_or_else(|| bad("night_start", "expected HH:MM"))?;
        parse_clock(&self.night_end).ok_or_else(|| bad("night_end", "expected HH:MM"))?;
        Ok(())
    }

    /// Night window as seconds after local midnight `(start, end)`.
    pub fn night_window_s(&self) -> (f64, f64) {
        (
            parse_clock(&self.night_start).unwrap_or(21.0 * 3600.0),
            parse_clock(&self.night_end).unwrap_or(6.0 * 3600.0),
        )
    }
}

fn parse_clock(s: &str) -> Option<f64> {
    let (h, m) = s.split_once(':')?;
    let (h, m): (u32, u32) = (h.parse().ok()?, m.parse().ok()?);
    (h < 24 && m < 60).then(|| (h * 3600 + m * 60) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_default() {
        assert_eq!(Config::from_toml_str("").unwrap(), Config::default());
    }

    #[test]
    fn override_value() {
        let c = Config::from_toml_str("harsh_brake_threshold = -2.0\nmounting_yaw_deg = 90.0").unwrap();
        assert_eq!(c.harsh_brake_threshold, -2.0);
        assert_eq!(c.mounting_yaw_deg, Some(90.0));
        assert_eq!(c.harsh_accel_threshold, 3.0);
    }

    #[test]
    fn unknown_key_named() {
        assert_eq!(
            Config::from_toml_str("harsh_brake_treshold = -2.0"),
            Err(ConfigError::UnknownKey("harsh_brake_treshold".into()))
        );
    }

    #[test]
    fn type_mismatch_named() {
        let e = Config::from_toml_str("pothole_window_s = \"wide\"").unwrap_err();
        assert!(matches!(e, ConfigError::TypeMismatch { ref key, .. } if key == "pothole_window_s"), "{e:?}");
    }

    #[test]
    fn invalid_values() {
        assert!(matches!(
            Config::from_toml_str("harsh_brake_threshold = 2.0"),
            Err(ConfigError::InvalidValue { .. })
        ));
        assert!(matches!(
            Config::from_toml_str("night_start = \"25:00\""),
            Err(ConfigError::InvalidValue { .. })
        ));
    }

    #[test]
    fn echo_round_trips() {
        let c = Config {
            mounting_yaw_deg: Some(12.0),
            ..Config::default()
        };
        assert_eq!(Config::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }
}

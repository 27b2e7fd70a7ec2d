//! Cross-stream fusion, trips and Driver Behavior Index reports.

pub mod dbi;
pub mod events;
pub mod travel;
pub mod trips;
pub mod weather;

pub use dbi::{compute_dbi, daily_reports, index_csv, reports_csv, DbiReport, DbiStats, Period, PeriodKind};
pub use events::{DetectedEvent, DetectedKind, Stimulus};
pub use travel::{travel_pattern, NightWindow, TravelStats};
pub use trips::{segment_trips, Trip, TripParams};
pub use weather::{severe_at, WeatherCondition, WeatherRecord};

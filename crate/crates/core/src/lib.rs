//! In-vehicle sensing pipeline: raw stream ingest, clock synchronization,
//! telematics and vision event detection, map matching, and per-driver
//! behavior indices.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`ingest`] parses the four raw stream formats into typed records.
//! * [`time_sync`] fits unit clocks against GPS time and re-times streams.
//! * [`motion`] detects harsh manoeuvres and pothole strikes from the IMU.
//! * [`episodes`] turns per-frame camera detections into episodes.
//! * [`geo`] holds the road network, spatial index, map matcher and routing.
//! * [`fusion`] combines everything into detected events and DBI reports.
//! * [`sim`] generates synthetic drives with known ground truth.
//! * [`pipeline`] runs all stages over one trip's streams in memory.

pub mod config;
pub mod episodes;
pub mod fusion;
pub mod geo;
pub mod ingest;
pub mod motion;
pub mod pipeline;
pub mod sim;
pub mod time_sync;

pub use config::Config;
pub use ingest::Timestamped;

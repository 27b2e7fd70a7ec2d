//! Road network, spatial index, routing and map matching.

pub mod index;
pub mod matching;
pub mod measures;
pub mod network;
pub mod routing;

pub use index::SpatialIndex;
pub use matching::{match_trajectory, Assignment, MatchParams, MatchedPath};
pub use measures::{detour_ratio, lane_deviation, DetourResult, LaneDeviationReport};
pub use network::{Edge, EdgeId, Node, NodeId, RoadClass, RoadNetwork};
pub use routing::{distances_from, distances_to, shortest_path, Route};

use thiserror::Error;

use crate::ingest::GeoPos;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("road network is empty")]
    EmptyNetwork,
    #[error("no node with id {0}")]
    UnknownNode(u32),
    #[error("no path from node {from} to node {to}")]
    Unreachable { from: u32, to: u32 },
    #[error("no fix lies within {0} m of the network")]
    NoCandidates(f64),
    #[error("need at least 2 positioned fixes, got {0}")]
    TooFewFixes(usize),
    #[error("trip starts and ends at node {node}; loop length {loop_length_m:.1} m")]
    DegenerateTrip { node: u32, loop_length_m: f64 },
    #[error("matched path is empty")]
    EmptyPath,
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
}

/// Great-circle distance in meters.
pub fn haversine(a: GeoPos, b: GeoPos) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = p2 - p1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Equirectangular local tangent plane around a reference point; x east,
/// y north, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProjection {
    pub origin: GeoPos,
    cos_lat: f64,
}

impl LocalProjection {
    pub fn new(origin: GeoPos) -> Self {
        Self {
            origin,
            cos_lat: origin.lat.to_radians().cos(),
        }
    }

    pub fn to_xy(&self, p: GeoPos) -> (f64, f64) {
        (
            EARTH_RADIUS_M * (p.lon - self.origin.lon).to_radians() * self.cos_lat,
            EARTH_RADIUS_M * (p.lat - self.origin.lat).to_radians(),
        )
    }

    pub fn to_geo(&self, x: f64, y: f64) -> GeoPos {
        GeoPos::new(
            self.origin.lat + (y / EARTH_RADIUS_M).to_degrees(),
            self.origin.lon + (x / (EARTH_RADIUS_M * self.cos_lat)).to_degrees(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haversine_identity_and_equator_degree() {
        let p = GeoPos::new(10.0, 20.0);
        assert_eq!(haversine(p, p), 0.0);
        // 2πR/360
        let expected = 2.0 * std::f64::consts::PI * EARTH_RADIUS_M / 360.0;
        let d = haversine(GeoPos::new(0.0, 0.0), GeoPos::new(0.0, 1.0));
        assert!((d - expected).abs() < 1e-6, "{d}");
        assert!((d - 111_195.0).abs() < 1.0);
    }

    #[test]
    fn projection_round_trip() {
        let proj = LocalProjection::new(GeoPos::new(40.0, -83.0));
        let p = GeoPos::new(40.01, -82.99);
        let (x, y) = proj.to_xy(p);
        let q = proj.to_geo(x, y);
        assert!((q.lat - p.lat).abs() < 1e-12 && (q.lon - p.lon).abs() < 1e-12);
        // Short distances agree with haversine to well under 0.1%.
        let d = (x * x + y * y).sqrt();
        assert!((d - haversine(proj.origin, p)).abs() / d < 1e-3);
    }
}

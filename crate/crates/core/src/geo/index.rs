use std::sync::Arc;

use super::network::{EdgeId, EdgeProjection, RoadNetwork};
use super::GeoError;
use crate::ingest::GeoPos;

/// Uniform grid over the network bounding box. Each cell lists the edges
/// whose polyline bounding box intersects it.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    network: Arc<RoadNetwork>,
    cell_m: f64,
    min: (f64, f64),
    nx: i64,
    ny: i64,
    cells: Vec<Vec<EdgeId>>,
}

/// Slack added to edge bounding boxes so boundary rounding cannot drop an edge.
const BBOX_SLACK_M: f64 = 1e-6;

impl SpatialIndex {
    pub fn build(network: Arc<RoadNetwork>, cell_m: f64) -> Result<Self, GeoError> {
        assert!(cell_m > 0.0, "cell size must be positive");
        let (min, max) = network.bbox_xy().ok_or(GeoError::EmptyNetwork)?;
        let nx = (((max.0 - min.0) / cell_m).floor() as i64 + 1).max(1);
        let ny = (((max.1 - min.1) / cell_m).floor() as i64 + 1).max(1);
        let mut cells = vec![Vec::new(); (nx * ny) as usize];
        for e in network.edges() {
            let pts = network.edge_xy(e.id);
            let (mut lo, mut hi) = (pts[0], pts[0]);
            for &(x, y) in pts {
                lo = (lo.0.min(x), lo.1.min(y));
                hi = (hi.0.max(x), hi.1.max(y));
            }
            let c0 = Self::cell_of(min, cell_m, lo.0 - BBOX_SLACK_M, lo.1 - BBOX_SLACK_M);
            let c1 = Self::cell_of(min, cell_m, hi.0 + BBOX_SLACK_M, hi.1 + BBOX_SLACK_M);
            for cy in c0.1.max(0)..=c1.1.min(ny - 1) {
                for cx in c0.0.max(0)..=c1.0.min(nx - 1) {
                    cells[(cy * nx + cx) as usize].push(e.id);
                }
            }
        }
        Ok(Self {
            network,
            cell_m,
            min,
            nx,
            ny,
            cells,
        })
    }

    fn cell_of(min: (f64, f64), cell_m: f64, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - min.0) / cell_m).floor() as i64,
            ((y - min.1) / cell_m).floor() as i64,
        )
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        &self.network
    }

    pub fn cell_m(&self) -> f64 {
        self.cell_m
    }

    pub fn dims(&self) -> (i64, i64) {
        (self.nx, self.ny)
    }

    /// Edges listed in grid cells that overlap the square of half-width
    /// `radius_m` around `p`. Empty when `p` is far outside the grid.
    pub fn candidates(&self, p: GeoPos, radius_m: f64) -> Vec<EdgeId> {
        let (x, y) = self.network.projection().to_xy(p);
        let c0 = Self::cell_of(self.min, self.cell_m, x - radius_m, y - radius_m);
        let c1 = Self::cell_of(self.min, self.cell_m, x + radius_m, y + radius_m);
        let mut out = Vec::new();
        for cy in c0.1.max(0)..=c1.1.min(self.ny - 1) {
            for cx in c0.0.max(0)..=c1.0.min(self.nx - 1) {
                out.extend_from_slice(&self.cells[(cy * self.nx + cx) as usize]);
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// The `k` nearest edges to `p`, ordered by distance then edge id.
    pub fn nearest_edges(&self, p: GeoPos, k: usize) -> Vec<EdgeProjection> {
        assert!(k >= 1, "k must be at least 1");
        let (x, y) = self.network.projection().to_xy(p);
        let (cx, cy) = Self::cell_of(self.min, self.cell_m, x, y);
        // Chebyshev ring distance from the query cell to the nearest grid cell.
        let gap = |c: i64, n: i64| if c < 0 { -c } else if c >= n { c - n + 1 } else { 0 };
        let r0 = gap(cx, self.nx).max(gap(cy, self.ny));
        let r_all = [cx, self.nx - 1 - cx, cy, self.ny - 1 - cy]
            .iter()
            .map(|d| d.abs())
            .max()
            .unwrap_or(0)
            .max(r0);
        if r0 > 4 {
            // Far outside the grid; the scan is cheaper than the ring walk.
            return exhaustive_nearest(&self.network, p, k);
        }
        let mut seen = vec![false; self.network.edges().len()];
        let mut best: Vec<EdgeProjection> = Vec::new();
        for r in r0..=r_all {
            for (ix, iy) in ring(cx, cy, r) {
                if ix < 0 || iy < 0 || ix >= self.nx || iy >= self.ny {
                    continue;
                }
                for &e in &self.cells[(iy * self.nx + ix) as usize] {
                    if !seen[e.0 as usize] {
                        seen[e.0 as usize] = true;
                        best.push(self.network.project_xy(e, x, y));
                    }
                }
            }
            best.sort_by(cmp_projection);
            best.truncate(k);
            // Unseen edges lie entirely outside the (2r+1)² block around the
            // query cell, so they are at least `r·cell` away.
            if best.len() == k && best[k - 1].distance_m < r as f64 * self.cell_m {
                break;
            }
        }
        best
    }
}

fn ring(cx: i64, cy: i64, r: i64) -> Vec<(i64, i64)> {
    if r == 0 {
        return vec![(cx, cy)];
    }
    let mut out = Vec::with_capacity((8 * r) as usize);
    for dx in -r..=r {
        out.push((cx + dx, cy - r));
        out.push((cx + dx, cy + r));
    }
    for dy in -r + 1..r {
        out.push((cx - r, cy + dy));
        out.push((cx + r, cy + dy));
    }
    out
}

fn cmp_projection(a: &EdgeProjection, b: &EdgeProjection) -> std::cmp::Ordering {
    a.distance_m.total_cmp(&b.distance_m).then(a.edge.cmp(&b.edge))
}

/// Brute-force nearest edges over the whole network.
pub fn exhaustive_nearest(network: &RoadNetwork, p: GeoPos, k: usize) -> Vec<EdgeProjection> {
    let (x, y) = network.projection().to_xy(p);
    let mut all: Vec<EdgeProjection> = network.edges().iter().map(|e| network.project_xy(e.id, x, y)).collect();
    all.sort_by(cmp_projection);
    all.truncate(k);
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::network::{Edge, Node, NodeId, RoadClass};
    use crate::geo::{haversine, LocalProjection};

    fn net_from_segments(segs: &[((f64, f64), (f64, f64))]) -> RoadNetwork {
        let proj = LocalProjection::new(GeoPos::new(40.0, -83.0));
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (i, (a, b)) in segs.iter().enumerate() {
            let (pa, pb) = (proj.to_geo(a.0, a.1), proj.to_geo(b.0, b.1));
            nodes.push(Node { id: NodeId(2 * i as u32), lat: pa.lat, lon: pa.lon });
            nodes.push(Node { id: NodeId(2 * i as u32 + 1), lat: pb.lat, lon: pb.lon });
            edges.push(Edge {
                id: EdgeId(i as u32),
                from: NodeId(2 * i as u32),
                to: NodeId(2 * i as u32 + 1),
                polyline: vec![[pa.lat, pa.lon], [pb.lat, pb.lon]],
                length_m: haversine(pa, pb),
                road_class: RoadClass::Local,
                speed_limit_kph: 40.0,
            });
        }
        RoadNetwork::new(nodes, edges).unwrap()
    }

    #[test]
    fn single_edge_listed_in_overlapping_cells() {
        let net = Arc::new(net_from_segments(&[((0.0, 0.0), (600.0, 0.0))]));
        let idx = SpatialIndex::build(net, 250.0).unwrap();
        assert_eq!(idx.dims(), (3, 1));
        assert!(idx.cells.iter().all(|c| c == &vec![EdgeId(0)]));
    }

    #[test]
    fn empty_network_rejected() {
        let net = Arc::new(RoadNetwork::new(vec![], vec![]).unwrap());
        assert_eq!(SpatialIndex::build(net, 250.0).unwrap_err(), GeoError::EmptyNetwork);
    }

    #[test]
    fn point_on_edge_and_tie_rule() {
        let net = Arc::new(net_from_segments(&[
            ((0.0, 10.0), (500.0, 10.0)),
            ((0.0, -10.0), (500.0, -10.0)),
        ]));
        let idx = SpatialIndex::build(net.clone(), 250.0).unwrap();
        let on = net.projection().to_geo(200.0, 10.0);
        let r = idx.nearest_edges(on, 1);
        assert_eq!(r[0].edge, EdgeId(0));
        assert!(r[0].distance_m < 1e-6);
        let mid = net.projection().to_geo(250.0, 0.0);
        let r = idx.nearest_edges(mid, 2);
        assert_eq!((r[0].edge, r[1].edge), (EdgeId(0), EdgeId(1)));
    }

    #[test]
    fn far_query_falls_back() {
        let net = Arc::new(net_from_segments(&[((0.0, 0.0), (100.0, 0.0)), ((0.0, 50.0), (100.0, 50.0))]));
        let idx = SpatialIndex::build(net.clone(), 250.0).unwrap();
        let far = net.projection().to_geo(50.0, 50_000.0);
        assert!(idx.candidates(far, 200.0).is_empty());
        let r = idx.nearest_edges(far, 1);
        assert_eq!(r[0].edge, EdgeId(1));
        assert_eq!(r, exhaustive_nearest(&net, far, 1));
    }
}

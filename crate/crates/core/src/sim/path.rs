//! Driven path geometry: node-to-node straight legs with circular arcs
//! cut into every corner.

use super::SimError;
use crate::geo::{EdgeId, NodeId, RoadNetwork};

#[derive(Debug, Clone, Copy)]
enum Piece {
    Line {
        s0: f64,
        len: f64,
        p0: (f64, f64),
        dir: (f64, f64),
    },
    Arc {
        s0: f64,
        len: f64,
        center: (f64, f64),
        radius: f64,
        /// Angle of the start point as seen from the center.
        phi0: f64,
        /// +1 counter-clockwise (left turn), −1 clockwise.
        sign: f64,
    },
}

impl Piece {
    fn s0(&self) -> f64 {
        match *self {
            Piece::Line { s0, .. } | Piece::Arc { s0, .. } => s0,
        }
    }
}

/// Pose along the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians counter-clockwise from east.
    pub heading: f64,
    /// Signed curvature, + left.
    pub curvature: f64,
}

#[derive(Debug, Clone)]
pub struct PathGeometry {
    pieces: Vec<Piece>,
    /// Arc-length position of each route node (corner midpoint for turns).
    pub node_s: Vec<f64>,
    /// `(s_start, s_end)` of each corner arc.
    pub arcs: Vec<(f64, f64)>,
    /// Whether the path turns at each node.
    pub turns: Vec<bool>,
    pub edges: Vec<EdgeId>,
    pub nodes: Vec<NodeId>,
    pub length: f64,
}

impl PathGeometry {
    pub fn new(network: &RoadNetwork, nodes: &[NodeId], turn_radius_m: f64) -> Result<Self, SimError> {
        if nodes.len() < 2 {
            return Err(SimError::InvalidRoute("route needs at least two nodes".into()));
        }
        let proj = network.projection();
        let mut edges = Vec::with_capacity(nodes.len() - 1);
        for w in nodes.windows(2) {
            let e = network
                .edge_between(w[0], w[1])
                .ok_or_else(|| SimError::InvalidRoute(format!("no edge from node {} to node {}", w[0].0, w[1].0)))?;
            edges.push(e);
        }
        let pts: Vec<(f64, f64)> = nodes.iter().map(|&n| proj.to_xy(network.node(n).pos())).collect();
        let n = pts.len();
        let unit = |a: (f64, f64), b: (f64, f64)| {
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let l = dx.hypot(dy);
            ((dx / l, dy / l), l)
        };
        // Tangent length cut from each side of every corner.
        let mut cut = vec![0.0; n];
        let mut angle = vec![0.0; n];
        for i in 1..n - 1 {
            let (d0, _) = unit(pts[i - 1], pts[i]);
            let (d1, _) = unit(pts[i], pts[i + 1]);
            let cross = d0.0 * d1.1 - d0.1 * d1.0;
            let dotp = d0.0 * d1.0 + d0.1 * d1.1;
            let theta = cross.atan2(dotp);
            if theta.abs() > std::f64::consts::PI - 1e-3 {
                return Err(SimError::InvalidRoute(format!("U-turn at route node {}", nodes[i].0)));
            }
            if theta.abs() > 1e-6 {
                angle[i] = theta;
                cut[i] = turn_radius_m * (theta.abs() / 2.0).tan();
            }
        }
        let mut pieces = Vec::new();
        let mut node_s = vec![0.0; n];
        let mut arcs = Vec::new();
        let mut turns = vec![false; n];
        let mut s = 0.0;
        for i in 0..n - 1 {
            let (d, l) = unit(pts[i], pts[i + 1]);
            let start_cut = cut[i];
            let end_cut = cut[i + 1];
            if start_cut + end_cut > l {
                return Err(SimError::InvalidRoute(format!(
                    "leg from node {} is too short for its corners",
                    nodes[i].0
                )));
            }
            let p0 = (pts[i].0 + d.0 * start_cut, pts[i].1 + d.1 * start_cut);
            let len = l - start_cut - end_cut;
            pieces.push(Piece::Line { s0: s, len, p0, dir: d });
            s += len;
            if i + 1 < n - 1 && angle[i + 1] != 0.0 {
                let theta = angle[i + 1];
                let sign = theta.signum();
                let a = (pts[i + 1].0 - d.0 * end_cut, pts[i + 1].1 - d.1 * end_cut);
                // Center lies to the turning side of the incoming direction.
                let normal = (-d.1 * sign, d.0 * sign);
                let center = (a.0 + normal.0 * turn_radius_m, a.1 + normal.1 * turn_radius_m);
                let phi0 = (a.1 - center.1).atan2(a.0 - center.0);
                let arc_len = turn_radius_m * theta.abs();
                pieces.push(Piece::Arc {
                    s0: s,
                    len: arc_len,
                    center,
                    radius: turn_radius_m,
                    phi0,
                    sign,
                });
                arcs.push((s, s + arc_len));
                node_s[i + 1] = s + arc_len / 2.0;
                turns[i + 1] = true;
                s += arc_len;
            } else {
                node_s[i + 1] = s;
            }
        }
        Ok(Self {
            pieces,
            node_s,
            arcs,
            turns,
            edges,
            nodes: nodes.to_vec(),
            length: s,
        })
    }

    pub fn pose(&self, s: f64) -> Pose {
        let s = s.clamp(0.0, self.length);
        let i = self.pieces.partition_point(|p| p.s0() <= s).saturating_sub(1);
        match self.pieces[i] {
            Piece::Line { s0, len, p0, dir } => {
                let u = (s - s0).min(len);
                Pose {
                    x: p0.0 + dir.0 * u,
                    y: p0.1 + dir.1 * u,
                    heading: dir.1.atan2(dir.0),
                    curvature: 0.0,
                }
            }
            Piece::Arc {
                s0,
                len,
                center,
                radius,
                phi0,
                sign,
            } => {
                let u = (s - s0).min(len);
                let phi = phi0 + sign * u / radius;
                Pose {
                    x: center.0 + radius * phi.cos(),
                    y: center.1 + radius * phi.sin(),
                    heading: phi + sign * std::f64::consts::FRAC_PI_2,
                    curvature: sign / radius,
                }
            }
        }
    }

    /// Index into `edges` of the edge containing arc-length `s`.
    pub fn edge_index(&self, s: f64) -> usize {
        let k = self.node_s.partition_point(|&ns| ns <= s);
        k.saturating_sub(1).min(self.edges.len() - 1)
    }

    /// Whether `s` lies on a corner arc; returns the arc bounds.
    pub fn arc_at(&self, s: f64) -> Option<(f64, f64)> {
        self.arcs.iter().copied().find(|&(a, b)| s >= a && s <= b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::gen_network;

    #[test]
    fn straight_and_corner_geometry() {
        let net = gen_network(3, 3, 200.0, &[], 1);
        // 0 → 1 → 2 east, then 2 → 5 north.
        let g = PathGeometry::new(&net, &[NodeId(0), NodeId(1), NodeId(2), NodeId(5)], 12.0).unwrap();
        let r = 12.0;
        let expect = 600.0 - 2.0 * r + r * std::f64::consts::FRAC_PI_2;
        assert!((g.length - expect).abs() < 0.05, "{}", g.length);
        assert!(!g.turns[1] && g.turns[2]);
        // Corner midpoint sits r(√2 − 1) from the node.
        let p = g.pose(g.node_s[2]);
        let node = net.projection().to_xy(net.node(NodeId(2)).pos());
        let d = (p.x - node.0).hypot(p.y - node.1);
        assert!((d - r * (2f64.sqrt() - 1.0)).abs() < 0.05, "{d}");
        assert!((p.curvature - 1.0 / r).abs() < 1e-12);
        assert_eq!(g.edge_index(10.0), 0);
        assert_eq!(g.edge_index(g.node_s[2] + 1.0), 2);
        // Poses are continuous across piece boundaries.
        let (a, b) = g.arcs[0];
        for s in [a, b] {
            let (p1, p2) = (g.pose(s - 1e-6), g.pose(s + 1e-6));
            assert!((p1.x - p2.x).hypot(p1.y - p2.y) < 1e-4);
        }
    }

    #[test]
    fn rejects_u_turns_and_gaps() {
        let net = gen_network(2, 3, 200.0, &[], 1);
        assert!(PathGeometry::new(&net, &[NodeId(0), NodeId(1), NodeId(0)], 12.0).is_err());
        assert!(PathGeometry::new(&net, &[NodeId(0), NodeId(2)], 12.0).is_err());
    }
}

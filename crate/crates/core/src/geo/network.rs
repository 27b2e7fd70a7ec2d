use serde::{Deserialize, Serialize};

use super::{haversine, GeoError, LocalProjection};
use crate::ingest::GeoPos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadClass {
    Highway,
    Arterial,
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub lat: f64,
    pub lon: f64,
}

impl Node {
    pub fn pos(&self) -> GeoPos {
        GeoPos::new(self.lat, self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    /// `[lat, lon]` pairs, at least two.
    pub polyline: Vec<[f64; 2]>,
    pub length_m: f64,
    pub road_class: RoadClass,
    pub speed_limit_kph: f64,
}

impl Edge {
    pub fn points(&self) -> impl Iterator<Item = GeoPos> + '_ {
        self.polyline.iter().map(|p| GeoPos::new(p[0], p[1]))
    }

    pub fn polyline_length(&self) -> f64 {
        let pts: Vec<GeoPos> = self.points().collect();
        pts.windows(2).map(|w| haversine(w[0], w[1])).sum()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

/// Directed road graph. Node and edge ids are dense: `nodes[i].id == i`.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<EdgeId>>,
    component: Vec<u32>,
    n_components: u32,
    projection: LocalProjection,
    /// Projected polylines.
    edge_xy: Vec<Vec<(f64, f64)>>,
}

/// Closest point of an edge to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeProjection {
    pub edge: EdgeId,
    pub distance_m: f64,
    /// Distance along the edge from its `from` node, in `[0, length_m]`.
    pub offset_m: f64,
    /// Signed distance from the centerline, + left of travel direction.
    pub lateral_m: f64,
}

impl RoadNetwork {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, GeoError> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id.0 as usize != i {
                return Err(GeoError::InvalidNetwork(format!("node ids must be dense; index {i} has id {}", n.id.0)));
            }
            if !n.pos().is_valid() {
                return Err(GeoError::InvalidNetwork(format!("node {i} has invalid coordinates")));
            }
        }
        let mut outgoing = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            if e.id.0 as usize != i {
                return Err(GeoError::InvalidNetwork(format!("edge ids must be dense; index {i} has id {}", e.id.0)));
            }
            if e.from.0 as usize >= nodes.len() || e.to.0 as usize >= nodes.len() {
                return Err(GeoError::InvalidNetwork(format!("edge {i} references a missing node")));
            }
            if e.polyline.len() < 2 {
                return Err(GeoError::InvalidNetwork(format!("edge {i} polyline has fewer than 2 points")));
            }
            let geo_len = e.polyline_length();
            if !(e.length_m > 0.0) || (e.length_m - geo_len).abs() > 1e-3 * geo_len.max(1e-9) {
                return Err(GeoError::InvalidNetwork(format!(
                    "edge {i} length {} m disagrees with polyline length {geo_len} m",
                    e.length_m
                )));
            }
            outgoing[e.from.0 as usize].push(e.id);
        }
        for out in &mut outgoing {
            out.sort();
        }

        // Weakly connected components (union-find).
        let mut parent: Vec<u32> = (0..nodes.len() as u32).collect();
        fn find(p: &mut [u32], mut x: u32) -> u32 {
            while p[x as usize] != x {
                p[x as usize] = p[p[x as usize] as usize];
                x = p[x as usize];
            }
            x
        }
        for e in &edges {
            let (a, b) = (find(&mut parent, e.from.0), find(&mut parent, e.to.0));
            if a != b {
                parent[a.max(b) as usize] = a.min(b);
            }
        }
        let mut label = vec![u32::MAX; nodes.len()];
        let mut component = vec![0; nodes.len()];
        let mut n_components = 0;
        for i in 0..nodes.len() {
            let r = find(&mut parent, i as u32) as usize;
            if label[r] == u32::MAX {
                label[r] = n_components;
                n_components += 1;
            }
            component[i] = label[r];
        }

        let origin = if nodes.is_empty() {
            GeoPos::new(0.0, 0.0)
        } else {
            let (mut lo, mut hi) = ((f64::MAX, f64::MAX), (f64::MIN, f64::MIN));
            for n in &nodes {
                lo = (lo.0.min(n.lat), lo.1.min(n.lon));
                hi = (hi.0.max(n.lat), hi.1.max(n.lon));
            }
            GeoPos::new((lo.0 + hi.0) / 2.0, (lo.1 + hi.1) / 2.0)
        };
        let projection = LocalProjection::new(origin);
        let edge_xy = edges
            .iter()
            .map(|e| e.points().map(|p| projection.to_xy(p)).collect())
            .collect();
        Ok(Self {
            nodes,
            edges,
            outgoing,
            component,
            n_components,
            projection,
            edge_xy,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, GeoError> {
        let f: NetworkFile = serde_json::from_str(text).map_err(|e| GeoError::InvalidNetwork(e.to_string()))?;
        Self::new(f.nodes, f.edges)
    }

    pub fn to_json(&self) -> String {
        let f = NetworkFile {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        };
        serde_json::to_string_pretty(&f).expect("network serializes") + "\n"
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0 as usize]
    }

    pub fn outgoing(&self, node: NodeId) -> &[EdgeId] {
        &self.outgoing[node.0 as usize]
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        (id.0 as usize) < self.nodes.len()
    }

    pub fn component_of(&self, node: NodeId) -> u32 {
        self.component[node.0 as usize]
    }

    pub fn n_components(&self) -> u32 {
        self.n_components
    }

    pub fn projection(&self) -> &LocalProjection {
        &self.projection
    }

    pub fn edge_xy(&self, id: EdgeId) -> &[(f64, f64)] {
        &self.edge_xy[id.0 as usize]
    }

    /// Edge from `from` to `to`, lowest id first if parallel edges exist.
    pub fn edge_between(&self, from: NodeId, to: NodeId) -> Option<EdgeId> {
        self.outgoing(from).iter().copied().find(|&e| self.edge(e).to == to)
    }

    /// Reverse twin of an edge, if the network has one.
    pub fn reverse_of(&self, e: EdgeId) -> Option<EdgeId> {
        let edge = self.edge(e);
        self.edge_between(edge.to, edge.from)
    }

    pub fn project_xy(&self, e: EdgeId, x: f64, y: f64) -> EdgeProjection {
        let pts = self.edge_xy(e);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut along = 0.0;
        let mut total = 0.0;
        for w in pts.windows(2) {
            let (ax, ay) = w[0];
            let (bx, by) = w[1];
            let (dx, dy) = (bx - ax, by - ay);
            let seg2 = dx * dx + dy * dy;
            let seg = seg2.sqrt();
            let u = if seg2 > 0.0 {
                (((x - ax) * dx + (y - ay) * dy) / seg2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (px, py) = (ax + u * dx, ay + u * dy);
            let d = ((x - px).powi(2) + (y - py).powi(2)).sqrt();
            if d < best.0 {
                let side = dx * (y - ay) - dy * (x - ax);
                best = (d, along + u * seg, if side >= 0.0 { d } else { -d });
            }
            along += seg;
            total += seg;
        }
        let length = self.edge(e).length_m;
        let scale = if total > 0.0 { length / total } else { 0.0 };
        EdgeProjection {
            edge: e,
            distance_m: best.0,
            offset_m: (best.1 * scale).clamp(0.0, length),
            lateral_m: best.2,
        }
    }

    pub fn project(&self, e: EdgeId, p: GeoPos) -> EdgeProjection {
        let (x, y) = self.projection.to_xy(p);
        self.project_xy(e, x, y)
    }

    /// Point at `offset_m` along an edge.
    pub fn point_along(&self, e: EdgeId, offset_m: f64) -> GeoPos {
        let pts = self.edge_xy(e);
        let total: f64 = pts
            .windows(2)
            .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
            .sum();
        let mut remaining = offset_m.clamp(0.0, self.edge(e).length_m) * total / self.edge(e).length_m;
        for w in pts.windows(2) {
            let seg = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            if remaining <= seg || seg == 0.0 {
                let u = if seg > 0.0 { remaining / seg } else { 0.0 };
                return self
                    .projection
                    .to_geo(w[0].0 + u * (w[1].0 - w[0].0), w[0].1 + u * (w[1].1 - w[0].1));
            }
            remaining -= seg;
        }
        let last = pts[pts.len() - 1];
        self.projection.to_geo(last.0, last.1)
    }

    /// Bounding box of all edge geometry in projected meters.
    pub fn bbox_xy(&self) -> Option<((f64, f64), (f64, f64))> {
        let mut it = self.edge_xy.iter().flatten();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), &(x, y)| {
            ((lo.0.min(x), lo.1.min(y)), (hi.0.max(x), hi.1.max(y)))
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_node_network() -> RoadNetwork {
        let proj = LocalProjection::new(GeoPos::new(40.0, -83.0));
        let a = proj.to_geo(0.0, 0.0);
        let b = proj.to_geo(100.0, 0.0);
        let nodes = vec![
            Node { id: NodeId(0), lat: a.lat, lon: a.lon },
            Node { id: NodeId(1), lat: b.lat, lon: b.lon },
        ];
        let len = haversine(a, b);
        let edges = vec![Edge {
            id: EdgeId(0),
            from: NodeId(0),
            to: NodeId(1),
            polyline: vec![[a.lat, a.lon], [b.lat, b.lon]],
            length_m: len,
            road_class: RoadClass::Local,
            speed_limit_kph: 40.0,
        }];
        RoadNetwork::new(nodes, edges).unwrap()
    }

    #[test]
    fn projection_offsets_and_sides() {
        let net = two_node_network();
        let proj = *net.projection();
        let left = proj.to_geo(
            proj.to_xy(net.node(NodeId(0)).pos()).0 + 30.0,
            proj.to_xy(net.node(NodeId(0)).pos()).1 + 2.0,
        );
        let p = net.project(EdgeId(0), left);
        assert!((p.distance_m - 2.0).abs() < 1e-6);
        assert!(p.lateral_m > 0.0);
        assert!((p.offset_m - 30.0).abs() < 0.1);
        let back = net.point_along(EdgeId(0), p.offset_m);
        assert!(haversine(back, left) < 2.0 + 1e-6);
    }

    #[test]
    fn rejects_bad_lengths_and_ids() {
        let net = two_node_network();
        let mut edges = net.edges().to_vec();
        edges[0].length_m *= 1.01;
        assert!(RoadNetwork::new(net.nodes().to_vec(), edges).is_err());
        let mut nodes = net.nodes().to_vec();
        nodes[1].id = NodeId(5);
        assert!(RoadNetwork::new(nodes, net.edges().to_vec()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let net = two_node_network();
        let back = RoadNetwork::from_json(&net.to_json()).unwrap();
        assert_eq!(back.edges(), net.edges());
        assert_eq!(back.n_components(), 1);
    }
}

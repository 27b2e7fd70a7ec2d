use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::network::{EdgeId, NodeId, RoadNetwork};
use super::GeoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub edges: Vec<EdgeId>,
    pub length_m: f64,
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    node: NodeId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimal-length path. Among equal lengths the lexicographically smallest
/// edge-id sequence wins. Lengths accumulate in path order, so the result
/// matches a left-to-right sum over any enumerated path bit for bit.
pub fn shortest_path(network: &RoadNetwork, from: NodeId, to: NodeId) -> Result<Route, GeoError> {
    for n in [from, to] {
        if !network.contains_node(n) {
            return Err(GeoError::UnknownNode(n.0));
        }
    }
    let n = network.nodes().len();
    let mut best: Vec<Option<(f64, Vec<EdgeId>)>> = vec![None; n];
    let mut done = vec![false; n];
    best[from.0 as usize] = Some((0.0, Vec::new()));
    let mut heap = BinaryHeap::new();
    heap.push(Entry { dist: 0.0, node: from });
    while let Some(Entry { dist, node }) = heap.pop() {
        let u = node.0 as usize;
        if done[u] {
            continue;
        }
        done[u] = true;
        if node == to {
            break;
        }
        let path_u = best[u].as_ref().map(|b| b.1.clone()).unwrap_or_default();
        for &e in network.outgoing(node) {
            let edge = network.edge(e);
            let v = edge.to.0 as usize;
            if done[v] {
                continue;
            }
            let d = dist + edge.length_m;
            let better = match &best[v] {
                None => true,
                Some((bd, bp)) => d < *bd || (d == *bd && lex_less(&path_u, e, bp)),
            };
            if better {
                let mut p = path_u.clone();
                p.push(e);
                best[v] = Some((d, p));
                heap.push(Entry { dist: d, node: edge.to });
            }
        }
    }
    match best[to.0 as usize].take() {
        Some((length_m, edges)) => Ok(Route { edges, length_m }),
        None => Err(GeoError::Unreachable { from: from.0, to: to.0 }),
    }
}

fn lex_less(prefix: &[EdgeId], last: EdgeId, other: &[EdgeId]) -> bool {
    prefix.iter().chain(std::iter::once(&last)).cmp(other.iter()) == Ordering::Less
}

/// Single-source shortest distances (no paths).
pub fn distances_from(network: &RoadNetwork, from: NodeId) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; network.nodes().len()];
    dist[from.0 as usize] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry { dist: 0.0, node: from });
    while let Some(Entry { dist: d, node }) = heap.pop() {
        if d > dist[node.0 as usize] {
            continue;
        }
        for &e in network.outgoing(node) {
            let edge = network.edge(e);
            let nd = d + edge.length_m;
            if nd < dist[edge.to.0 as usize] {
                dist[edge.to.0 as usize] = nd;
                heap.push(Entry { dist: nd, node: edge.to });
            }
        }
    }
    dist
}

/// Shortest distances from every node to `to`.
pub fn distances_to(network: &RoadNetwork, to: NodeId) -> Vec<f64> {
    let mut incoming: Vec<Vec<EdgeId>> = vec![Vec::new(); network.nodes().len()];
    for e in network.edges() {
        incoming[e.to.0 as usize].push(e.id);
    }
    let mut dist = vec![f64::INFINITY; network.nodes().len()];
    dist[to.0 as usize] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry { dist: 0.0, node: to });
    while let Some(Entry { dist: d, node }) = heap.pop() {
        if d > dist[node.0 as usize] {
            continue;
        }
        for &e in &incoming[node.0 as usize] {
            let edge = network.edge(e);
            let nd = d + edge.length_m;
            if nd < dist[edge.from.0 as usize] {
                dist[edge.from.0 as usize] = nd;
                heap.push(Entry { dist: nd, node: edge.from });
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::network::{Edge, Node, RoadClass};
    use crate::geo::{haversine, LocalProjection};
    use crate::ingest::GeoPos;

    /// Triangle where a→b and b→c are 1 km each and a→c bends out to ~3.9 km.
    fn triangle() -> RoadNetwork {
        let proj = LocalProjection::new(GeoPos::new(40.0, -83.0));
        let a = proj.to_geo(0.0, 0.0);
        let b = proj.to_geo(1000.0, 0.0);
        let c = proj.to_geo(1000.0, 1000.0);
        let nodes = vec![
            Node { id: NodeId(0), lat: a.lat, lon: a.lon },
            Node { id: NodeId(1), lat: b.lat, lon: b.lon },
            Node { id: NodeId(2), lat: c.lat, lon: c.lon },
        ];
        let mk = |id, from: u32, to: u32, pts: Vec<GeoPos>| {
            let len: f64 = pts.windows(2).map(|w| haversine(w[0], w[1])).sum();
            Edge {
                id: EdgeId(id),
                from: NodeId(from),
                to: NodeId(to),
                polyline: pts.iter().map(|p| [p.lat, p.lon]).collect(),
                length_m: len,
                road_class: RoadClass::Local,
                speed_limit_kph: 40.0,
            }
        };
        let detour = proj.to_geo(-1000.0, 1500.0);
        let edges = vec![
            mk(0, 0, 2, vec![a, detour, c]),
            mk(1, 0, 1, vec![a, proj.to_geo(500.0, 0.0), b]),
            mk(2, 1, 2, vec![b, c]),
        ];
        RoadNetwork::new(nodes, edges).unwrap()
    }

    #[test]
    fn same_node_is_empty() {
        let net = triangle();
        let r = shortest_path(&net, NodeId(1), NodeId(1)).unwrap();
        assert!(r.edges.is_empty());
        assert_eq!(r.length_m, 0.0);
    }

    #[test]
    fn two_hops_beat_long_direct() {
        let net = triangle();
        assert!(net.edge(EdgeId(0)).length_m > net.edge(EdgeId(1)).length_m + net.edge(EdgeId(2)).length_m);
        let r = shortest_path(&net, NodeId(0), NodeId(2)).unwrap();
        assert_eq!(r.edges, vec![EdgeId(1), EdgeId(2)]);
        let d = distances_from(&net, NodeId(0));
        assert_eq!(d[2], r.length_m);
        assert_eq!(distances_to(&net, NodeId(2))[0], r.length_m);
    }

    #[test]
    fn unreachable_and_unknown() {
        let net = triangle();
        assert_eq!(
            shortest_path(&net, NodeId(2), NodeId(0)),
            Err(GeoError::Unreachable { from: 2, to: 0 })
        );
        assert_eq!(shortest_path(&net, NodeId(9), NodeId(0)), Err(GeoError::UnknownNode(9)));
    }
}

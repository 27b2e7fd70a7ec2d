use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::index::SpatialIndex;
use super::network::{EdgeId, EdgeProjection, NodeId, RoadNetwork};
use super::routing::{distances_from, shortest_path};
use super::{haversine, GeoError};
use crate::config::Config;
use crate::ingest::{FixQuality, GnssFix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub k: usize,
    pub max_distance_m: f64,
    pub gps_sigma_m: f64,
    pub rtk_sigma_m: f64,
    /// Scale of the exponential transition penalty on
    /// `|route distance − great-circle advance|`.
    pub beta_m: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self::from(&Config::default())
    }
}

impl From<&Config> for MatchParams {
    fn from(c: &Config) -> Self {
        Self {
            k: c.match_candidates,
            max_distance_m: c.match_max_distance_m,
            gps_sigma_m: c.gps_sigma_m,
            rtk_sigma_m: c.rtk_sigma_m,
            beta_m: 2.0,
        }
    }
}

impl MatchParams {
    pub fn sigma(&self, q: FixQuality) -> f64 {
        match q {
            FixQuality::NoFix | FixQuality::Gps => self.gps_sigma_m,
            FixQuality::Dgps => self.gps_sigma_m / 2.0,
            FixQuality::RtkFloat => self.rtk_sigma_m * 10.0,
            FixQuality::RtkFixed => self.rtk_sigma_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub fix_index: usize,
    pub t: f64,
    pub edge: EdgeId,
    /// Position of `edge` within [`MatchedPath::edges`].
    pub seq_idx: usize,
    pub offset_m: f64,
    pub lateral_m: f64,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchedPath {
    pub assignments: Vec<Assignment>,
    /// Driven edges in order; gaps between assigned edges are filled with
    /// shortest paths.
    pub edges: Vec<EdgeId>,
    /// Indices of positioned fixes with no edge within the search radius.
    pub off_network: Vec<usize>,
}

impl MatchedPath {
    /// Fixes matched to a given position in the edge sequence.
    pub fn assignments_on(&self, seq_idx: usize) -> impl Iterator<Item = &Assignment> {
        self.assignments.iter().filter(move |a| a.seq_idx == seq_idx)
    }

    /// Node sequence traversed by [`MatchedPath::edges`].
    pub fn nodes(&self, network: &RoadNetwork) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.edges.len() + 1);
        if let Some(&first) = self.edges.first() {
            out.push(network.edge(first).from);
        }
        out.extend(self.edges.iter().map(|&e| network.edge(e).to));
        out
    }
}

struct RouteCache<'a> {
    network: &'a RoadNetwork,
    from: HashMap<NodeId, Vec<f64>>,
}

impl RouteCache<'_> {
    fn node_distance(&mut self, a: NodeId, b: NodeId) -> f64 {
        if a == b {
            return 0.0;
        }
        let net = self.network;
        self.from.entry(a).or_insert_with(|| distances_from(net, a))[b.0 as usize]
    }

    /// Network distance from one on-edge position to another, moving
    /// forward along directed edges. Movement within one edge is allowed in
    /// either direction so that stationary jitter is not penalized.
    fn route_distance(&mut self, a: &EdgeProjection, b: &EdgeProjection) -> f64 {
        if a.edge == b.edge {
            return (b.offset_m - a.offset_m).abs();
        }
        let (ea, eb) = (self.network.edge(a.edge), self.network.edge(b.edge));
        let (len_a, to_a, from_b) = (ea.length_m, ea.to, eb.from);
        (len_a - a.offset_m) + self.node_distance(to_a, from_b) + b.offset_m
    }
}

/// Viterbi decoding of the most likely edge sequence.
pub fn match_trajectory(fixes: &[GnssFix], index: &SpatialIndex, params: &MatchParams) -> Result<MatchedPath, GeoError> {
    let network = index.network().as_ref();
    let positioned: Vec<usize> = (0..fixes.len()).filter(|&i| fixes[i].position.is_some()).collect();
    if positioned.len() < 2 {
        return Err(GeoError::TooFewFixes(positioned.len()));
    }

    let mut steps: Vec<(usize, Vec<EdgeProjection>)> = Vec::with_capacity(positioned.len());
    let mut off_network = Vec::new();
    for &i in &positioned {
        let p = fixes[i].position.expect("positioned");
        let cands: Vec<EdgeProjection> = index
            .nearest_edges(p, params.k)
            .into_iter()
            .filter(|c| c.distance_m <= params.max_distance_m)
            .collect();
        if cands.is_empty() {
            off_network.push(i);
        } else {
            steps.push((i, cands));
        }
    }
    if steps.is_empty() {
        return Err(GeoError::NoCandidates(params.max_distance_m));
    }

    // Fixes within 2σ of the last kept one add little information but, at
    // high rates, enough correlated emission weight to outvote the
    // transition model (e.g. while stopped). Decode on the thinned set.
    let pos = |s: usize| fixes[steps[s].0].position.expect("positioned");
    let mut kept = vec![0usize];
    for s in 1..steps.len() {
        let last = *kept.last().expect("non-empty");
        let q = fixes[steps[s].0].fix_quality;
        if s == steps.len() - 1 || haversine(pos(last), pos(s)) >= 2.0 * params.sigma(q) {
            kept.push(s);
        }
    }

    let emission = |fix: &GnssFix, c: &EdgeProjection| {
        let s = params.sigma(fix.fix_quality);
        -0.5 * (c.distance_m / s).powi(2)
    };
    let mut cache = RouteCache {
        network,
        from: HashMap::new(),
    };
    let mut scores: Vec<Vec<f64>> = Vec::with_capacity(kept.len());
    let mut back: Vec<Vec<Option<usize>>> = Vec::with_capacity(kept.len());
    let first_fix = &fixes[steps[kept[0]].0];
    scores.push(steps[kept[0]].1.iter().map(|c| emission(first_fix, c)).collect());
    back.push(vec![None; steps[kept[0]].1.len()]);
    for k in 1..kept.len() {
        let (pi, ref prev) = steps[kept[k - 1]];
        let (ci, ref cur) = steps[kept[k]];
        let d_gc = haversine(fixes[pi].position.unwrap(), fixes[ci].position.unwrap());
        let prev_scores = &scores[k - 1];
        let mut sc = Vec::with_capacity(cur.len());
        let mut bp = Vec::with_capacity(cur.len());
        for c in cur {
            let mut best = (f64::NEG_INFINITY, None);
            for (j, p) in prev.iter().enumerate() {
                let d_route = cache.route_distance(p, c);
                if !d_route.is_finite() {
                    continue;
                }
                let v = prev_scores[j] - (d_route - d_gc).abs() / params.beta_m;
                if v > best.0 {
                    best = (v, Some(j));
                }
            }
            sc.push(best.0 + emission(&fixes[ci], c));
            bp.push(best.1);
        }
        if bp.iter().all(Option::is_none) {
            // Disconnected: start a fresh chain here.
            sc = cur.iter().map(|c| emission(&fixes[ci], c)).collect();
        }
        scores.push(sc);
        back.push(bp);
    }

    // Backtrack; a state without a predecessor starts an earlier chain.
    let argmax = |v: &[f64]| {
        let mut best = 0;
        for (i, &x) in v.iter().enumerate() {
            if x > v[best] {
                best = i;
            }
        }
        best
    };
    let mut chosen = vec![0usize; kept.len()];
    let mut k = kept.len() - 1;
    chosen[k] = argmax(&scores[k]);
    while k > 0 {
        chosen[k - 1] = match back[k][chosen[k]] {
            Some(j) => j,
            None => argmax(&scores[k - 1]),
        };
        k -= 1;
    }

    let mut edges: Vec<EdgeId> = Vec::new();
    let mut kept_seq = Vec::with_capacity(kept.len());
    for (k, &s) in kept.iter().enumerate() {
        let e = steps[s].1[chosen[k]].edge;
        match edges.last().copied() {
            Some(last) if last == e => {}
            Some(last) => {
                let (a, b) = (network.edge(last).to, network.edge(e).from);
                if a != b {
                    if let Ok(r) = shortest_path(network, a, b) {
                        edges.extend(r.edges);
                    }
                }
                edges.push(e);
            }
            None => edges.push(e),
        }
        kept_seq.push(edges.len() - 1);
    }

    // Kept fixes take their decoded state; the others the nearest edge on
    // the decoded path between the kept fixes around them.
    let mut assignments = Vec::with_capacity(steps.len());
    let mut k = 0;
    for (s, (fix_index, _)) in steps.iter().enumerate() {
        while k + 1 < kept.len() && kept[k + 1] <= s {
            k += 1;
        }
        let (c, seq_idx) = if kept[k] == s {
            (steps[s].1[chosen[k]], kept_seq[k])
        } else {
            let hi = kept_seq[(k + 1).min(kept.len() - 1)];
            let p = pos(s);
            let mut best = (network.project(edges[kept_seq[k]], p), kept_seq[k]);
            for (i, &e) in edges.iter().enumerate().take(hi + 1).skip(kept_seq[k] + 1) {
                let c = network.project(e, p);
                if c.distance_m < best.0.distance_m {
                    best = (c, i);
                }
            }
            best
        };
        assignments.push(Assignment {
            fix_index: *fix_index,
            t: fixes[*fix_index].t,
            edge: c.edge,
            seq_idx,
            offset_m: c.offset_m,
            lateral_m: c.lateral_m,
            distance_m: c.distance_m,
        });
    }
    Ok(MatchedPath {
        assignments,
        edges,
        off_network,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geo::network::{Edge, Node, RoadClass};
    use crate::geo::LocalProjection;
    use crate::ingest::GeoPos;

    /// L-shaped corner: 0 →(e0) 1 →(e1) 2, both legs 200 m, with reverse
    /// twins e2, e3.
    fn corner() -> (Arc<RoadNetwork>, LocalProjection) {
        let proj = LocalProjection::new(GeoPos::new(40.0, -83.0));
        let pts = [(0.0, 0.0), (200.0, 0.0), (200.0, 200.0)].map(|(x, y)| proj.to_geo(x, y));
        let nodes = pts
            .iter()
            .enumerate()
            .map(|(i, p)| Node { id: NodeId(i as u32), lat: p.lat, lon: p.lon })
            .collect();
        let mk = |id: u32, a: usize, b: usize| Edge {
            id: EdgeId(id),
            from: NodeId(a as u32),
            to: NodeId(b as u32),
            polyline: vec![[pts[a].lat, pts[a].lon], [pts[b].lat, pts[b].lon]],
            length_m: haversine(pts[a], pts[b]),
            road_class: RoadClass::Local,
            speed_limit_kph: 40.0,
        };
        let edges = vec![mk(0, 0, 1), mk(1, 1, 2), mk(2, 1, 0), mk(3, 2, 1)];
        (Arc::new(RoadNetwork::new(nodes, edges).unwrap()), proj)
    }

    fn fix(t: f64, p: GeoPos) -> GnssFix {
        GnssFix {
            t,
            position: Some(p),
            alt_m: 0.0,
            fix_quality: FixQuality::Gps,
            hdop: 1.0,
            n_sats: 8,
        }
    }

    #[test]
    fn noiseless_corner_splits_at_node() {
        let (net, proj) = corner();
        let idx = SpatialIndex::build(net.clone(), 250.0).unwrap();
        let mut fixes = Vec::new();
        for i in 0..=40 {
            let s = i as f64 * 10.0 + 5.0;
            let (x, y) = if s < 200.0 { (s, 0.0) } else { (200.0, s - 200.0) };
            fixes.push(fix(i as f64, proj.to_geo(x, y)));
        }
        let m = match_trajectory(&fixes, &idx, &MatchParams::default()).unwrap();
        assert_eq!(m.edges, vec![EdgeId(0), EdgeId(1)]);
        for a in &m.assignments {
            let expect = if a.fix_index < 20 { EdgeId(0) } else { EdgeId(1) };
            assert_eq!(a.edge, expect, "fix {}", a.fix_index);
            assert!(a.offset_m >= 0.0 && a.offset_m <= net.edge(a.edge).length_m);
        }
    }

    #[test]
    fn reversed_drive_uses_twins() {
        let (net, proj) = corner();
        let idx = SpatialIndex::build(net, 250.0).unwrap();
        let fixes: Vec<GnssFix> = (0..=38)
            .map(|i| {
                let s = 395.0 - i as f64 * 10.0;
                let (x, y) = if s < 200.0 { (s, 0.0) } else { (200.0, s - 200.0) };
                fix(i as f64, proj.to_geo(x, y))
            })
            .collect();
        let m = match_trajectory(&fixes, &idx, &MatchParams::default()).unwrap();
        assert_eq!(m.edges, vec![EdgeId(3), EdgeId(2)]);
    }

    #[test]
    fn off_network_and_errors() {
        let (net, proj) = corner();
        let idx = SpatialIndex::build(net, 250.0).unwrap();
        let far = proj.to_geo(5000.0, 5000.0);
        assert_eq!(
            match_trajectory(&[fix(0.0, far), fix(1.0, far)], &idx, &MatchParams::default()),
            Err(GeoError::NoCandidates(200.0))
        );
        assert_eq!(
            match_trajectory(&[fix(0.0, far)], &idx, &MatchParams::default()),
            Err(GeoError::TooFewFixes(1))
        );
        let fixes = vec![
            fix(0.0, proj.to_geo(50.0, 0.0)),
            fix(1.0, far),
            fix(2.0, proj.to_geo(60.0, 0.0)),
        ];
        let m = match_trajectory(&fixes, &idx, &MatchParams::default()).unwrap();
        assert_eq!(m.off_network, vec![1]);
        assert_eq!(m.assignments.len(), 2);
    }
}

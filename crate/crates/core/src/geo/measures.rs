use serde::{Deserialize, Serialize};

use super::matching::MatchedPath;
use super::network::{EdgeId, NodeId, RoadNetwork};
use super::routing::shortest_path;
use super::GeoError;
use crate::ingest::GnssFix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetourResult {
    pub start: NodeId,
    pub end: NodeId,
    /// Driven edges between `start` and `end`.
    pub edges: Vec<EdgeId>,
    pub driven_m: f64,
    pub shortest_m: f64,
    pub ratio: f64,
}

/// Driven network length over the shortest-path length between the first
/// and last matched nodes. An end edge whose matched fixes sit on its far
/// half (e.g. parked at the node before departure) is trimmed off.
pub fn detour_ratio(matched: &MatchedPath, network: &RoadNetwork) -> Result<DetourResult, GeoError> {
    let (first, last) = match (matched.assignments.first(), matched.assignments.last()) {
        (Some(f), Some(l)) if !matched.edges.is_empty() => (f, l),
        _ => return Err(GeoError::EmptyPath),
    };
    let mut lo = 0usize;
    let mut hi = matched.edges.len();
    if first.offset_m > network.edge(matched.edges[0]).length_m / 2.0 {
        lo = 1;
    }
    if last.offset_m < network.edge(matched.edges[hi - 1]).length_m / 2.0 && hi > lo {
        hi -= 1;
    }
    let (start, end) = if lo < hi {
        (network.edge(matched.edges[lo]).from, network.edge(matched.edges[hi - 1]).to)
    } else {
        // Never left one edge; both ends collapse onto the nearer node.
        let e = network.edge(matched.edges[0]);
        let n = if lo == 1 { e.to } else { e.from };
        (n, n)
    };
    let edges: Vec<EdgeId> = matched.edges[lo..hi.max(lo)].to_vec();
    let driven_m: f64 = edges.iter().map(|&e| network.edge(e).length_m).sum();
    if start == end {
        return Err(GeoError::DegenerateTrip {
            node: start.0,
            loop_length_m: driven_m,
        });
    }
    let shortest_m = shortest_path(network, start, end)?.length_m;
    Ok(DetourResult {
        start,
        end,
        edges,
        driven_m,
        shortest_m,
        ratio: driven_m / shortest_m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneDeviationEvent {
    pub t_start: f64,
    pub t_end: f64,
    pub max_abs_lateral_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneDeviationReport {
    /// `(t, lateral_m)` per matched fix.
    pub series: Vec<(f64, f64)>,
    /// False when any matched fix lacks an RTK solution.
    pub reliable: bool,
    pub events: Vec<LaneDeviationEvent>,
}

/// Lateral offset series and excursions beyond the half lane width. Only
/// runs of RTK fixes can produce events.
pub fn lane_deviation(matched: &MatchedPath, fixes: &[GnssFix], half_width_m: f64, min_duration_s: f64) -> LaneDeviationReport {
    let series: Vec<(f64, f64)> = matched.assignments.iter().map(|a| (a.t, a.lateral_m)).collect();
    let reliable = !matched.assignments.is_empty()
        && matched
            .assignments
            .iter()
            .all(|a| fixes[a.fix_index].fix_quality.is_rtk());
    let mut events = Vec::new();
    let mut run: Option<LaneDeviationEvent> = None;
    let close = |run: &mut Option<LaneDeviationEvent>, events: &mut Vec<LaneDeviationEvent>| {
        if let Some(ev) = run.take() {
            if ev.t_end - ev.t_start >= min_duration_s {
                events.push(ev);
            }
        }
    };
    for a in &matched.assignments {
        let rtk = fixes[a.fix_index].fix_quality.is_rtk();
        if rtk && a.lateral_m.abs() > half_width_m {
            match run.as_mut() {
                Some(ev) => {
                    ev.t_end = a.t;
                    ev.max_abs_lateral_m = ev.max_abs_lateral_m.max(a.lateral_m.abs());
                }
                None => {
                    run = Some(LaneDeviationEvent {
                        t_start: a.t,
                        t_end: a.t,
                        max_abs_lateral_m: a.lateral_m.abs(),
                    })
                }
            }
        } else {
            close(&mut run, &mut events);
        }
    }
    close(&mut run, &mut events);
    LaneDeviationReport { series, reliable, events }
}

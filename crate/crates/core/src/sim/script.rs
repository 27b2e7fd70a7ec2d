//! Randomized scenario placement on a grid network.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::path::PathGeometry;
use super::{rng_stream, ClockParams, DeviceSpec, DriveScript, InjectKind, Injection, NoiseSpec, RouteSpec, SimError};
use crate::geo::{NodeId, RoadNetwork};

/// How many events of each kind to place, plus noise and clock ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub trip_id: String,
    pub driver_id: String,
    pub epoch: i64,
    pub min_base_edges: usize,
    pub max_base_edges: usize,
    pub harsh_brakes: usize,
    /// Harsh brakes preceded by a distraction episode.
    pub gaze_paired_brakes: usize,
    pub harsh_accels: usize,
    pub potholes: usize,
    pub lead_brakes: usize,
    pub missed_lead_brakes: usize,
    pub lane_drifts: usize,
    pub distractions: usize,
    pub eyes_closed: usize,
    pub yawns: usize,
    pub phone_uses: usize,
    pub lane_crossings: usize,
    pub near_collisions: usize,
    pub pedestrians: usize,
    pub red_light_runs: usize,
    pub red_light_stops: usize,
    pub stop_sign_violations: usize,
    pub stop_sign_stops: usize,
    pub getting_lost: bool,
    pub noise: NoiseSpec,
    /// Clock offsets are drawn from ±this range for both units.
    pub max_clock_offset_s: f64,
    pub max_drift_ppm: f64,
    pub random_mounting: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            trip_id: "T0001".into(),
            driver_id: "D1".into(),
            epoch: 1_772_438_400,
            min_base_edges: 7,
            max_base_edges: 9,
            harsh_brakes: 0,
            gaze_paired_brakes: 0,
            harsh_accels: 0,
            potholes: 0,
            lead_brakes: 0,
            missed_lead_brakes: 0,
            lane_drifts: 0,
            distractions: 0,
            eyes_closed: 0,
            yawns: 0,
            phone_uses: 0,
            lane_crossings: 0,
            near_collisions: 0,
            pedestrians: 0,
            red_light_runs: 0,
            red_light_stops: 0,
            stop_sign_violations: 0,
            stop_sign_stops: 0,
            getting_lost: false,
            noise: NoiseSpec::default(),
            max_clock_offset_s: 5.0,
            max_drift_ppm: 50.0,
            random_mounting: true,
        }
    }
}

impl ScenarioSpec {
    /// The mixed scenario used for end-to-end recovery runs.
    pub fn standard() -> Self {
        Self {
            harsh_brakes: 3,
            potholes: 2,
            distractions: 2,
            red_light_runs: 1,
            red_light_stops: 1,
            getting_lost: true,
            near_collisions: 2,
            ..Self::default()
        }
    }
}

const VISION_MIN_S: f64 = 600.0;
const LOOP_REPEATS: usize = 2;

/// Unit grid direction of the leg `a → b`.
fn direction(network: &RoadNetwork, a: NodeId, b: NodeId) -> (i32, i32) {
    let proj = network.projection();
    let pa = proj.to_xy(network.node(a).pos());
    let pb = proj.to_xy(network.node(b).pos());
    let (dx, dy) = (pb.0 - pa.0, pb.1 - pa.1);
    if dx.abs() >= dy.abs() {
        (dx.signum() as i32, 0)
    } else {
        (0, dy.signum() as i32)
    }
}

fn neighbor(network: &RoadNetwork, n: NodeId, dir: (i32, i32)) -> Option<NodeId> {
    network
        .outgoing(n)
        .iter()
        .map(|&e| network.edge(e).to)
        .find(|&m| direction(network, n, m) == dir)
}

fn staircase(network: &RoadNetwork, rng: &mut impl Rng, start: NodeId, n_edges: usize) -> Option<Vec<NodeId>> {
    let mut nodes = vec![start];
    let mut cur = start;
    let mut horizontal = rng.random_bool(0.5);
    while nodes.len() <= n_edges {
        let run = rng.random_range(2..=3).min(n_edges + 1 - nodes.len());
        let dir = if horizontal { (1, 0) } else { (0, 1) };
        for _ in 0..run {
            cur = neighbor(network, cur, dir)?;
            nodes.push(cur);
        }
        horizontal = !horizontal;
    }
    Some(nodes)
}

/// Block loop leaving `x` perpendicular to the incoming direction and away
/// from the destination (destinations lie north-east of every staircase).
fn detour_loop(network: &RoadNetwork, x: NodeId, incoming: (i32, i32)) -> Option<Vec<NodeId>> {
    let first = if incoming.0 != 0 { (0, -1) } else { (-1, 0) };
    // Turn the same way three more times so the loop re-enters x heading
    // in the incoming direction.
    let turn = |d: (i32, i32)| {
        if incoming.0 != 0 {
            (d.1, -d.0)
        } else {
            (-d.1, d.0)
        }
    };
    let mut dirs = vec![first];
    for _ in 0..3 {
        dirs.push(turn(*dirs.last().unwrap()));
    }
    let mut out = Vec::new();
    let mut cur = x;
    for _ in 0..LOOP_REPEATS {
        for &d in &dirs {
            cur = neighbor(network, cur, d)?;
            out.push(cur);
        }
    }
    (cur == x).then_some(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SlotKind {
    Motion,
    Vision,
}

pub fn build_script(seed: u64, network: &RoadNetwork, spec: &ScenarioSpec) -> Result<DriveScript, SimError> {
    let mut rng = rng_stream(seed, 7);
    let all_nodes: Vec<NodeId> = network.nodes().iter().map(|n| n.id).collect();

    let n_node_items = spec.red_light_runs + spec.red_light_stops + spec.stop_sign_violations + spec.stop_sign_stops;
    let mut plan = None;
    for _ in 0..500 {
        let start = *all_nodes.choose(&mut rng).expect("network has nodes");
        let n_edges = rng.random_range(spec.min_base_edges..=spec.max_base_edges.max(spec.min_base_edges));
        let Some(base) = staircase(network, &mut rng, start, n_edges) else { continue };
        let mut straight = Vec::new();
        for i in 1..base.len() - 1 {
            if direction(network, base[i - 1], base[i]) == direction(network, base[i], base[i + 1]) {
                straight.push(i);
            }
        }
        let mut detour = None;
        if spec.getting_lost {
            let mut xs: Vec<usize> = (1..base.len() - 1).collect();
            xs.shuffle(&mut rng);
            detour = xs.into_iter().find_map(|i| {
                let lp = detour_loop(network, base[i], direction(network, base[i - 1], base[i]))?;
                // Keep straight-through nodes free for lights.
                let free = straight.iter().filter(|&&j| j != i).count();
                (free >= n_node_items).then_some((i, lp))
            });
            if detour.is_none() {
                continue;
            }
        }
        let free: Vec<usize> = straight.into_iter().filter(|&j| detour.as_ref().is_none_or(|d| d.0 != j)).collect();
        if free.len() < n_node_items {
            continue;
        }
        plan = Some((base, detour, free));
        break;
    }
    let (base, detour, mut free) =
        plan.ok_or_else(|| SimError::Placement("no route fits the requested scenario".into()))?;

    // Full node list and, for each entry, its base-route index (None inside the detour).
    let mut nodes = Vec::new();
    let mut base_index = Vec::new();
    for (i, &n) in base.iter().enumerate() {
        nodes.push(n);
        base_index.push(Some(i));
        if let Some((x, lp)) = &detour {
            if *x == i {
                for &m in lp {
                    nodes.push(m);
                    base_index.push((m == n).then_some(i));
                }
            }
        }
    }
    let defaults = DriveScript::default();
    let geom = PathGeometry::new(network, &nodes, defaults.turn_radius_m)?;
    let first_pos = |bi: usize| base_index.iter().position(|&b| b == Some(bi)).expect("base node present");
    let last_pos = |bi: usize| base_index.iter().rposition(|&b| b == Some(bi)).expect("base node present");

    let mut events = Vec::new();
    if let Some((x, _)) = &detour {
        events.push(Injection {
            at_m: geom.node_s[first_pos(*x)],
            kind: InjectKind::GettingLost,
        });
    }

    free.shuffle(&mut rng);
    let mut node_kinds = Vec::new();
    for _ in 0..spec.red_light_runs {
        node_kinds.push(InjectKind::RedLight {
            run: true,
            latency_s: 0.0,
            green_latency_s: 0.0,
        });
    }
    for _ in 0..spec.red_light_stops {
        node_kinds.push(InjectKind::RedLight {
            run: false,
            latency_s: rng.random_range(0.6..1.5),
            green_latency_s: rng.random_range(0.8..2.0),
        });
    }
    for _ in 0..spec.stop_sign_violations {
        node_kinds.push(InjectKind::StopSign { comply: false });
    }
    for _ in 0..spec.stop_sign_stops {
        node_kinds.push(InjectKind::StopSign { comply: true });
    }
    let mut node_item_nodes = Vec::new();
    for (kind, &bi) in node_kinds.into_iter().zip(&free) {
        let k = last_pos(bi);
        node_item_nodes.push(k);
        events.push(Injection {
            at_m: geom.node_s[k],
            kind,
        });
    }

    // Slots along base-route edges; edge k runs from nodes[k] to nodes[k+1].
    let mut motion_slots = Vec::new();
    let mut vision_slots = Vec::new();
    for k in 0..geom.edges.len() {
        if base_index[k].is_none() || base_index[k + 1].is_none() {
            continue;
        }
        let s_k = geom.node_s[k];
        let len = geom.node_s[k + 1] - s_k;
        let ends_at_item = node_item_nodes.contains(&(k + 1));
        if len >= 200.0 {
            motion_slots.push((k, s_k + 120.0));
        }
        for (off, needs_free_end) in [(30.0, false), (210.0, true)] {
            if s_k + off >= VISION_MIN_S && off + 60.0 <= len && !(needs_free_end && ends_at_item) {
                vision_slots.push((k, s_k + off));
            }
        }
    }
    motion_slots.shuffle(&mut rng);
    vision_slots.shuffle(&mut rng);

    let take = |slots: &mut Vec<(usize, f64)>, what: SlotKind| {
        slots
            .pop()
            .ok_or_else(|| SimError::Placement(format!("not enough {what:?} slots on the route").to_lowercase()))
    };
    let cruise = defaults.cruise_kph / 3.6;
    for _ in 0..spec.gaze_paired_brakes {
        // Needs the edge's early vision slot for the preceding distraction.
        let i = motion_slots
            .iter()
            .position(|&(k, s)| s - cruise * 4.5 >= VISION_MIN_S && vision_slots.iter().any(|v| v.0 == k && v.1 < s))
            .ok_or_else(|| SimError::Placement("no slot for a gaze-paired brake".into()))?;
        let (k, s) = motion_slots.remove(i);
        vision_slots.retain(|v| !(v.0 == k && v.1 < s));
        let duration_s = rng.random_range(2.0..2.5);
        events.push(Injection {
            at_m: s - cruise * (duration_s + 1.0),
            kind: InjectKind::Distraction {
                duration_s,
                yaw_deg: signed(&mut rng, 50.0..70.0),
            },
        });
        events.push(Injection {
            at_m: s,
            kind: InjectKind::HarshBrake {
                decel_mps2: rng.random_range(4.0..5.5),
                duration_s: rng.random_range(0.8..1.5),
            },
        });
    }
    let mut motion_items = Vec::new();
    for _ in 0..spec.harsh_brakes {
        motion_items.push(InjectKind::HarshBrake {
            decel_mps2: rng.random_range(4.0..5.5),
            duration_s: rng.random_range(0.8..1.5),
        });
    }
    for _ in 0..spec.harsh_accels {
        motion_items.push(InjectKind::HarshAccel {
            accel_mps2: rng.random_range(3.6..4.5),
            duration_s: rng.random_range(0.8..1.2),
        });
    }
    for _ in 0..spec.potholes {
        motion_items.push(InjectKind::Pothole {
            amplitude_mps2: rng.random_range(8.0..12.0),
        });
    }
    for _ in 0..spec.lead_brakes {
        motion_items.push(InjectKind::LeadBrake {
            latency_s: Some(rng.random_range(0.7..1.8)),
        });
    }
    for _ in 0..spec.missed_lead_brakes {
        motion_items.push(InjectKind::LeadBrake { latency_s: None });
    }
    for _ in 0..spec.lane_drifts {
        motion_items.push(InjectKind::LaneDrift {
            offset_m: signed(&mut rng, 1.9..2.5),
            duration_s: rng.random_range(2.0..4.0),
        });
    }
    for kind in motion_items {
        let (_, s) = take(&mut motion_slots, SlotKind::Motion)?;
        events.push(Injection { at_m: s, kind });
    }

    let mut vision_items = Vec::new();
    for _ in 0..spec.distractions {
        vision_items.push(InjectKind::Distraction {
            duration_s: rng.random_range(2.5..4.0),
            yaw_deg: signed(&mut rng, 50.0..70.0),
        });
    }
    for _ in 0..spec.eyes_closed {
        vision_items.push(InjectKind::EyesClosed {
            duration_s: rng.random_range(1.0..2.5),
        });
    }
    for _ in 0..spec.yawns {
        vision_items.push(InjectKind::Yawn {
            duration_s: rng.random_range(3.0..5.0),
        });
    }
    for _ in 0..spec.phone_uses {
        vision_items.push(InjectKind::PhoneUse {
            duration_s: rng.random_range(3.0..5.0),
        });
    }
    for _ in 0..spec.lane_crossings {
        vision_items.push(InjectKind::LaneCrossing);
    }
    for _ in 0..spec.near_collisions {
        vision_items.push(InjectKind::NearCollision {
            min_distance_m: rng.random_range(3.0..6.0),
            duration_s: rng.random_range(3.0..5.0),
        });
    }
    for _ in 0..spec.pedestrians {
        vision_items.push(InjectKind::Pedestrian {
            crossing: rng.random_bool(0.5),
        });
    }
    for kind in vision_items {
        let (_, s) = take(&mut vision_slots, SlotKind::Vision)?;
        events.push(Injection { at_m: s, kind });
    }
    events.sort_by(|a, b| a.at_m.total_cmp(&b.at_m));

    let mut clock = || ClockParams {
        offset_s: rng.random_range(-1.0..=1.0) * spec.max_clock_offset_s,
        drift_ppm: rng.random_range(-1.0..=1.0) * spec.max_drift_ppm,
    };
    let telemetry_clock = clock();
    let vision_clock = clock();
    let device = if spec.random_mounting {
        DeviceSpec {
            imu_yaw_deg: rng.random_range(-180.0..180.0),
            imu_pitch_deg: rng.random_range(-5.0..5.0),
            imu_roll_deg: rng.random_range(-5.0..5.0),
            camera_yaw_deg: rng.random_range(-15.0..15.0),
        }
    } else {
        DeviceSpec::default()
    };
    Ok(DriveScript {
        seed,
        trip_id: spec.trip_id.clone(),
        driver_id: spec.driver_id.clone(),
        epoch: spec.epoch,
        route: RouteSpec::Nodes { nodes },
        events,
        noise: spec.noise,
        telemetry_clock,
        vision_clock,
        device,
        ..defaults
    })
}

fn signed(rng: &mut impl Rng, range: std::ops::Range<f64>) -> f64 {
    let v = rng.random_range(range);
    if rng.random_bool(0.5) {
        v
    } else {
        -v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::gen_network;

    fn grid() -> RoadNetwork {
        gen_network(8, 8, 300.0, &[], 0)
    }

    #[test]
    fn standard_scenario_places_everything() {
        let net = grid();
        for seed in 0..20 {
            let s = build_script(seed, &net, &ScenarioSpec::standard()).unwrap();
            let count = |name: &str| s.events.iter().filter(|e| e.kind.name() == name).count();
            assert_eq!(count("harsh_brake"), 3);
            assert_eq!(count("pothole"), 2);
            assert_eq!(count("distraction"), 2);
            assert_eq!(count("near_collision"), 2);
            assert_eq!(count("red_light"), 2);
            assert_eq!(count("getting_lost"), 1);
            let nodes = s.route_nodes(&net).unwrap();
            PathGeometry::new(&net, &nodes, s.turn_radius_m).unwrap();
            for e in &s.events {
                if matches!(e.kind, InjectKind::Distraction { .. } | InjectKind::NearCollision { .. }) {
                    assert!(e.at_m >= VISION_MIN_S);
                }
            }
        }
    }

    #[test]
    fn detour_loop_closes_and_leaves_away_from_destination() {
        let net = grid();
        let s = build_script(3, &net, &ScenarioSpec::standard()).unwrap();
        let nodes = s.route_nodes(&net).unwrap();
        let geom = PathGeometry::new(&net, &nodes, s.turn_radius_m).unwrap();
        let at = s.events.iter().find(|e| e.kind == InjectKind::GettingLost).unwrap().at_m;
        let x = geom.node_s.iter().position(|&ns| ns == at).unwrap();
        assert_eq!(nodes[x + 4], nodes[x]);
        assert_eq!(nodes[x + 8], nodes[x]);
        let d = direction(&net, nodes[x], nodes[x + 1]);
        assert!(d == (0, -1) || d == (-1, 0));
        assert_eq!(direction(&net, nodes[x - 1], nodes[x]), direction(&net, nodes[x + 7], nodes[x + 8]));
    }

    #[test]
    fn script_is_deterministic() {
        let net = grid();
        let a = build_script(5, &net, &ScenarioSpec::standard()).unwrap();
        let b = build_script(5, &net, &ScenarioSpec::standard()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, build_script(6, &net, &ScenarioSpec::standard()).unwrap());
    }

    #[test]
    fn impossible_scenario_reports_placement() {
        let net = grid();
        let spec = ScenarioSpec {
            harsh_brakes: 40,
            ..ScenarioSpec::default()
        };
        assert!(matches!(build_script(1, &net, &spec), Err(SimError::Placement(_))));
    }
}

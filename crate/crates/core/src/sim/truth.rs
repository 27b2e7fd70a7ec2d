use serde::{Deserialize, Serialize};

use crate::geo::{EdgeId, NodeId};
use crate::time_sync::ClockModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TruthKind {
    HarshBrake,
    HarshAccel,
    Pothole,
    DistractionEpisode,
    EyesClosedEpisode,
    YawnEpisode,
    PhoneUseEpisode,
    NearCollisionEvent,
    LaneCrossingEvent,
    PedestrianEncounter,
    RedLightRun,
    RedLightStop,
    StopSignViolation,
    StopSignStop,
    GettingLost,
    LaneDeviation,
    ReactionSample,
    MissedStimulus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub kind: TruthKind,
    pub t_start: f64,
    pub t_end: f64,
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stimulus: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze_offroad: Option<bool>,
}

/// Time span during which the vehicle was on one route edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePassage {
    pub edge: EdgeId,
    pub t_enter: f64,
    pub t_exit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub trip_id: String,
    pub driver_id: String,
    pub epoch: i64,
    pub telemetry_clock: ClockModel,
    pub vision_clock: ClockModel,
    pub route_nodes: Vec<NodeId>,
    pub route_edges: Vec<EdgeId>,
    pub edge_passages: Vec<EdgePassage>,
    /// Moving span of the drive.
    pub t_drive_start: f64,
    pub t_drive_end: f64,
    pub distance_m: f64,
    pub events: Vec<TruthEvent>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Edge the vehicle occupied at synchronized time `t`. Before the first
    /// passage the car is parked on the first edge.
    pub fn edge_at(&self, t: f64) -> Option<EdgeId> {
        let i = self.edge_passages.partition_point(|p| p.t_enter <= t);
        self.edge_passages.get(i.saturating_sub(1)).map(|p| p.edge)
    }

    /// Edges occupied within `tol_s` of `t`; two at a passage boundary.
    pub fn edges_near(&self, t: f64, tol_s: f64) -> Vec<EdgeId> {
        let mut out: Vec<EdgeId> = self
            .edge_passages
            .iter()
            .filter(|p| p.t_enter - tol_s <= t && t <= p.t_exit + tol_s)
            .map(|p| p.edge)
            .collect();
        if out.is_empty() {
            out.extend(self.edge_at(t));
        }
        out
    }

    pub fn events_of(&self, kind: TruthKind) -> impl Iterator<Item = &TruthEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

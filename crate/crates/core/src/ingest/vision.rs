//! Camera detection records, one JSON object per line:
//! `{"t":12.0,"camera":"driver","kind":"head_pose","yaw_deg":35,"pitch_deg":-5}`.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{CheckInvariants, ParseError, Timestamped};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Camera {
    Driver,
    Front,
}

impl fmt::Display for Camera {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Camera::Driver => "driver",
            Camera::Front => "front",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightState {
    Red,
    Yellow,
    Green,
}

impl LightState {
    fn as_str(self) -> &'static str {
        match self {
            Self::Red => "red",
            Self::Yellow => "yellow",
            Self::Green => "green",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VisionKind {
    EyeState { closed: bool },
    /// Mouth-open detection in this frame.
    Yawn,
    HeadPose { yaw_deg: f64, pitch_deg: f64 },
    PhoneUse,
    Smoking,
    TrafficLight { state: LightState },
    StopSign,
    FrontTaillight { on: bool },
    LaneCrossing,
    NearCollision { distance_m: f64 },
    Pedestrian { crossing: bool },
}

impl VisionKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EyeState { .. } => "eye_state",
            Self::Yawn => "yawn",
            Self::HeadPose { .. } => "head_pose",
            Self::PhoneUse => "phone_use",
            Self::Smoking => "smoking",
            Self::TrafficLight { .. } => "traffic_light",
            Self::StopSign => "stop_sign",
            Self::FrontTaillight { .. } => "front_taillight",
            Self::LaneCrossing => "lane_crossing",
            Self::NearCollision { .. } => "near_collision",
            Self::Pedestrian { .. } => "pedestrian",
        }
    }

    pub fn camera(&self) -> Camera {
        match self {
            Self::EyeState { .. } | Self::Yawn | Self::HeadPose { .. } | Self::PhoneUse | Self::Smoking => {
                Camera::Driver
            }
            _ => Camera::Front,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionEvent {
    pub t: f64,
    pub camera: Camera,
    pub kind: VisionKind,
}

impl VisionEvent {
    pub fn new(t: f64, kind: VisionKind) -> Self {
        Self {
            t,
            camera: kind.camera(),
            kind,
        }
    }
}

impl Timestamped for VisionEvent {
    fn t(&self) -> f64 {
        self.t
    }
    fn set_t(&mut self, t: f64) {
        self.t = t;
    }
}

impl CheckInvariants for VisionEvent {
    fn check_invariants(&self) -> Result<(), String> {
        if !self.t.is_finite() {
            return Err("non-finite timestamp".into());
        }
        if self.kind.camera() != self.camera {
            return Err(format!("{} camera emitted {}", self.camera, self.kind.name()));
        }
        if let VisionKind::NearCollision { distance_m } = self.kind {
            if !(distance_m >= 0.0) {
                return Err(format!("negative distance {distance_m}"));
            }
        }
        Ok(())
    }
}

fn field<'a>(obj: &'a Map<String, Value>, name: &'static str) -> Result<&'a Value, ParseError> {
    obj.get(name).ok_or(ParseError::MalformedField {
        field: name,
        value: String::new(),
    })
}

fn number(obj: &Map<String, Value>, name: &'static str) -> Result<f64, ParseError> {
    let v = field(obj, name)?;
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ParseError::NonNumeric {
            field: name,
            value: v.to_string(),
        })
}

fn text<'a>(obj: &'a Map<String, Value>, name: &'static str) -> Result<&'a str, ParseError> {
    let v = field(obj, name)?;
    v.as_str().ok_or_else(|| ParseError::MalformedField {
        field: name,
        value: v.to_string(),
    })
}

fn choice<T: Copy>(obj: &Map<String, Value>, name: &'static str, options: &[(&str, T)]) -> Result<T, ParseError> {
    let s = text(obj, name)?;
    options
        .iter()
        .find(|(k, _)| *k == s)
        .map(|(_, v)| *v)
        .ok_or_else(|| ParseError::MalformedField {
            field: name,
            value: s.to_string(),
        })
}

pub fn parse_vision_event(line: &str) -> Result<VisionEvent, ParseError> {
    let value: Value = serde_json::from_str(line).map_err(|e| ParseError::InvalidJson(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ParseError::InvalidJson("not an object".into()))?;
    let t = number(obj, "t")?;
    let camera = match text(obj, "camera")? {
        "driver" => Camera::Driver,
        "front" => Camera::Front,
        other => return Err(ParseError::UnknownCamera(other.to_string())),
    };
    let kind_name = text(obj, "kind")?;
    let kind = match kind_name {
        "eye_state" => VisionKind::EyeState {
            closed: choice(obj, "state", &[("open", false), ("closed", true)])?,
        },
        "yawn" => VisionKind::Yawn,
        "head_pose" => VisionKind::HeadPose {
            yaw_deg: number(obj, "yaw_deg")?,
            pitch_deg: number(obj, "pitch_deg")?,
        },
        "phone_use" => VisionKind::PhoneUse,
        "smoking" => VisionKind::Smoking,
        "traffic_light" => VisionKind::TrafficLight {
            state: choice(
                obj,
                "state",
                &[("red", LightState::Red), ("yellow", LightState::Yellow), ("green", LightState::Green)],
            )?,
        },
        "stop_sign" => VisionKind::StopSign,
        "front_taillight" => VisionKind::FrontTaillight {
            on: choice(obj, "state", &[("on", true), ("off", false)])?,
        },
        "lane_crossing" => VisionKind::LaneCrossing,
        "near_collision" => {
            let d = number(obj, "distance_m")?;
            if d < 0.0 {
                return Err(ParseError::MalformedField {
                    field: "distance_m",
                    value: d.to_string(),
                });
            }
            VisionKind::NearCollision { distance_m: d }
        }
        "pedestrian" => {
            let v = field(obj, "crossing")?;
            VisionKind::Pedestrian {
                crossing: v.as_bool().ok_or_else(|| ParseError::MalformedField {
                    field: "crossing",
                    value: v.to_string(),
                })?,
            }
        }
        other => return Err(ParseError::UnknownKind(other.to_string())),
    };
    if kind.camera() != camera {
        return Err(ParseError::CameraKindMismatch {
            camera,
            kind: kind_name.to_string(),
        });
    }
    Ok(VisionEvent { t, camera, kind })
}

pub fn encode_vision_event(e: &VisionEvent) -> String {
    let attrs = match e.kind {
        VisionKind::EyeState { closed } => {
            format!(",\"state\":\"{}\"", if closed { "closed" } else { "open" })
        }
        VisionKind::HeadPose { yaw_deg, pitch_deg } => {
            format!(",\"yaw_deg\":{yaw_deg:.2},\"pitch_deg\":{pitch_deg:.2}")
        }
        VisionKind::TrafficLight { state } => format!(",\"state\":\"{}\"", state.as_str()),
        VisionKind::FrontTaillight { on } => {
            format!(",\"state\":\"{}\"", if on { "on" } else { "off" })
        }
        VisionKind::NearCollision { distance_m } => format!(",\"distance_m\":{distance_m:.2}"),
        VisionKind::Pedestrian { crossing } => format!(",\"crossing\":{crossing}"),
        VisionKind::Yawn
        | VisionKind::PhoneUse
        | VisionKind::Smoking
        | VisionKind::StopSign
        | VisionKind::LaneCrossing => String::new(),
    };
    format!(
        "{{\"t\":{:.4},\"camera\":\"{}\",\"kind\":\"{}\"{}}}",
        e.t,
        e.camera,
        e.kind.name(),
        attrs
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_pose() {
        let e = parse_vision_event(r#"{"t":12.0,"camera":"driver","kind":"head_pose","yaw_deg":35,"pitch_deg":-5}"#)
            .unwrap();
        assert_eq!(e.t, 12.0);
        assert_eq!(
            e.kind,
            VisionKind::HeadPose {
                yaw_deg: 35.0,
                pitch_deg: -5.0
            }
        );
    }

    #[test]
    fn traffic_light() {
        let e = parse_vision_event(r#"{"t":40.2,"camera":"front","kind":"traffic_light","state":"red"}"#).unwrap();
        assert_eq!(e.kind, VisionKind::TrafficLight { state: LightState::Red });
        assert_eq!(e.camera, Camera::Front);
    }

    #[test]
    fn camera_kind_mismatch() {
        assert_eq!(
            parse_vision_event(r#"{"t":3.0,"camera":"driver","kind":"near_collision","distance_m":5}"#),
            Err(ParseError::CameraKindMismatch {
                camera: Camera::Driver,
                kind: "near_collision".into()
            })
        );
    }

    #[test]
    fn unknown_kind_and_bad_json() {
        assert_eq!(
            parse_vision_event(r#"{"t":3.0,"camera":"front","kind":"emotion"}"#),
            Err(ParseError::UnknownKind("emotion".into()))
        );
        assert!(matches!(parse_vision_event("{\"t\":"), Err(ParseError::InvalidJson(_))));
        assert!(matches!(
            parse_vision_event(r#"{"t":3.0,"camera":"front","kind":"near_collision","distance_m":-1}"#),
            Err(ParseError::MalformedField { .. })
        ));
    }

    #[test]
    fn encode_parses_back() {
        let kinds = [
            VisionKind::EyeState { closed: true },
            VisionKind::Yawn,
            VisionKind::HeadPose { yaw_deg: -12.5, pitch_deg: 3.25 },
            VisionKind::PhoneUse,
            VisionKind::Smoking,
            VisionKind::TrafficLight { state: LightState::Yellow },
            VisionKind::StopSign,
            VisionKind::FrontTaillight { on: true },
            VisionKind::LaneCrossing,
            VisionKind::NearCollision { distance_m: 5.5 },
            VisionKind::Pedestrian { crossing: true },
        ];
        for k in kinds {
            let e = VisionEvent::new(1.25, k);
            assert_eq!(parse_vision_event(&encode_vision_event(&e)).unwrap(), e);
        }
    }
}

//! OBD-II mode 01 PID decoding.
//!
//! Frames are logged as CSV `t,PID,DATA` with the PID and payload in
//! upper-case hex, e.g. `12.3400,0C,1AF0`.

use serde::{Deserialize, Serialize};

use super::{parse_f64, CheckInvariants, ParseError, Timestamped};

pub const PID_ENGINE_RPM: u8 = 0x0C;
pub const PID_VEHICLE_SPEED: u8 = 0x0D;
pub const PID_PEDAL_POSITION_D: u8 = 0x49;

#[derive(Debug, Clone, PartialEq)]
pub struct RawObdFrame {
    pub t: f64,
    pub pid: u8,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "quantity", content = "value", rename_all = "snake_case")]
pub enum ObdValue {
    Rpm(f64),
    SpeedKph(f64),
    PedalPct(f64),
}

impl ObdValue {
    pub fn raw(self) -> f64 {
        match self {
            Self::Rpm(v) | Self::SpeedKph(v) | Self::PedalPct(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObdReading {
    pub t: f64,
    pub pid: u8,
    pub value: ObdValue,
}

impl Timestamped for ObdReading {
    fn t(&self) -> f64 {
        self.t
    }
    fn set_t(&mut self, t: f64) {
        self.t = t;
    }
}

impl CheckInvariants for ObdReading {
    fn check_invariants(&self) -> Result<(), String> {
        let ok = match self.value {
            ObdValue::Rpm(v) | ObdValue::SpeedKph(v) => v >= 0.0 && v.is_finite(),
            ObdValue::PedalPct(v) => (0.0..=100.0).contains(&v),
        };
        if !self.t.is_finite() {
            Err("non-finite timestamp".into())
        } else if ok {
            Ok(())
        } else {
            Err(format!("value out of range: {:?}", self.value))
        }
    }
}

/// One entry of the decode table.
pub struct PidSpec {
    pub pid: u8,
    pub name: &'static str,
    pub payload_len: usize,
    pub decode: fn(&[u8]) -> ObdValue,
    pub encode: fn(ObdValue) -> Vec<u8>,
}

fn decode_rpm(d: &[u8]) -> ObdValue {
    ObdValue::Rpm((256.0 * d[0] as f64 + d[1] as f64) / 4.0)
}

fn encode_rpm(v: ObdValue) -> Vec<u8> {
    let raw = (v.raw() * 4.0).round().clamp(0.0, u16::MAX as f64) as u16;
    raw.to_be_bytes().to_vec()
}

fn decode_speed(d: &[u8]) -> ObdValue {
    ObdValue::SpeedKph(d[0] as f64)
}

fn encode_speed(v: ObdValue) -> Vec<u8> {
    vec![v.raw().round().clamp(0.0, 255.0) as u8]
}

fn decode_pedal(d: &[u8]) -> ObdValue {
    ObdValue::PedalPct(100.0 * d[0] as f64 / 255.0)
}

fn encode_pedal(v: ObdValue) -> Vec<u8> {
    vec![(v.raw() * 255.0 / 100.0).round().clamp(0.0, 255.0) as u8]
}

pub static PID_TABLE: &[PidSpec] = &[
    PidSpec {
        pid: PID_ENGINE_RPM,
        name: "engine_rpm",
        payload_len: 2,
        decode: decode_rpm,
        encode: encode_rpm,
    },
    PidSpec {
        pid: PID_VEHICLE_SPEED,
        name: "vehicle_speed",
        payload_len: 1,
        decode: decode_speed,
        encode: encode_speed,
    },
    PidSpec {
        pid: PID_PEDAL_POSITION_D,
        name: "accelerator_pedal_position_d",
        payload_len: 1,
        decode: decode_pedal,
        encode: encode_pedal,
    },
];

pub fn pid_spec(pid: u8) -> Option<&'static PidSpec> {
    PID_TABLE.iter().find(|s| s.pid == pid)
}

pub fn decode_obd_frame(frame: &RawObdFrame) -> Result<ObdReading, ParseError> {
    let spec = pid_spec(frame.pid).ok_or(ParseError::UnsupportedPid(frame.pid))?;
    if frame.data.len() != spec.payload_len {
        return Err(ParseError::PayloadLengthMismatch {
            pid: frame.pid,
            expected: spec.payload_len,
            got: frame.data.len(),
        });
    }
    Ok(ObdReading {
        t: frame.t,
        pid: frame.pid,
        value: (spec.decode)(&frame.data),
    })
}

/// Inverse of [`decode_obd_frame`] up to the PID's quantization.
pub fn encode_obd_value(t: f64, value: ObdValue) -> RawObdFrame {
    let pid = match value {
        ObdValue::Rpm(_) => PID_ENGINE_RPM,
        ObdValue::SpeedKph(_) => PID_VEHICLE_SPEED,
        ObdValue::PedalPct(_) => PID_PEDAL_POSITION_D,
    };
    let spec = pid_spec(pid).expect("value kinds are all in the table");
    RawObdFrame {
        t,
        pid,
        data: (spec.encode)(value),
    }
}

fn parse_hex_bytes(s: &str) -> Result<Vec<u8>, ParseError> {
    let bad = || ParseError::MalformedField {
        field: "data",
        value: s.to_string(),
    };
    if s.is_empty() || s.len() % 2 != 0 || s.len() > 8 {
        return Err(bad());
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2).ok_or_else(bad)?, 16).map_err(|_| bad()))
        .collect()
}

pub fn parse_obd_line(line: &str) -> Result<RawObdFrame, ParseError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 3 {
        return Err(ParseError::FieldCount {
            expected: 3,
            got: fields.len(),
        });
    }
    let t = parse_f64("t", fields[0])?;
    let pid_text = fields[1].trim();
    if pid_text.len() != 2 {
        return Err(ParseError::MalformedField {
            field: "pid",
            value: pid_text.to_string(),
        });
    }
    let pid = u8::from_str_radix(pid_text, 16).map_err(|_| ParseError::MalformedField {
        field: "pid",
        value: pid_text.to_string(),
    })?;
    let data = parse_hex_bytes(fields[2].trim())?;
    Ok(RawObdFrame { t, pid, data })
}

pub fn encode_obd_frame(frame: &RawObdFrame) -> String {
    let mut s = format!("{:.4},{:02X},", frame.t, frame.pid);
    for b in &frame.data {
        s.push_str(&format!("{b:02X}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(pid: u8, data: &[u8]) -> RawObdFrame {
        RawObdFrame {
            t: 1.5,
            pid,
            data: data.to_vec(),
        }
    }

    #[test]
    fn reference_decodes() {
        assert_eq!(
            decode_obd_frame(&frame(0x0C, &[0, 0])).unwrap().value,
            ObdValue::Rpm(0.0)
        );
        // (256*26 + 240)/4
        assert_eq!(
            decode_obd_frame(&frame(0x0C, &[0x1A, 0xF0])).unwrap().value,
            ObdValue::Rpm(1724.0)
        );
        let r = decode_obd_frame(&frame(0x0D, &[0x3C])).unwrap();
        assert_eq!(r.value, ObdValue::SpeedKph(60.0));
        assert_eq!(r.t, 1.5);
        assert_eq!(
            decode_obd_frame(&frame(0x49, &[255])).unwrap().value,
            ObdValue::PedalPct(100.0)
        );
    }

    #[test]
    fn errors() {
        assert_eq!(
            decode_obd_frame(&frame(0x05, &[0x40])),
            Err(ParseError::UnsupportedPid(0x05))
        );
        assert_eq!(
            decode_obd_frame(&frame(0x0C, &[0x40])),
            Err(ParseError::PayloadLengthMismatch {
                pid: 0x0C,
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn csv_line() {
        let f = parse_obd_line("12.3400,0C,1AF0").unwrap();
        assert_eq!(f, RawObdFrame { t: 12.34, pid: 0x0C, data: vec![0x1A, 0xF0] });
        assert_eq!(encode_obd_frame(&f), "12.3400,0C,1AF0");
        assert!(matches!(parse_obd_line("1,0C"), Err(ParseError::FieldCount { .. })));
        assert!(matches!(parse_obd_line("1,0C,1AF"), Err(ParseError::MalformedField { .. })));
        assert!(matches!(parse_obd_line("x,0C,1AF0"), Err(ParseError::NonNumeric { .. })));
    }

    #[test]
    fn value_encoding_inverts_decoding() {
        for v in [ObdValue::Rpm(1724.0), ObdValue::SpeedKph(60.0), ObdValue::PedalPct(100.0)] {
            let back = decode_obd_frame(&encode_obd_value(0.0, v)).unwrap().value;
            assert_eq!(back, v);
        }
    }
}

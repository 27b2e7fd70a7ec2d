//! Raw sensor stream formats.
//!
//! Every stream file starts with one header comment line declaring the
//! stream, the logging unit, the stream epoch and the units, e.g.
//!
//! ```text
//! # drivesense stream=imu unit=telemetry epoch=2026-03-02T08:00:00Z units=s,m/s2,rad/s,uT
//! ```
//!
//! Record timestamps are seconds on the logging unit's clock, relative to
//! the epoch.

pub mod imu;
pub mod nmea;
pub mod obd;
pub mod sampling;
pub mod validate;
pub mod vision;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use thiserror::Error;

pub use imu::{encode_imu_record, parse_imu_record, ImuSample};
pub use nmea::{
    encode_gnss_log_line, encode_nmea_sentence, nmea_checksum, parse_gnss_log_line, parse_nmea_sentence, FixQuality, GeoPos, GgaSentence,
    GnssFix, NmeaSentence, RmcSentence,
};
pub use obd::{decode_obd_frame, encode_obd_frame, encode_obd_value, parse_obd_line, ObdReading, ObdValue, RawObdFrame};
pub use sampling::adaptive_downsample;
pub use validate::{validate_stream, Finding, ValidationReport};
pub use vision::{encode_vision_event, parse_vision_event, Camera, LightState, VisionEvent, VisionKind};

/// A record carrying one timestamp, on either a unit clock or the synced
/// timeline depending on pipeline stage.
pub trait Timestamped {
    fn t(&self) -> f64;
    fn set_t(&mut self, t: f64);
}

/// Per-record invariant check used by stream validation.
pub trait CheckInvariants {
    fn check_invariants(&self) -> Result<(), String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("checksum mismatch: sentence says {stated:02X}, computed {computed:02X}")]
    ChecksumMismatch { stated: u8, computed: u8 },
    #[error("unsupported sentence type `{0}`")]
    UnsupportedSentenceType(String),
    #[error("malformed field `{field}`: {value:?}")]
    MalformedField { field: &'static str, value: String },
    #[error("unsupported PID 0x{0:02X}")]
    UnsupportedPid(u8),
    #[error("PID 0x{pid:02X} expects {expected} data bytes, got {got}")]
    PayloadLengthMismatch { pid: u8, expected: usize, got: usize },
    #[error("expected {expected} fields, got {got}")]
    FieldCount { expected: usize, got: usize },
    #[error("field `{field}` is not numeric: {value:?}")]
    NonNumeric { field: &'static str, value: String },
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("unknown vision event kind `{0}`")]
    UnknownKind(String),
    #[error("unknown camera `{0}`")]
    UnknownCamera(String),
    #[error("{camera} camera cannot emit `{kind}` events")]
    CameraKindMismatch { camera: Camera, kind: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// A parse failure annotated with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {source}")]
pub struct LineError {
    pub line: usize,
    #[source]
    pub source: ParseError,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeaderError {
    #[error("missing stream header line")]
    Missing,
    #[error("header is missing key `{0}`")]
    MissingKey(&'static str),
    #[error("bad epoch `{0}`")]
    BadEpoch(String),
}

/// The one-line comment header every stream file starts with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamHeader {
    pub stream: String,
    pub unit: String,
    /// Unix seconds of the stream epoch.
    pub epoch: i64,
    pub units: String,
}

impl StreamHeader {
    pub fn new(stream: &str, unit: &str, epoch: i64, units: &str) -> Self {
        Self {
            stream: stream.to_string(),
            unit: unit.to_string(),
            epoch,
            units: units.to_string(),
        }
    }

    pub fn parse(line: &str) -> Result<Self, HeaderError> {
        let body = line.strip_prefix('#').ok_or(HeaderError::Missing)?;
        let mut kv = BTreeMap::new();
        for tok in body.split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                kv.insert(k, v);
            }
        }
        let get = |k: &'static str| kv.get(k).copied().ok_or(HeaderError::MissingKey(k));
        let epoch_text = get("epoch")?;
        let epoch = DateTime::parse_from_rfc3339(epoch_text)
            .map_err(|_| HeaderError::BadEpoch(epoch_text.to_string()))?
            .timestamp();
        Ok(Self {
            stream: get("stream")?.to_string(),
            unit: get("unit")?.to_string(),
            epoch,
            units: get("units")?.to_string(),
        })
    }

    pub fn epoch_rfc3339(&self) -> String {
        format_epoch(self.epoch)
    }
}

impl fmt::Display for StreamHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "# drivesense stream={} unit={} epoch={} units={}",
            self.stream,
            self.unit,
            self.epoch_rfc3339(),
            self.units
        )
    }
}

pub fn format_epoch(epoch: i64) -> String {
    DateTime::<Utc>::from_timestamp(epoch, 0)
        .expect("epoch in range")
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

/// Splits a stream file into its header and the numbered data lines,
/// skipping blank lines and further comments.
pub fn split_stream(text: &str) -> Result<(StreamHeader, Vec<(usize, &str)>), HeaderError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break StreamHeader::parse(l.trim_end())?,
            None => return Err(HeaderError::Missing),
        }
    };
    let body = lines
        .filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .map(|(i, l)| (i + 1, l.trim_end()))
        .collect();
    Ok((header, body))
}

/// Parses every data line with `parse`, stopping at the first failure.
pub fn parse_lines<T>(
    body: &[(usize, &str)],
    parse: impl Fn(&str) -> Result<T, ParseError>,
) -> Result<Vec<T>, LineError> {
    body.iter()
        .map(|&(line, text)| parse(text).map_err(|source| LineError { line, source }))
        .collect()
}

pub(crate) fn parse_f64(field: &'static str, s: &str) -> Result<f64, ParseError> {
    let v: f64 = s.trim().parse().map_err(|_| ParseError::NonNumeric {
        field,
        value: s.to_string(),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ParseError::NonNumeric {
            field,
            value: s.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let h = StreamHeader::new("imu", "telemetry", 1_772_438_400, "s,m/s2,rad/s,uT");
        let text = h.to_string();
        assert_eq!(
            text,
            "# drivesense stream=imu unit=telemetry epoch=2026-03-02T08:00:00Z units=s,m/s2,rad/s,uT"
        );
        assert_eq!(StreamHeader::parse(&text).unwrap(), h);
    }

    #[test]
    fn header_errors() {
        assert_eq!(StreamHeader::parse("0.1,2"), Err(HeaderError::Missing));
        assert_eq!(
            StreamHeader::parse("# stream=imu unit=x units=s"),
            Err(HeaderError::MissingKey("epoch"))
        );
        assert!(matches!(
            StreamHeader::parse("# stream=imu unit=x epoch=yesterday units=s"),
            Err(HeaderError::BadEpoch(_))
        ));
    }

    #[test]
    fn split_skips_comments_and_blanks() {
        let text = "# drivesense stream=obd unit=telemetry epoch=2026-03-02T08:00:00Z units=s\n\n0.1,0D,3C\n# note\n0.2,0D,3D\n";
        let (h, body) = split_stream(text).unwrap();
        assert_eq!(h.stream, "obd");
        assert_eq!(body, vec![(3, "0.1,0D,3C"), (5, "0.2,0D,3D")]);
    }
}

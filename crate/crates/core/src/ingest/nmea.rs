//! NMEA 0183 GGA / RMC sentences and the GNSS log line format.
//!
//! A GNSS log line is the unit receipt time followed by one space and the
//! raw sentence: `12.3456 $GPGGA,...*47`.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{parse_f64, CheckInvariants, ParseError, Timestamped};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixQuality {
    NoFix,
    Gps,
    Dgps,
    RtkFloat,
    RtkFixed,
}

impl FixQuality {
    /// GGA quality indicator digit.
    pub fn from_gga(code: &str) -> Result<Self, ParseError> {
        match code {
            "0" => Ok(Self::NoFix),
            "1" => Ok(Self::Gps),
            "2" => Ok(Self::Dgps),
            "4" => Ok(Self::RtkFixed),
            "5" => Ok(Self::RtkFloat),
            _ => Err(ParseError::MalformedField {
                field: "fix_quality",
                value: code.to_string(),
            }),
        }
    }

    pub fn gga_code(self) -> u8 {
        match self {
            Self::NoFix => 0,
            Self::Gps => 1,
            Self::Dgps => 2,
            Self::RtkFixed => 4,
            Self::RtkFloat => 5,
        }
    }

    pub fn is_rtk(self) -> bool {
        matches!(self, Self::RtkFixed | Self::RtkFloat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPos {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPos {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GgaSentence {
    pub talker: String,
    /// UTC time of day, seconds.
    pub utc_tod_s: f64,
    pub position: Option<GeoPos>,
    pub alt_m: f64,
    pub fix_quality: FixQuality,
    pub n_sats: u32,
    pub hdop: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmcSentence {
    pub talker: String,
    pub utc_tod_s: f64,
    pub date: NaiveDate,
    pub valid: bool,
    pub position: Option<GeoPos>,
    pub speed_knots: f64,
    pub course_deg: Option<f64>,
}

impl RmcSentence {
    /// Unix seconds of the sentence's UTC instant.
    pub fn unix_time(&self) -> f64 {
        let midnight = self
            .date
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            .and_utc()
            .timestamp();
        midnight as f64 + self.utc_tod_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NmeaSentence {
    Gga(GgaSentence),
    Rmc(RmcSentence),
}

/// A GNSS position fix. `t` is on the unit clock until synchronized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnssFix {
    pub t: f64,
    pub position: Option<GeoPos>,
    pub alt_m: f64,
    pub fix_quality: FixQuality,
    pub hdop: f64,
    pub n_sats: u32,
}

impl GnssFix {
    pub fn from_gga(t: f64, gga: &GgaSentence) -> Self {
        Self {
            t,
            position: gga.position,
            alt_m: gga.alt_m,
            fix_quality: gga.fix_quality,
            hdop: gga.hdop,
            n_sats: gga.n_sats,
        }
    }
}

impl Timestamped for GnssFix {
    fn t(&self) -> f64 {
        self.t
    }
    fn set_t(&mut self, t: f64) {
        self.t = t;
    }
}

impl CheckInvariants for GnssFix {
    fn check_invariants(&self) -> Result<(), String> {
        if !self.t.is_finite() {
            return Err("non-finite timestamp".into());
        }
        if self.fix_quality == FixQuality::NoFix && self.position.is_some() {
            return Err("NoFix record carries a position".into());
        }
        if let Some(p) = self.position {
            if !p.is_valid() {
                return Err(format!("position out of range: {}, {}", p.lat, p.lon));
            }
        }
        if !(self.hdop >= 0.0) {
            return Err(format!("negative hdop {}", self.hdop));
        }
        Ok(())
    }
}

/// XOR of all bytes strictly between `$` and `*`.
pub fn nmea_checksum(payload: &[u8]) -> u8 {
    payload.iter().fold(0u8, |acc, b| acc ^ b)
}

fn malformed(field: &'static str, value: &str) -> ParseError {
    ParseError::MalformedField {
        field,
        value: value.to_string(),
    }
}

pub fn parse_nmea_sentence(line: &str) -> Result<NmeaSentence, ParseError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let bytes = line.as_bytes();
    if bytes.first() != Some(&b'$') {
        return Err(malformed("framing", line));
    }
    // Sentence must end in `*HH`.
    if bytes.len() < 4 || bytes[bytes.len() - 3] != b'*' {
        return Err(malformed("checksum", line));
    }
    let payload = &line[1..line.len() - 3];
    let digits = &line[line.len() - 2..];
    // Upper case only, so that a flipped case bit cannot pass unnoticed.
    if !digits.bytes().all(|b| matches!(b, b'0'..=b'9' | b'A'..=b'F')) {
        return Err(malformed("checksum", digits));
    }
    let stated = u8::from_str_radix(digits, 16).map_err(|_| malformed("checksum", digits))?;
    let computed = nmea_checksum(payload.as_bytes());
    if stated != computed {
        return Err(ParseError::ChecksumMismatch { stated, computed });
    }

    let fields: Vec<&str> = payload.split(',').collect();
    let address = fields[0];
    if address.len() != 5 || !address.bytes().all(|b| b.is_ascii_uppercase()) {
        return Err(malformed("address", address));
    }
    let (talker, kind) = address.split_at(2);
    match kind {
        "GGA" => parse_gga(talker, &fields).map(NmeaSentence::Gga),
        "RMC" => parse_rmc(talker, &fields).map(NmeaSentence::Rmc),
        other => Err(ParseError::UnsupportedSentenceType(other.to_string())),
    }
}

fn parse_tod(s: &str) -> Result<f64, ParseError> {
    let err = || malformed("utc_time", s);
    if s.len() < 6 || !s.is_char_boundary(6) {
        return Err(err());
    }
    let (hms, frac) = s.split_at(6);
    if !hms.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    let h: u32 = hms[0..2].parse().map_err(|_| err())?;
    let m: u32 = hms[2..4].parse().map_err(|_| err())?;
    let sec: u32 = hms[4..6].parse().map_err(|_| err())?;
    if h > 23 || m > 59 || sec > 60 {
        return Err(err());
    }
    let frac = if frac.is_empty() {
        0.0
    } else {
        let digits = frac.strip_prefix('.').ok_or_else(err)?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        format!("0.{digits}").parse::<f64>().map_err(|_| err())?
    };
    Ok((h * 3600 + m * 60 + sec) as f64 + frac)
}

/// `ddmm.mmmm` / `dddmm.mmmm` to decimal degrees.
fn parse_coord(
    field: &'static str,
    s: &str,
    hemi: &str,
    deg_digits: usize,
    pos: char,
    neg: char,
) -> Result<f64, ParseError> {
    let err = || malformed(field, s);
    let dot = s.find('.').unwrap_or(s.len());
    if dot != deg_digits + 2 || !s.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
        return Err(err());
    }
    let deg: f64 = s[..deg_digits].parse().map_err(|_| err())?;
    let min: f64 = s[deg_digits..].parse().map_err(|_| err())?;
    if min >= 60.0 {
        return Err(err());
    }
    let v = deg + min / 60.0;
    let sign = match hemi.chars().next() {
        Some(c) if c == pos && hemi.len() == 1 => 1.0,
        Some(c) if c == neg && hemi.len() == 1 => -1.0,
        _ => return Err(malformed("hemisphere", hemi)),
    };
    Ok(sign * v)
}

fn parse_position(f: &[&str], at: usize) -> Result<Option<GeoPos>, ParseError> {
    let (lat, ns, lon, ew) = (f[at], f[at + 1], f[at + 2], f[at + 3]);
    if lat.is_empty() && ns.is_empty() && lon.is_empty() && ew.is_empty() {
        return Ok(None);
    }
    let lat = parse_coord("latitude", lat, ns, 2, 'N', 'S')?;
    let lon = parse_coord("longitude", lon, ew, 3, 'E', 'W')?;
    let p = GeoPos::new(lat, lon);
    if !p.is_valid() {
        return Err(malformed("latitude", &format!("{lat},{lon}")));
    }
    Ok(Some(p))
}

fn parse_gga(talker: &str, f: &[&str]) -> Result<GgaSentence, ParseError> {
    if f.len() < 15 {
        return Err(ParseError::FieldCount {
            expected: 15,
            got: f.len(),
        });
    }
    let utc_tod_s = parse_tod(f[1])?;
    let fix_quality = FixQuality::from_gga(f[6])?;
    let position = parse_position(f, 2)?;
    let position = match (fix_quality, position) {
        (FixQuality::NoFix, _) => None,
        (_, Some(p)) => Some(p),
        (_, None) => return Err(malformed("latitude", "")),
    };
    let n_sats = if f[7].is_empty() {
        0
    } else {
        f[7].parse::<u32>().map_err(|_| malformed("n_sats", f[7]))?
    };
    let hdop = if f[8].is_empty() {
        0.0
    } else {
        let v = f[8].parse::<f64>().map_err(|_| malformed("hdop", f[8]))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(malformed("hdop", f[8]));
        }
        v
    };
    let alt_m = if f[9].is_empty() {
        0.0
    } else {
        let v = f[9].parse::<f64>().map_err(|_| malformed("altitude", f[9]))?;
        if !v.is_finite() {
            return Err(malformed("altitude", f[9]));
        }
        v
    };
    if !f[10].is_empty() && f[10] != "M" {
        return Err(malformed("altitude_units", f[10]));
    }
    Ok(GgaSentence {
        talker: talker.to_string(),
        utc_tod_s,
        position,
        alt_m,
        fix_quality,
        n_sats,
        hdop,
    })
}

fn parse_rmc(talker: &str, f: &[&str]) -> Result<RmcSentence, ParseError> {
    if f.len() < 12 {
        return Err(ParseError::FieldCount {
            expected: 12,
            got: f.len(),
        });
    }
    let utc_tod_s = parse_tod(f[1])?;
    let valid = match f[2] {
        "A" => true,
        "V" => false,
        other => return Err(malformed("status", other)),
    };
    let position = parse_position(f, 3)?;
    let speed_knots = if f[7].is_empty() {
        0.0
    } else {
        let v = parse_f64("speed_knots", f[7]).map_err(|_| malformed("speed_knots", f[7]))?;
        if v < 0.0 {
            return Err(malformed("speed_knots", f[7]));
        }
        v
    };
    let course_deg = if f[8].is_empty() {
        None
    } else {
        Some(parse_f64("course", f[8]).map_err(|_| malformed("course", f[8]))?)
    };
    let d = f[9];
    if d.len() != 6 || !d.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed("date", d));
    }
    let day: u32 = d[0..2].parse().map_err(|_| malformed("date", d))?;
    let month: u32 = d[2..4].parse().map_err(|_| malformed("date", d))?;
    let year: i32 = 2000 + d[4..6].parse::<i32>().map_err(|_| malformed("date", d))?;
    let date = NaiveDate::from_ymd_opt(year, month, day).ok_or_else(|| malformed("date", d))?;
    Ok(RmcSentence {
        talker: talker.to_string(),
        utc_tod_s,
        date,
        valid,
        position,
        speed_knots,
        course_deg,
    })
}

fn fmt_tod(tod: f64) -> String {
    let cs = (tod * 100.0).round() as i64;
    let cs = cs.rem_euclid(86_400 * 100);
    let (secs, frac) = (cs / 100, cs % 100);
    format!(
        "{:02}{:02}{:02}.{:02}",
        secs / 3600,
        (secs / 60) % 60,
        secs % 60,
        frac
    )
}

const MIN_DECIMALS: u32 = 7;

fn fmt_coord(v: f64, deg_digits: usize, pos: char, neg: char) -> (String, char) {
    let scale = 10i64.pow(MIN_DECIMALS);
    let ticks = (v.abs() * 60.0 * scale as f64).round() as i64;
    let per_deg = 60 * scale;
    let (deg, rem) = (ticks / per_deg, ticks % per_deg);
    let (min_int, min_frac) = (rem / scale, rem % scale);
    let text = format!(
        "{deg:0dw$}{min_int:02}.{min_frac:0fw$}",
        dw = deg_digits,
        fw = MIN_DECIMALS as usize
    );
    (text, if v < 0.0 { neg } else { pos })
}

fn fmt_position(p: Option<GeoPos>) -> String {
    match p {
        None => ",,,".to_string(),
        Some(p) => {
            let (lat, ns) = fmt_coord(p.lat, 2, 'N', 'S');
            let (lon, ew) = fmt_coord(p.lon, 3, 'E', 'W');
            format!("{lat},{ns},{lon},{ew}")
        }
    }
}

fn frame(payload: &str) -> String {
    format!("${payload}*{:02X}", nmea_checksum(payload.as_bytes()))
}

pub fn encode_gga(s: &GgaSentence) -> String {
    let position = if s.fix_quality == FixQuality::NoFix {
        None
    } else {
        s.position
    };
    frame(&format!(
        "{}GGA,{},{},{},{:02},{:.1},{:.2},M,0.0,M,,",
        s.talker,
        fmt_tod(s.utc_tod_s),
        fmt_position(position),
        s.fix_quality.gga_code(),
        s.n_sats,
        s.hdop,
        s.alt_m
    ))
}

pub fn encode_rmc(s: &RmcSentence) -> String {
    let course = s.course_deg.map(|c| format!("{c:.1}")).unwrap_or_default();
    frame(&format!(
        "{}RMC,{},{},{},{:.3},{},{:02}{:02}{:02},,,{}",
        s.talker,
        fmt_tod(s.utc_tod_s),
        if s.valid { 'A' } else { 'V' },
        fmt_position(s.position),
        s.speed_knots,
        course,
        s.date.day(),
        s.date.month(),
        s.date.year() % 100,
        if s.valid { 'A' } else { 'N' },
    ))
}

pub fn encode_nmea_sentence(s: &NmeaSentence) -> String {
    match s {
        NmeaSentence::Gga(g) => encode_gga(g),
        NmeaSentence::Rmc(r) => encode_rmc(r),
    }
}

/// `<t_unit> <sentence>`
pub fn parse_gnss_log_line(line: &str) -> Result<(f64, NmeaSentence), ParseError> {
    let (t, sentence) = line
        .split_once(' ')
        .ok_or_else(|| malformed("receipt_time", line))?;
    let t = parse_f64("receipt_time", t)?;
    Ok((t, parse_nmea_sentence(sentence.trim())?))
}

pub fn encode_gnss_log_line(t_unit: f64, s: &NmeaSentence) -> String {
    format!("{t_unit:.4} {}", encode_nmea_sentence(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "$GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,*47";

    #[test]
    fn checksum_of_reference_sentence() {
        // Hand XOR over the payload bytes gives 0x47.
        let payload = &SAMPLE[1..SAMPLE.len() - 3];
        let mut x = 0u8;
        for b in payload.bytes() {
            x ^= b;
        }
        assert_eq!(x, 0x47);
        assert_eq!(nmea_checksum(payload.as_bytes()), 0x47);
    }

    #[test]
    fn parses_reference_gga() {
        let NmeaSentence::Gga(g) = parse_nmea_sentence(SAMPLE).unwrap() else {
            panic!("expected GGA")
        };
        let p = g.position.unwrap();
        // 48 + 7.038/60 and 11 + 31/60
        assert!((p.lat - 48.1173).abs() < 1e-9);
        assert!((p.lon - 11.516_666_666_666_667).abs() < 1e-9);
        assert_eq!(g.fix_quality, FixQuality::Gps);
        assert_eq!(g.n_sats, 8);
        assert_eq!(g.hdop, 0.9);
        assert_eq!(g.alt_m, 545.4);
        assert_eq!(g.utc_tod_s, 12.0 * 3600.0 + 35.0 * 60.0 + 19.0);
    }

    #[test]
    fn flipped_checksum_digit_rejected() {
        let bad = SAMPLE.replace("*47", "*46");
        assert_eq!(
            parse_nmea_sentence(&bad),
            Err(ParseError::ChecksumMismatch {
                stated: 0x46,
                computed: 0x47
            })
        );
    }

    #[test]
    fn lower_case_checksum_rejected() {
        let s = frame("GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,");
        assert!(parse_nmea_sentence(&s).is_ok());
        let digits = &s[s.len() - 2..];
        if digits.bytes().any(|b| b.is_ascii_alphabetic()) {
            let lower = format!("{}{}", &s[..s.len() - 2], digits.to_ascii_lowercase());
            assert!(parse_nmea_sentence(&lower).is_err());
        }
        assert!(parse_nmea_sentence(&SAMPLE.replace("*47", "*4a")).is_err());
    }

    #[test]
    fn quality_four_is_rtk_fixed() {
        let payload = "GPGGA,123519,4807.038,N,01131.000,E,4,08,0.9,545.4,M,46.9,M,,";
        let NmeaSentence::Gga(g) = parse_nmea_sentence(&frame(payload)).unwrap() else {
            panic!()
        };
        assert_eq!(g.fix_quality, FixQuality::RtkFixed);
        let payload = payload.replace(",E,4,", ",E,5,");
        let NmeaSentence::Gga(g) = parse_nmea_sentence(&frame(&payload)).unwrap() else {
            panic!()
        };
        assert_eq!(g.fix_quality, FixQuality::RtkFloat);
    }

    #[test]
    fn no_fix_has_no_position() {
        let s = frame("GPGGA,123519,,,,,0,00,,,M,,M,,");
        let NmeaSentence::Gga(g) = parse_nmea_sentence(&s).unwrap() else {
            panic!()
        };
        assert_eq!(g.fix_quality, FixQuality::NoFix);
        assert!(g.position.is_none());
        assert!(GnssFix::from_gga(0.0, &g).check_invariants().is_ok());
    }

    #[test]
    fn unsupported_and_malformed() {
        let s = frame("GPGSV,3,1,11,03,03,111,00");
        assert_eq!(
            parse_nmea_sentence(&s),
            Err(ParseError::UnsupportedSentenceType("GSV".into()))
        );
        let s = frame("GPGGA,123519,4807.038,Q,01131.000,E,1,08,0.9,545.4,M,46.9,M,,");
        assert!(matches!(
            parse_nmea_sentence(&s),
            Err(ParseError::MalformedField {
                field: "hemisphere",
                ..
            })
        ));
        let s = frame("GPGGA,1235x9,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,");
        assert!(matches!(
            parse_nmea_sentence(&s),
            Err(ParseError::MalformedField {
                field: "utc_time",
                ..
            })
        ));
        assert!(parse_nmea_sentence("GPGGA,1*00").is_err());
    }

    #[test]
    fn southern_western_hemispheres() {
        let s = frame("GPGGA,000001.50,3352.1280000,S,15112.6560000,W,1,09,1.1,10.00,M,0.0,M,,");
        let NmeaSentence::Gga(g) = parse_nmea_sentence(&s).unwrap() else {
            panic!()
        };
        let p = g.position.unwrap();
        assert!((p.lat + (33.0 + 52.128 / 60.0)).abs() < 1e-12);
        assert!((p.lon + (151.0 + 12.656 / 60.0)).abs() < 1e-12);
        assert_eq!(g.utc_tod_s, 1.5);
    }

    #[test]
    fn rmc_parse_and_unix_time() {
        let rmc = RmcSentence {
            talker: "GP".into(),
            utc_tod_s: 8.0 * 3600.0 + 0.25,
            date: NaiveDate::from_ymd_opt(2026, 3, 2).unwrap(),
            valid: true,
            position: Some(GeoPos::new(40.0, -83.0)),
            speed_knots: 21.6,
            course_deg: Some(90.0),
        };
        let text = encode_rmc(&rmc);
        let NmeaSentence::Rmc(back) = parse_nmea_sentence(&text).unwrap() else {
            panic!()
        };
        assert_eq!(back, rmc);
        assert_eq!(back.unix_time(), 1_772_438_400.25);
    }

    #[test]
    fn log_line_round_trip() {
        let (t, s) = parse_gnss_log_line(&format!("12.3456 {SAMPLE}")).unwrap();
        assert_eq!(t, 12.3456);
        let line = encode_gnss_log_line(t, &s);
        let (t2, s2) = parse_gnss_log_line(&line).unwrap();
        assert_eq!((t2, s2), (t, s));
    }

    #[test]
    fn coordinate_carry_at_sixty_minutes() {
        let (text, hemi) = fmt_coord(48.999_999_999_99, 2, 'N', 'S');
        assert_eq!(text, "4900.0000000");
        assert_eq!(hemi, 'N');
    }
}

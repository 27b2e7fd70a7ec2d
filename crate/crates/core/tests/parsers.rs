use chrono::NaiveDate;
use drivesense_core::ingest::{
    decode_obd_frame, encode_gnss_log_line, encode_imu_record, encode_nmea_sentence, encode_obd_frame,
    encode_vision_event, nmea_checksum, parse_gnss_log_line, parse_imu_record, parse_nmea_sentence, parse_obd_line,
    parse_vision_event, split_stream, FixQuality, GeoPos, GgaSentence, ImuSample, LightState, NmeaSentence, ObdValue,
    ParseError, RawObdFrame, RmcSentence, VisionEvent, VisionKind,
};
use proptest::prelude::*;

fn on_grid(lo: i64, hi: i64, scale: f64) -> impl Strategy<Value = f64> {
    (lo..=hi).prop_map(move |k| k as f64 / scale)
}

fn position() -> impl Strategy<Value = GeoPos> {
    (-89.9f64..89.9, -179.9f64..179.9).prop_map(|(lat, lon)| GeoPos::new(lat, lon))
}

fn quality() -> impl Strategy<Value = FixQuality> {
    prop_oneof![
        Just(FixQuality::NoFix),
        Just(FixQuality::Gps),
        Just(FixQuality::Dgps),
        Just(FixQuality::RtkFloat),
        Just(FixQuality::RtkFixed),
    ]
}

fn gga() -> impl Strategy<Value = GgaSentence> {
    (
        on_grid(0, 8_639_999, 100.0),
        position(),
        on_grid(-10_000, 500_000, 100.0),
        quality(),
        0u32..=24,
        on_grid(5, 500, 10.0),
    )
        .prop_map(|(tod, p, alt, q, n_sats, hdop)| GgaSentence {
            talker: "GP".into(),
            utc_tod_s: tod,
            position: (q != FixQuality::NoFix).then_some(p),
            alt_m: alt,
            fix_quality: q,
            n_sats,
            hdop,
        })
}

fn rmc() -> impl Strategy<Value = RmcSentence> {
    (
        on_grid(0, 8_639_999, 100.0),
        (2000i32..2100, 1u32..=12, 1u32..=28),
        any::<bool>(),
        proptest::option::of(position()),
        on_grid(0, 200_000, 1000.0),
        proptest::option::of(on_grid(0, 3599, 10.0)),
    )
        .prop_map(|(tod, (y, m, d), valid, p, speed, course)| RmcSentence {
            talker: "GN".into(),
            utc_tod_s: tod,
            date: NaiveDate::from_ymd_opt(y, m, d).unwrap(),
            valid,
            position: p,
            speed_knots: speed,
            course_deg: course,
        })
}

fn sentence() -> impl Strategy<Value = NmeaSentence> {
    prop_oneof![gga().prop_map(NmeaSentence::Gga), rmc().prop_map(NmeaSentence::Rmc)]
}

fn imu() -> impl Strategy<Value = ImuSample> {
    let axis = |lo, hi, scale| proptest::array::uniform3(on_grid(lo, hi, scale));
    (
        on_grid(0, 100_000_000, 1e4),
        axis(-500_000, 500_000, 1e4),
        axis(-1_000_000, 1_000_000, 1e5),
        axis(-10_000, 10_000, 1e2),
    )
        .prop_map(|(t, accel, gyro, mag)| ImuSample { t, accel, gyro, mag })
}

fn vision_kind() -> impl Strategy<Value = VisionKind> {
    prop_oneof![
        any::<bool>().prop_map(|closed| VisionKind::EyeState { closed }),
        Just(VisionKind::Yawn),
        (on_grid(-9000, 9000, 100.0), on_grid(-4500, 4500, 100.0))
            .prop_map(|(yaw_deg, pitch_deg)| VisionKind::HeadPose { yaw_deg, pitch_deg }),
        Just(VisionKind::PhoneUse),
        Just(VisionKind::Smoking),
        prop_oneof![Just(LightState::Red), Just(LightState::Yellow), Just(LightState::Green)]
            .prop_map(|state| VisionKind::TrafficLight { state }),
        Just(VisionKind::StopSign),
        any::<bool>().prop_map(|on| VisionKind::FrontTaillight { on }),
        Just(VisionKind::LaneCrossing),
        on_grid(0, 10_000, 100.0).prop_map(|distance_m| VisionKind::NearCollision { distance_m }),
        any::<bool>().prop_map(|crossing| VisionKind::Pedestrian { crossing }),
    ]
}

fn obd_frame() -> impl Strategy<Value = RawObdFrame> {
    (
        on_grid(0, 100_000_000, 1e4),
        prop_oneof![Just((0x0Cu8, 2usize)), Just((0x0D, 1)), Just((0x49, 1))],
        proptest::collection::vec(any::<u8>(), 2),
    )
        .prop_map(|(t, (pid, len), mut data)| {
            data.truncate(len);
            RawObdFrame { t, pid, data }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn nmea_text_round_trip(t in on_grid(0, 100_000_000, 1e4), s in sentence()) {
        let line = encode_gnss_log_line(t, &s);
        let (t2, back) = parse_gnss_log_line(&line).unwrap();
        prop_assert_eq!(encode_gnss_log_line(t2, &back), line);
    }

    #[test]
    fn nmea_fields_survive(s in sentence()) {
        let back = parse_nmea_sentence(&encode_nmea_sentence(&s)).unwrap();
        match (&s, &back) {
            (NmeaSentence::Gga(a), NmeaSentence::Gga(b)) => {
                prop_assert_eq!(a.utc_tod_s, b.utc_tod_s);
                prop_assert_eq!(a.fix_quality, b.fix_quality);
                prop_assert_eq!(a.n_sats, b.n_sats);
                prop_assert_eq!(a.hdop, b.hdop);
                prop_assert_eq!(a.alt_m, b.alt_m);
                if let (Some(p), Some(q)) = (a.position, b.position) {
                    // 7 decimal minutes, well under a millimeter.
                    prop_assert!((p.lat - q.lat).abs() < 1e-8 && (p.lon - q.lon).abs() < 1e-8);
                } else {
                    prop_assert_eq!(a.position.is_some(), b.position.is_some());
                }
            }
            (NmeaSentence::Rmc(a), NmeaSentence::Rmc(b)) => {
                prop_assert_eq!(a.date, b.date);
                prop_assert_eq!(a.valid, b.valid);
                prop_assert_eq!(a.speed_knots, b.speed_knots);
                prop_assert_eq!(a.course_deg, b.course_deg);
            }
            _ => prop_assert!(false, "sentence type changed"),
        }
    }

    #[test]
    fn nmea_single_bit_flip_rejected(s in sentence(), pos in any::<prop::sample::Index>(), bit in 0u32..8) {
        let mut bytes = encode_nmea_sentence(&s).into_bytes();
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        if let Ok(text) = String::from_utf8(bytes) {
            prop_assert!(parse_nmea_sentence(&text).is_err(), "accepted {}", text);
        }
    }

    #[test]
    fn imu_round_trip(s in imu()) {
        let line = encode_imu_record(&s);
        let back = parse_imu_record(&line).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(encode_imu_record(&back), line);
    }

    #[test]
    fn obd_round_trip(f in obd_frame()) {
        let line = encode_obd_frame(&f);
        let back = parse_obd_line(&line).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(encode_obd_frame(&back), line);
        prop_assert!(decode_obd_frame(&back).is_ok());
    }

    #[test]
    fn vision_round_trip(t in on_grid(0, 100_000_000, 1e4), kind in vision_kind()) {
        let e = VisionEvent::new(t, kind);
        let line = encode_vision_event(&e);
        let back = parse_vision_event(&line).unwrap();
        prop_assert_eq!(&back, &e);
        prop_assert_eq!(encode_vision_event(&back), line);
    }

    #[test]
    fn obd_decode_matches_arithmetic(a in any::<u8>(), b in any::<u8>()) {
        let rpm = decode_obd_frame(&RawObdFrame { t: 0.0, pid: 0x0C, data: vec![a, b] }).unwrap();
        prop_assert_eq!(rpm.value, ObdValue::Rpm((a as f64 * 256.0 + b as f64) / 4.0));
        let speed = decode_obd_frame(&RawObdFrame { t: 0.0, pid: 0x0D, data: vec![a] }).unwrap();
        prop_assert_eq!(speed.value, ObdValue::SpeedKph(a as f64));
        let pedal = decode_obd_frame(&RawObdFrame { t: 0.0, pid: 0x49, data: vec![a] }).unwrap();
        prop_assert!((pedal.value.raw() - a as f64 * 100.0 / 255.0).abs() < 1e-12);
    }
}

#[test]
fn obd_rejects_wrong_length_and_unknown_pid() {
    assert!(matches!(
        decode_obd_frame(&RawObdFrame { t: 0.0, pid: 0x0C, data: vec![1] }),
        Err(ParseError::PayloadLengthMismatch { pid: 0x0C, expected: 2, got: 1 })
    ));
    assert!(matches!(
        decode_obd_frame(&RawObdFrame { t: 0.0, pid: 0x05, data: vec![1] }),
        Err(ParseError::UnsupportedPid(0x05))
    ));
}

#[test]
fn checksum_is_xor_of_payload() {
    let payload = b"GPRMC,,V,,,,,,,,,,N";
    let mut x = 0u8;
    for b in payload {
        x ^= b;
    }
    assert_eq!(nmea_checksum(payload), x);
}

#[test]
fn stream_header_required() {
    assert!(split_stream("1.0,0C,1AF0\n").is_err());
}

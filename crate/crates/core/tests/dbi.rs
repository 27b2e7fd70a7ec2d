use std::collections::BTreeMap;

use chrono::NaiveDate;
use drivesense_core::fusion::dbi::{index_csv, AbnormalStats, BrakingStats, ReactionStats, INDEX_CSV_HEADER};
use drivesense_core::fusion::{
    compute_dbi, DbiStats, DetectedEvent, DetectedKind, Period, PeriodKind, Stimulus, TravelStats, Trip,
};
use proptest::prelude::*;

fn stats() -> impl Strategy<Value = DbiStats> {
    let travel = proptest::array::uniform5(0u64..1 << 40).prop_map(|v| TravelStats {
        n_trips: v[0] % 50,
        total_mm: v[1],
        highway_mm: v[2],
        night_mm: v[3],
        severe_weather_mm: v[4],
    });
    let abnormal = proptest::array::uniform6(0u64..100).prop_map(|v| AbnormalStats {
        n_getting_lost: v[0],
        n_signal_violations: v[1],
        n_near_collisions: v[2],
        n_distraction_episodes: v[3],
        n_eyes_closed_episodes: v[4],
        n_lane_crossings: v[5],
    });
    let reaction = proptest::collection::btree_map(
        prop_oneof![
            Just(Stimulus::LightGreenToRed),
            Just(Stimulus::LightRedToGreen),
            Just(Stimulus::FrontTaillight),
            Just(Stimulus::Pothole),
        ],
        (proptest::collection::vec(0.05f64..4.0, 0..6), 0u64..5).prop_map(|(mut l, n_missed)| {
            l.sort_by(f64::total_cmp);
            ReactionStats {
                latencies_s: l,
                n_missed,
            }
        }),
        0..4,
    );
    let braking = (0u64..50, 0u64..50).prop_map(|(a, b)| BrakingStats {
        n_harsh_brakes: a,
        n_brakes_with_prior_gaze_offroad: b,
    });
    (travel, abnormal, reaction, braking).prop_map(|(travel, abnormal, reaction, braking)| DbiStats {
        travel,
        abnormal,
        reaction,
        braking,
    })
}

fn event(t: f64, kind: DetectedKind) -> DetectedEvent {
    DetectedEvent {
        kind,
        t_sync: t,
        duration_s: 0.0,
        location: None,
        severity: 1,
    }
}

/// A trip starting `day` days after 2026-03-02 (a Monday) at 08:00 UTC.
fn trip(day: u64, n_distractions: usize, n_closed: usize, total_mm: u64) -> Trip {
    let epoch = 1_772_409_600 + day as i64 * 86_400 + 8 * 3600;
    let mut events = Vec::new();
    for i in 0..n_distractions {
        events.push(event(10.0 + i as f64, DetectedKind::DistractionEpisode));
    }
    for i in 0..n_closed {
        events.push(event(50.0 + i as f64, DetectedKind::EyesClosedEpisode));
    }
    events.push(event(
        70.0,
        DetectedKind::ReactionSample {
            stimulus: Stimulus::FrontTaillight,
            latency_s: 0.8 + day as f64 * 0.01,
        },
    ));
    Trip {
        trip_id: format!("T{day}"),
        driver_id: "D1".into(),
        epoch,
        t_start: 5.0,
        t_end: 600.0,
        distance_m: total_mm as f64 / 1000.0,
        matched_edges: Vec::new(),
        events,
        streams: Vec::new(),
        travel: TravelStats {
            n_trips: 1,
            total_mm,
            highway_mm: total_mm / 3,
            night_mm: 0,
            severe_weather_mm: total_mm / 5,
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn merge_is_associative_and_commutative(a in stats(), b in stats(), c in stats()) {
        prop_assert_eq!(a.merge(&b).merge(&c), a.merge(&b.merge(&c)));
        prop_assert_eq!(a.merge(&b), b.merge(&a));
        prop_assert_eq!(a.merge(&DbiStats::default()), a.clone());
    }

    #[test]
    fn weeks_are_sums_of_days(
        days in proptest::collection::vec((0u64..28, 0usize..4, 0usize..3, 0u64..50_000_000), 0..30)
    ) {
        let trips: Vec<Trip> = days.iter().map(|&(d, n, c, mm)| trip(d, n, c, mm)).collect();
        let first = NaiveDate::from_ymd_opt(2026, 3, 2).unwrap();
        let last = NaiveDate::from_ymd_opt(2026, 3, 29).unwrap();
        let daily = compute_dbi("D1", &trips, PeriodKind::Day, first, last, 0.0);
        prop_assert_eq!(daily.len(), 28);
        let weekly = compute_dbi("D1", &trips, PeriodKind::Week, first, last, 0.0);
        prop_assert_eq!(weekly.len(), 4);
        for w in &weekly {
            let (mut dist, mut closed, mut mm, mut samples) = (0, 0, 0, 0);
            for d in &daily {
                let date = NaiveDate::parse_from_str(&d.period.id, "%Y-%m-%d").unwrap();
                if Period::of(PeriodKind::Week, date) == w.period {
                    dist += d.stats.abnormal.n_distraction_episodes;
                    closed += d.stats.abnormal.n_eyes_closed_episodes;
                    mm += d.stats.travel.total_mm;
                    samples += d.stats.reaction.get(&Stimulus::FrontTaillight).map_or(0, |r| r.n_samples());
                }
            }
            prop_assert_eq!(w.stats.abnormal.n_distraction_episodes, dist);
            prop_assert_eq!(w.stats.abnormal.n_eyes_closed_episodes, closed);
            prop_assert_eq!(w.stats.travel.total_mm, mm);
            prop_assert_eq!(w.stats.reaction.get(&Stimulus::FrontTaillight).map_or(0, |r| r.n_samples()), samples);
            let t = &w.stats.travel;
            prop_assert!(t.highway_mm <= t.total_mm && t.night_mm <= t.total_mm && t.severe_weather_mm <= t.total_mm);
        }
    }
}

#[test]
fn index_csv_has_one_row_per_day() {
    let trips = vec![trip(0, 2, 1, 1_000_000), trip(0, 1, 0, 2_000_000), trip(3, 0, 2, 500_000)];
    let first = NaiveDate::from_ymd_opt(2026, 3, 2).unwrap();
    let last = NaiveDate::from_ymd_opt(2026, 3, 8).unwrap();
    let csv = index_csv(&compute_dbi("D1", &trips, PeriodKind::Day, first, last, 0.0));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], INDEX_CSV_HEADER);
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[1], "2026-03-02,1,3,0,0");
    assert_eq!(lines[2], "2026-03-03,0,0,0,0");
    assert_eq!(lines[4], "2026-03-05,2,0,0,0");
}

#[test]
fn local_offset_moves_trips_across_midnight() {
    let t = trip(1, 1, 0, 1000);
    let first = NaiveDate::from_ymd_opt(2026, 3, 2).unwrap();
    let last = NaiveDate::from_ymd_opt(2026, 3, 4).unwrap();
    let utc = compute_dbi("D1", std::slice::from_ref(&t), PeriodKind::Day, first, last, 0.0);
    let west = compute_dbi("D1", std::slice::from_ref(&t), PeriodKind::Day, first, last, -10.0);
    assert_eq!(utc[1].stats.abnormal.n_distraction_episodes, 1);
    assert_eq!(west[0].stats.abnormal.n_distraction_episodes, 1);
}

#[test]
fn reaction_percentiles() {
    let r = ReactionStats {
        latencies_s: (1..=10).map(|i| i as f64 / 10.0).collect(),
        n_missed: 0,
    };
    assert!((r.mean_s().unwrap() - 0.55).abs() < 1e-12);
    assert_eq!(r.p90_s(), Some(0.9));
    let mut m = BTreeMap::new();
    m.insert(Stimulus::Pothole, r);
    let s = DbiStats {
        reaction: m,
        ..DbiStats::default()
    };
    assert_eq!(s.merge(&s).reaction[&Stimulus::Pothole].n_samples(), 20);
}

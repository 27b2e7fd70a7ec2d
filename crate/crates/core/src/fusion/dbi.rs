//! Driver Behavior Index reports: per-day statistics merged into weeks and
//! months.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::events::{DetectedKind, Stimulus};
use super::travel::TravelStats;
use super::trips::Trip;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AbnormalStats {
    pub n_getting_lost: u64,
    pub n_signal_violations: u64,
    pub n_near_collisions: u64,
    pub n_distraction_episodes: u64,
    pub n_eyes_closed_episodes: u64,
    pub n_lane_crossings: u64,
}

impl AbnormalStats {
    pub fn merge(&self, o: &Self) -> Self {
        Self {
            n_getting_lost: self.n_getting_lost + o.n_getting_lost,
            n_signal_violations: self.n_signal_violations + o.n_signal_violations,
            n_near_collisions: self.n_near_collisions + o.n_near_collisions,
            n_distraction_episodes: self.n_distraction_episodes + o.n_distraction_episodes,
            n_eyes_closed_episodes: self.n_eyes_closed_episodes + o.n_eyes_closed_episodes,
            n_lane_crossings: self.n_lane_crossings + o.n_lane_crossings,
        }
    }
}

/// Pooled latency samples, kept sorted so that merging is exact.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReactionStats {
    pub latencies_s: Vec<f64>,
    pub n_missed: u64,
}

impl ReactionStats {
    pub fn merge(&self, o: &Self) -> Self {
        let mut latencies_s = Vec::with_capacity(self.latencies_s.len() + o.latencies_s.len());
        latencies_s.extend_from_slice(&self.latencies_s);
        latencies_s.extend_from_slice(&o.latencies_s);
        latencies_s.sort_by(f64::total_cmp);
        Self {
            latencies_s,
            n_missed: self.n_missed + o.n_missed,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.latencies_s.len()
    }

    pub fn mean_s(&self) -> Option<f64> {
        (!self.latencies_s.is_empty()).then(|| self.latencies_s.iter().sum::<f64>() / self.latencies_s.len() as f64)
    }

    /// Nearest-rank 90th percentile.
    pub fn p90_s(&self) -> Option<f64> {
        let n = self.latencies_s.len();
        (n > 0).then(|| self.latencies_s[(0.9 * n as f64).ceil() as usize - 1])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BrakingStats {
    pub n_harsh_brakes: u64,
    pub n_brakes_with_prior_gaze_offroad: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DbiStats {
    pub travel: TravelStats,
    pub abnormal: AbnormalStats,
    pub reaction: BTreeMap<Stimulus, ReactionStats>,
    pub braking: BrakingStats,
}

impl DbiStats {
    pub fn merge(&self, o: &Self) -> Self {
        let mut reaction = self.reaction.clone();
        for (k, v) in &o.reaction {
            let merged = reaction.get(k).map_or_else(|| v.clone(), |r| r.merge(v));
            reaction.insert(*k, merged);
        }
        Self {
            travel: self.travel.merge(&o.travel),
            abnormal: self.abnormal.merge(&o.abnormal),
            reaction,
            braking: BrakingStats {
                n_harsh_brakes: self.braking.n_harsh_brakes + o.braking.n_harsh_brakes,
                n_brakes_with_prior_gaze_offroad: self.braking.n_brakes_with_prior_gaze_offroad
                    + o.braking.n_brakes_with_prior_gaze_offroad,
            },
        }
    }

    /// Statistics of a single fused trip.
    pub fn from_trip(trip: &Trip) -> Self {
        let mut s = Self {
            travel: trip.travel,
            ..Self::default()
        };
        let a = &mut s.abnormal;
        for e in &trip.events {
            match e.kind {
                DetectedKind::GettingLost { .. } => a.n_getting_lost += 1,
                DetectedKind::RedLightRun | DetectedKind::StopSignViolation => a.n_signal_violations += 1,
                DetectedKind::NearCollisionEvent => a.n_near_collisions += 1,
                DetectedKind::DistractionEpisode => a.n_distraction_episodes += 1,
                DetectedKind::EyesClosedEpisode => a.n_eyes_closed_episodes += 1,
                DetectedKind::LaneCrossingEvent => a.n_lane_crossings += 1,
                DetectedKind::ReactionSample { stimulus, latency_s } => {
                    s.reaction.entry(stimulus).or_default().latencies_s.push(latency_s)
                }
                DetectedKind::MissedStimulus { stimulus } => s.reaction.entry(stimulus).or_default().n_missed += 1,
                DetectedKind::HarshBrake { gaze_offroad } => {
                    s.braking.n_harsh_brakes += 1;
                    s.braking.n_brakes_with_prior_gaze_offroad += gaze_offroad as u64;
                }
                _ => {}
            }
        }
        for r in s.reaction.values_mut() {
            r.latencies_s.sort_by(f64::total_cmp);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodKind {
    Day,
    Week,
    Month,
}

impl std::str::FromStr for PeriodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(Self::Day),
            "week" => Ok(Self::Week),
            "month" => Ok(Self::Month),
            _ => Err(format!("unknown period `{s}` (expected day, week or month)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Period {
    pub kind: PeriodKind,
    /// `2026-03-02`, `2026-W10` or `2026-03`.
    pub id: String,
}

impl PartialOrd for PeriodKind {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PeriodKind {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}

impl Period {
    pub fn of(kind: PeriodKind, date: NaiveDate) -> Self {
        let id = match kind {
            PeriodKind::Day => date.format("%Y-%m-%d").to_string(),
            PeriodKind::Week => {
                let w = date.iso_week();
                format!("{}-W{:02}", w.year(), w.week())
            }
            PeriodKind::Month => date.format("%Y-%m").to_string(),
        };
        Self { kind, id }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbiReport {
    pub driver_id: String,
    pub period: Period,
    pub stats: DbiStats,
}

/// Local calendar date on which a trip started.
pub fn trip_date(trip: &Trip, utc_offset_h: f64) -> NaiveDate {
    let t = trip.epoch as f64 + trip.t_start + utc_offset_h * 3600.0;
    chrono::DateTime::from_timestamp(t.floor() as i64, 0)
        .map(|d| d.date_naive())
        .unwrap_or(NaiveDate::MIN)
}

/// One report per day in `[first, last]`, including days without trips.
pub fn daily_reports(driver_id: &str, trips: &[Trip], first: NaiveDate, last: NaiveDate, utc_offset_h: f64) -> Vec<DbiReport> {
    let mut by_day: BTreeMap<NaiveDate, DbiStats> = BTreeMap::new();
    for d in first.iter_days().take_while(|d| *d <= last) {
        by_day.insert(d, DbiStats::default());
    }
    for t in trips.iter().filter(|t| t.driver_id == driver_id) {
        if let Some(s) = by_day.get_mut(&trip_date(t, utc_offset_h)) {
            *s = s.merge(&DbiStats::from_trip(t));
        }
    }
    by_day
        .into_iter()
        .map(|(d, stats)| DbiReport {
            driver_id: driver_id.to_string(),
            period: Period::of(PeriodKind::Day, d),
            stats,
        })
        .collect()
}

/// Reports for every period of `kind` touching `[first, last]`. Weeks and
/// months are merges of their daily reports.
pub fn compute_dbi(
    driver_id: &str,
    trips: &[Trip],
    kind: PeriodKind,
    first: NaiveDate,
    last: NaiveDate,
    utc_offset_h: f64,
) -> Vec<DbiReport> {
    let days = daily_reports(driver_id, trips, first, last, utc_offset_h);
    if kind == PeriodKind::Day {
        return days;
    }
    let mut out: Vec<DbiReport> = Vec::new();
    for (d, r) in first.iter_days().zip(days) {
        let p = Period::of(kind, d);
        match out.last_mut() {
            Some(last) if last.period == p => last.stats = last.stats.merge(&r.stats),
            _ => out.push(DbiReport {
                driver_id: driver_id.to_string(),
                period: p,
                stats: r.stats,
            }),
        }
    }
    out
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3}")).unwrap_or_default()
}

/// Header of the full report CSV.
pub fn csv_header() -> String {
    let mut h = String::from(
        "driver_id,period_kind,period,n_trips,miles,highway_miles,night_miles,severe_weather_miles,\
n_getting_lost,n_signal_violations,n_near_collisions,n_distraction_episodes,n_eyes_closed_episodes,n_lane_crossings",
    );
    for s in Stimulus::ALL {
        let n = s.name();
        let _ = write!(h, ",{n}_n_samples,{n}_mean_latency_s,{n}_p90_latency_s,{n}_n_missed");
    }
    h.push_str(",n_harsh_brakes,n_brakes_with_prior_gaze_offroad");
    h
}

pub fn csv_row(r: &DbiReport) -> String {
    let s = &r.stats;
    let (t, a) = (&s.travel, &s.abnormal);
    let kind = match r.period.kind {
        PeriodKind::Day => "day",
        PeriodKind::Week => "week",
        PeriodKind::Month => "month",
    };
    let mut row = format!(
        "{},{},{},{},{:.3},{:.3},{:.3},{:.3},{},{},{},{},{},{}",
        r.driver_id,
        kind,
        r.period.id,
        t.n_trips,
        t.miles(),
        t.highway_miles(),
        t.night_miles(),
        t.severe_weather_miles(),
        a.n_getting_lost,
        a.n_signal_violations,
        a.n_near_collisions,
        a.n_distraction_episodes,
        a.n_eyes_closed_episodes,
        a.n_lane_crossings
    );
    for st in Stimulus::ALL {
        let rs = s.reaction.get(&st).cloned().unwrap_or_default();
        let _ = write!(row, ",{},{},{},{}", rs.n_samples(), opt(rs.mean_s()), opt(rs.p90_s()), rs.n_missed);
    }
    let _ = write!(row, ",{},{}", s.braking.n_harsh_brakes, s.braking.n_brakes_with_prior_gaze_offroad);
    row
}

pub fn reports_csv(reports: &[DbiReport]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for r in reports {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

pub const INDEX_CSV_HEADER: &str = "date,closed_eyes,distractions,crossing_lines,near_collisions";

/// The four plotted daily indices, one row per day report.
pub fn index_csv(daily: &[DbiReport]) -> String {
    let mut out = String::from(INDEX_CSV_HEADER);
    out.push('\n');
    for r in daily {
        let a = &r.stats.abnormal;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.period.id, a.n_eyes_closed_episodes, a.n_distraction_episodes, a.n_lane_crossings, a.n_near_collisions
        );
    }
    out
}

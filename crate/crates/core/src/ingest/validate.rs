use serde::{Deserialize, Serialize};

use super::{CheckInvariants, Timestamped};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum Finding {
    NonMonotonic { index: usize, t: f64, prev_t: f64 },
    Gap { index: usize, gap_s: f64 },
    Invariant { index: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_records: usize,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    /// Gaps are informational; ordering and invariant findings are not.
    pub fn has_errors(&self) -> bool {
        self.findings
            .iter()
            .any(|f| !matches!(f, Finding::Gap { .. }))
    }
}

/// Single pass over `records`: timestamps must strictly increase, gaps
/// above `gap_threshold_s` are reported, and each record's invariants are
/// checked.
pub fn validate_stream<T: Timestamped + CheckInvariants>(records: &[T], gap_threshold_s: f64) -> ValidationReport {
    let mut findings = Vec::new();
    let mut prev: Option<f64> = None;
    for (index, r) in records.iter().enumerate() {
        if let Err(message) = r.check_invariants() {
            findings.push(Finding::Invariant { index, message });
        }
        let t = r.t();
        if let Some(prev_t) = prev {
            if !(t > prev_t) {
                findings.push(Finding::NonMonotonic { index, t, prev_t });
            } else if t - prev_t > gap_threshold_s {
                findings.push(Finding::Gap {
                    index,
                    gap_s: t - prev_t,
                });
            }
        }
        // Keep the running maximum so one late record yields one finding.
        prev = Some(prev.map_or(t, |p| p.max(t)));
    }
    ValidationReport {
        n_records: records.len(),
        findings,
    }
}

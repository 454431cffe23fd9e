//! Picker efficiency and tray fill time from per-sample activity labels.
//!
//! Each session is trimmed to the span between its first and last `Pick`,
//! day-wide breaks are excised, and the remaining samples give
//! `efficiency = 100 * pick_time / harvest_time` and
//! `tray_fill_time = pick_time / (60 * trays)` in minutes.
//! Times are sample counts divided by the nominal rate.

mod breaks;
mod report;
mod stats;
mod trays;

pub use breaks::{break_candidates, break_mask, detect_breaks, BreakInterval, DayBreaks, TimedLabels};
pub use report::{
    compute_reports, read_report_csv, write_report_csv, EfficiencyReport, ReportSet, SessionInput, SkippedSession,
    REPORT_HEADER,
};
pub use stats::{iqr_fences, iqr_filter, quantile, season_summary, Metric, SeasonSummary};
pub use trays::{count_trays, detect_trays, median_filter};

use serde::{Deserialize, Serialize};

use crate::ingest::{Activity, SessionId};

#[derive(Debug, thiserror::Error)]
pub enum EfficiencyError {
    #[error("session {0} has no Pick samples")]
    NoPickActivity(SessionId),
    #[error("session {0} has no harvest time after trimming and break removal")]
    ZeroHarvestTime(SessionId),
    #[error("tray count is zero")]
    NoTrays,
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("report csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Break and tray-detection thresholds, keyed `efficiency.*` in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyParams {
    /// Minimum fraction of in-harvest carts idle for a second to count toward a break.
    pub idle_fraction: f64,
    /// Shortest candidate break, seconds.
    pub min_break_s: f64,
    /// Filtered mass at or above which a tray counts as full, kg.
    pub full_thresh: f64,
    /// Filtered mass at or below which the cart counts as emptied, kg.
    pub empty_thresh: f64,
    /// Median filter length in samples; odd.
    pub median_window: usize,
    /// How long the emptied state must last, seconds.
    pub sustain_s: f64,
}

impl Default for EfficiencyParams {
    fn default() -> Self {
        EfficiencyParams {
            idle_fraction: 0.8,
            min_break_s: 600.0,
            full_thresh: 4.0,
            empty_thresh: 1.0,
            median_window: 11,
            sustain_s: 3.0,
        }
    }
}

impl EfficiencyParams {
    pub fn validate(&self) -> Result<(), EfficiencyError> {
        let bad = |m: String| Err(EfficiencyError::InvalidParams(m));
        if !(self.idle_fraction > 0.0 && self.idle_fraction <= 1.0) {
            return bad(format!("idle_fraction must be in (0, 1], got {}", self.idle_fraction));
        }
        if !(self.min_break_s > 0.0) {
            return bad(format!("min_break_s must be positive, got {}", self.min_break_s));
        }
        if !(self.empty_thresh < self.full_thresh) {
            return bad(format!("empty_thresh {} must be below full_thresh {}", self.empty_thresh, self.full_thresh));
        }
        if self.median_window == 0 || self.median_window % 2 == 0 {
            return bad(format!("median_window must be odd, got {}", self.median_window));
        }
        if !(self.sustain_s >= 0.0) {
            return bad(format!("sustain_s must be non-negative, got {}", self.sustain_s));
        }
        Ok(())
    }
}

/// Inclusive sample range from the first to the last `Pick`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trim {
    pub start: usize,
    pub end: usize,
}

impl Trim {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.start..=self.end).contains(&i)
    }
}

pub fn trim_to_harvest(session_id: &SessionId, labels: &[Activity]) -> Result<Trim, EfficiencyError> {
    let start = labels.iter().position(|l| l.is_pick());
    let end = labels.iter().rposition(|l| l.is_pick());
    match (start, end) {
        (Some(start), Some(end)) => Ok(Trim { start, end }),
        _ => Err(EfficiencyError::NoPickActivity(session_id.clone())),
    }
}

/// Pick and harvest time of one trimmed session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAccount {
    pub pick_s: f64,
    pub harvest_s: f64,
    pub break_s: f64,
    pub efficiency_pct: f64,
}

/// `in_break[i]` marks samples inside an excised break.
pub fn picker_efficiency(
    session_id: &SessionId,
    labels: &[Activity],
    trim: Trim,
    in_break: &[bool],
    rate: f64,
) -> Result<TimeAccount, EfficiencyError> {
    if in_break.len() != labels.len() {
        return Err(EfficiencyError::LengthMismatch(format!(
            "{} labels but {} break flags",
            labels.len(),
            in_break.len()
        )));
    }
    if trim.end >= labels.len() || trim.start > trim.end {
        return Err(EfficiencyError::InvalidParams(format!("trim {trim:?} outside {} samples", labels.len())));
    }
    if !(rate > 0.0) {
        return Err(EfficiencyError::InvalidParams(format!("rate must be positive, got {rate}")));
    }
    let mut pick = 0usize;
    let mut brk = 0usize;
    for i in trim.start..=trim.end {
        if in_break[i] {
            brk += 1;
        } else if labels[i].is_pick() {
            pick += 1;
        }
    }
    let harvest = trim.len() - brk;
    if harvest == 0 {
        return Err(EfficiencyError::ZeroHarvestTime(session_id.clone()));
    }
    Ok(TimeAccount {
        pick_s: pick as f64 / rate,
        harvest_s: harvest as f64 / rate,
        break_s: brk as f64 / rate,
        efficiency_pct: 100.0 * pick as f64 / harvest as f64,
    })
}

/// Minutes per tray.
pub fn tray_fill_time(total_pick_s: f64, trays: u32) -> Result<f64, EfficiencyError> {
    if trays == 0 {
        return Err(EfficiencyError::NoTrays);
    }
    Ok(total_pick_s / (60.0 * trays as f64))
}

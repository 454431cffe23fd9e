//! Telemetry, break-log and tray-count file formats.
//!
//! The telemetry CSV carries nine columns:
//! `date_cartID,GPS_TOW,easting,northing,ax,ay,az,raw_mass,activity`.
//! Rows with the same `date_cartID` form one [`CartSession`]. The `activity`
//! column is optional; when absent every sample is unlabeled.

mod records;
mod telemetry;

pub use records::{
    load_break_log, load_tray_counts, read_break_log, read_tray_counts, write_break_log, write_tray_counts, BreakRecord,
    TrayCountRecord,
};
pub use telemetry::{
    format_float, load_session_csv, read_sessions, save_session_csv, write_sessions, LabelEncoding,
    LoadedSessions, TELEMETRY_HEADER,
};

use std::fmt;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Milliseconds in one GPS week.
pub const WEEK_MS: i64 = 604_800_000;

/// Default telemetry sampling rate in Hz.
pub const NOMINAL_RATE_HZ: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("duplicate entry for date {date} cart {cart}")]
    DuplicateKey { date: HarvestDate, cart: String },
    #[error("session {session} spans a GPS week rollover")]
    WeekRollover { session: String },
    #[error("no sessions to write")]
    NoSessions,
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io { path: path.into(), source }
    }
}

/// Per-sample activity class. `Pick` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activity {
    Pick,
    NoPick,
}

impl Activity {
    pub fn is_pick(self) -> bool {
        self == Activity::Pick
    }

    pub fn from_pick(pick: bool) -> Self {
        if pick {
            Activity::Pick
        } else {
            Activity::NoPick
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Pick => "Pick",
            Activity::NoPick => "NoPick",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Calendar harvest date, written as `m-d-yy` like the dataset file names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct HarvestDate(pub NaiveDate);

impl HarvestDate {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        // chrono's %y/%m/%d accept unpadded fields.
        for fmt in ["%m-%d-%y", "%Y-%m-%d", "%m/%d/%y", "%m/%d/%Y"] {
            if let Ok(d) = NaiveDate::parse_from_str(s, fmt) {
                return Some(HarvestDate(d));
            }
        }
        None
    }

    pub fn date(&self) -> NaiveDate {
        self.0
    }
}

impl fmt::Display for HarvestDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use chrono::Datelike;
        write!(f, "{}-{}-{:02}", self.0.month(), self.0.day(), self.0.year() % 100)
    }
}

impl TryFrom<String> for HarvestDate {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        HarvestDate::parse(&s).ok_or_else(|| format!("unrecognised date `{s}`"))
    }
}

impl From<HarvestDate> for String {
    fn from(d: HarvestDate) -> String {
        d.to_string()
    }
}

/// Verbatim `date_cartID` key. Date and cart are split on the last underscore.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(String);

impl SessionId {
    pub fn new(raw: impl Into<String>) -> Self {
        SessionId(raw.into())
    }

    pub fn from_parts(date: HarvestDate, cart: &str) -> Self {
        SessionId(format!("{date}_{cart}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// `(date part, cart part)`; the date part is the whole id when no underscore exists.
    pub fn split(&self) -> (&str, &str) {
        match self.0.rfind('_') {
            Some(i) => (&self.0[..i], &self.0[i + 1..]),
            None => (&self.0, ""),
        }
    }

    pub fn date(&self) -> Option<HarvestDate> {
        HarvestDate::parse(self.split().0)
    }

    pub fn cart(&self) -> &str {
        self.split().1
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    /// GPS time of week, milliseconds.
    pub gps_tow: i64,
    pub easting: f64,
    pub northing: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub raw_mass: f64,
    pub activity: Option<Activity>,
}

/// One cart-day of telemetry, ordered by `gps_tow`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartSession {
    pub session_id: SessionId,
    pub samples: Vec<TelemetrySample>,
    pub nominal_rate: f64,
}

impl CartSession {
    pub fn new(session_id: SessionId, samples: Vec<TelemetrySample>) -> Self {
        CartSession { session_id, samples, nominal_rate: NOMINAL_RATE_HZ }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.activity.is_some())
    }

    /// Labels if every sample carries one.
    pub fn labels(&self) -> Option<Vec<Activity>> {
        self.samples.iter().map(|s| s.activity).collect()
    }

    pub fn with_labels(mut self, labels: &[Activity]) -> Self {
        assert_eq!(labels.len(), self.samples.len(), "label count must match sample count");
        for (s, &l) in self.samples.iter_mut().zip(labels) {
            s.activity = Some(l);
        }
        self
    }

    pub fn without_labels(mut self) -> Self {
        for s in &mut self.samples {
            s.activity = None;
        }
        self
    }

    pub fn date(&self) -> Option<HarvestDate> {
        self.session_id.date()
    }

    pub fn cart(&self) -> &str {
        self.session_id.cart()
    }

    /// Session length in seconds under the sample-count convention.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.nominal_rate
    }
}

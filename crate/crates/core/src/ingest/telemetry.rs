use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activity, CartSession, IngestError, SessionId, TelemetrySample, WEEK_MS};

pub const TELEMETRY_HEADER: [&str; 9] =
    ["date_cartID", "GPS_TOW", "easting", "northing", "ax", "ay", "az", "raw_mass", "activity"];

/// How the `activity` cells of a file were spelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelEncoding {
    /// `Pick` / `NoPick` (any case).
    Names,
    /// `1` / `0`.
    Integers,
    Mixed,
}

#[derive(Debug, Clone)]
pub struct LoadedSessions {
    pub sessions: Vec<CartSession>,
    /// `None` when the file had no `activity` column or every cell was empty.
    pub label_encoding: Option<LabelEncoding>,
}

pub fn load_session_csv(path: impl AsRef<Path>) -> Result<Vec<CartSession>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    let loaded = read_sessions(file)?;
    if let Some(enc) = loaded.label_encoding {
        log::debug!("{}: activity labels encoded as {enc:?}", path.display());
    }
    Ok(loaded.sessions)
}

pub fn read_sessions<R: Read>(reader: R) -> Result<LoadedSessions, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let columns = map_header(&headers)?;

    let mut order: Vec<SessionId> = Vec::new();
    let mut by_id: HashMap<SessionId, Vec<TelemetrySample>> = HashMap::new();
    let mut saw_names = false;
    let mut saw_ints = false;
    let mut rows = 0usize;

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        rows += 1;
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |message: String| IngestError::MalformedRow { line, message };

        let id = field(columns[0]);
        if id.is_empty() {
            return Err(bad("empty date_cartID".into()));
        }
        let gps_tow = parse_tow(field(columns[1])).map_err(bad)?;
        let num = |col: usize, name: &str| -> Result<f64, IngestError> {
            parse_f64(field(columns[col])).map_err(|m| bad(format!("{name}: {m}")))
        };
        let sample = TelemetrySample {
            gps_tow,
            easting: num(2, "easting")?,
            northing: num(3, "northing")?,
            ax: num(4, "ax")?,
            ay: num(5, "ay")?,
            az: num(6, "az")?,
            raw_mass: num(7, "raw_mass")?,
            activity: match columns.get(8) {
                Some(&c) => match parse_activity(field(c)).map_err(bad)? {
                    Some((a, named)) => {
                        if named {
                            saw_names = true
                        } else {
                            saw_ints = true
                        }
                        Some(a)
                    }
                    None => None,
                },
                None => None,
            },
        };
        let key = SessionId::new(id);
        by_id
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(sample);
    }
    if rows == 0 {
        return Err(IngestError::EmptyFile);
    }

    let mut sessions = Vec::with_capacity(order.len());
    for id in order {
        let mut samples = by_id.remove(&id).unwrap_or_default();
        if samples.windows(2).any(|w| w[0].gps_tow - w[1].gps_tow > WEEK_MS / 2) {
            return Err(IngestError::WeekRollover { session: id.to_string() });
        }
        samples.sort_by_key(|s| s.gps_tow);
        sessions.push(CartSession::new(id, samples));
    }
    let label_encoding = match (saw_names, saw_ints) {
        (false, false) => None,
        (true, false) => Some(LabelEncoding::Names),
        (false, true) => Some(LabelEncoding::Integers),
        (true, true) => Some(LabelEncoding::Mixed),
    };
    Ok(LoadedSessions { sessions, label_encoding })
}

/// Column index for each of the nine fields; the ninth entry is absent without an `activity` column.
fn map_header(headers: &csv::StringRecord) -> Result<Vec<usize>, IngestError> {
    let mut columns = Vec::with_capacity(9);
    for name in TELEMETRY_HEADER {
        match headers.iter().position(|h| h.trim_start_matches('\u{feff}') == name) {
            Some(i) => columns.push(i),
            None if name == "activity" => {}
            None => return Err(IngestError::MalformedHeader(format!("missing column `{name}`"))),
        }
    }
    if let Some(extra) = headers
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}'))
        .find(|h| !TELEMETRY_HEADER.contains(h))
    {
        return Err(IngestError::MalformedHeader(format!("unexpected column `{extra}`")));
    }
    if headers.len() != columns.len() {
        return Err(IngestError::MalformedHeader("duplicated column".into()));
    }
    Ok(columns)
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

fn parse_tow(s: &str) -> Result<i64, String> {
    let tow = match s.parse::<i64>() {
        Ok(v) => v,
        Err(_) => {
            let v = parse_f64(s).map_err(|m| format!("GPS_TOW: {m}"))?;
            if v.fract() != 0.0 {
                return Err(format!("GPS_TOW `{s}` is not whole milliseconds"));
            }
            v as i64
        }
    };
    if !(0..WEEK_MS).contains(&tow) {
        return Err(format!("GPS_TOW {tow} outside one GPS week"));
    }
    Ok(tow)
}

/// Returns the label and whether it was spelled as a name.
fn parse_activity(s: &str) -> Result<Option<(Activity, bool)>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    if s.eq_ignore_ascii_case("pick") {
        Ok(Some((Activity::Pick, true)))
    } else if s.eq_ignore_ascii_case("nopick") {
        Ok(Some((Activity::NoPick, true)))
    } else if s == "1" {
        Ok(Some((Activity::Pick, false)))
    } else if s == "0" {
        Ok(Some((Activity::NoPick, false)))
    } else {
        Err(format!("unknown activity `{s}`"))
    }
}

/// Fixed six-decimal rendering with trailing zeros dropped.
pub fn format_float(v: f64) -> String {
    let mut s = format!("{v:.6}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub fn save_session_csv(sessions: &[CartSession], path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    if sessions.is_empty() {
        return Err(IngestError::NoSessions);
    }
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_sessions(sessions, &mut w)?;
    w.flush().map_err(|e| IngestError::io(path, e))
}

pub fn write_sessions<W: Write>(sessions: &[CartSession], writer: W) -> Result<(), IngestError> {
    if sessions.is_empty() {
        return Err(IngestError::NoSessions);
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(TELEMETRY_HEADER)?;
    for session in sessions {
        for s in &session.samples {
            w.write_record([
                session.session_id.as_str(),
                &s.gps_tow.to_string(),
                &format_float(s.easting),
                &format_float(s.northing),
                &format_float(s.ax),
                &format_float(s.ay),
                &format_float(s.az),
                &format_float(s.raw_mass),
                s.activity.map(Activity::as_str).unwrap_or(""),
            ])?;
        }
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

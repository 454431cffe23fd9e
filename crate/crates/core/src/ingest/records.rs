use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarvestDate, IngestError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakRecord {
    pub harvest_date: HarvestDate,
    pub cart_id: String,
    pub no_breaks: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrayCountRecord {
    pub harvest_date: HarvestDate,
    pub cart_id: String,
    pub tray_count: u32,
}

const BREAK_HEADER: [&str; 3] = ["harvest_date", "#carrito", "no_breaks"];
const TRAY_HEADER: [&str; 3] = ["harvest_date", "#carrito", "#trays_carrito"];

/// Parses `(date, cart, count)` rows, rejecting duplicates and counts below `min_count`.
fn read_keyed_counts<R: Read>(
    reader: R,
    header: [&str; 3],
    min_count: i64,
) -> Result<Vec<(HarvestDate, String, u32)>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut columns = [0usize; 3];
    for (slot, name) in columns.iter_mut().zip(header) {
        *slot = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| IngestError::MalformedHeader(format!("missing column `{name}`")))?;
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| IngestError::MalformedRow { line, message };
        let field = |i: usize| record.get(columns[i]).unwrap_or("");
        let date = HarvestDate::parse(field(0)).ok_or_else(|| bad(format!("bad date `{}`", field(0))))?;
        let cart = field(1).to_string();
        if cart.is_empty() {
            return Err(bad("empty cart id".into()));
        }
        let raw = field(2);
        let count: i64 = raw
            .parse()
            .or_else(|_| raw.parse::<f64>().ok().filter(|v| v.fract() == 0.0).map(|v| v as i64).ok_or(()))
            .map_err(|_| bad(format!("`{raw}` is not an integer")))?;
        if count < min_count || count > u32::MAX as i64 {
            return Err(bad(format!("count {count} below minimum {min_count}")));
        }
        if !seen.insert((date, cart.clone())) {
            return Err(IngestError::DuplicateKey { date, cart });
        }
        out.push((date, cart, count as u32));
    }
    Ok(out)
}

pub fn read_break_log<R: Read>(reader: R) -> Result<Vec<BreakRecord>, IngestError> {
    Ok(read_keyed_counts(reader, BREAK_HEADER, 0)?
        .into_iter()
        .map(|(harvest_date, cart_id, no_breaks)| BreakRecord { harvest_date, cart_id, no_breaks })
        .collect())
}

pub fn load_break_log(path: impl AsRef<Path>) -> Result<Vec<BreakRecord>, IngestError> {
    let path = path.as_ref();
    read_break_log(File::open(path).map_err(|e| IngestError::io(path, e))?)
}

pub fn read_tray_counts<R: Read>(reader: R) -> Result<Vec<TrayCountRecord>, IngestError> {
    Ok(read_keyed_counts(reader, TRAY_HEADER, 1)?
        .into_iter()
        .map(|(harvest_date, cart_id, tray_count)| TrayCountRecord { harvest_date, cart_id, tray_count })
        .collect())
}

pub fn load_tray_counts(path: impl AsRef<Path>) -> Result<Vec<TrayCountRecord>, IngestError> {
    let path = path.as_ref();
    read_tray_counts(File::open(path).map_err(|e| IngestError::io(path, e))?)
}

fn write_keyed_counts<'a, W: Write>(
    writer: W,
    header: [&str; 3],
    rows: impl Iterator<Item = (HarvestDate, &'a str, u32)>,
) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(header)?;
    for (date, cart, count) in rows {
        w.write_record([date.to_string().as_str(), cart, count.to_string().as_str()])?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))
}

pub fn write_break_log<W: Write>(records: &[BreakRecord], writer: W) -> Result<(), IngestError> {
    write_keyed_counts(
        writer,
        BREAK_HEADER,
        records.iter().map(|r| (r.harvest_date, r.cart_id.as_str(), r.no_breaks)),
    )
}

pub fn write_tray_counts<W: Write>(records: &[TrayCountRecord], writer: W) -> Result<(), IngestError> {
    write_keyed_counts(
        writer,
        TRAY_HEADER,
        records.iter().map(|r| (r.harvest_date, r.cart_id.as_str(), r.tray_count)),
    )
}

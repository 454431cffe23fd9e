use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DayTruth, InjectionLog, SynthConfig, SynthDay, SynthError};
use crate::ingest::{save_session_csv, write_break_log, write_tray_counts};

pub const TRUTH_FORMAT_VERSION: u32 = 1;

/// Contents of `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub format_version: u32,
    pub config: SynthConfig,
    pub days: Vec<DayTruth>,
    #[serde(default)]
    pub injections: Option<InjectionLog>,
}

/// Paths written by [`write_season_files`].
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonFiles {
    pub telemetry: Vec<PathBuf>,
    pub break_log: PathBuf,
    pub tray_counts: PathBuf,
    pub boundary: PathBuf,
    pub truth: PathBuf,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SynthError {
    SynthError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn create(path: &Path) -> Result<BufWriter<File>, SynthError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

pub fn write_truth_json<W: Write>(w: W, truth: &TruthFile) -> Result<(), SynthError> {
    serde_json::to_writer_pretty(w, truth).map_err(|e| SynthError::Io { path: "truth".into(), message: e.to_string() })
}

pub fn read_truth_json<R: Read>(r: R) -> Result<TruthFile, SynthError> {
    let t: TruthFile =
        serde_json::from_reader(r).map_err(|e| SynthError::Io { path: "truth".into(), message: e.to_string() })?;
    if t.format_version != TRUTH_FORMAT_VERSION {
        return Err(SynthError::Io {
            path: "truth".into(),
            message: format!("unsupported truth format version {}", t.format_version),
        });
    }
    Ok(t)
}

/// Writes one telemetry CSV per day (`telemetry_<date>.csv`), the break log, tray counts,
/// field boundary and `truth.json` into `dir`, creating it if needed.
pub fn write_season_files(
    dir: impl AsRef<Path>,
    cfg: &SynthConfig,
    days: &[SynthDay],
    injections: Option<&InjectionLog>,
) -> Result<SeasonFiles, SynthError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut telemetry = Vec::with_capacity(days.len());
    for d in days {
        let p = dir.join(format!("telemetry_{}.csv", d.date));
        save_session_csv(&d.sessions, &p).map_err(|e| io_err(&p, e))?;
        telemetry.push(p);
    }
    let break_log = dir.join("break_log.csv");
    let records: Vec<_> = days.iter().flat_map(|d| d.break_log.iter().cloned()).collect();
    let mut w = create(&break_log)?;
    write_break_log(&records, &mut w).map_err(|e| io_err(&break_log, e))?;
    w.flush().map_err(|e| io_err(&break_log, e))?;

    let tray_counts = dir.join("tray_counts.csv");
    let records: Vec<_> = days.iter().flat_map(|d| d.tray_counts.iter().cloned()).collect();
    let mut w = create(&tray_counts)?;
    write_tray_counts(&records, &mut w).map_err(|e| io_err(&tray_counts, e))?;
    w.flush().map_err(|e| io_err(&tray_counts, e))?;

    let boundary = dir.join("boundary.csv");
    let mut w = create(&boundary)?;
    cfg.boundary().write_csv(&mut w).map_err(|e| io_err(&boundary, e))?;
    w.flush().map_err(|e| io_err(&boundary, e))?;

    let truth = dir.join("truth.json");
    let file = TruthFile {
        format_version: TRUTH_FORMAT_VERSION,
        config: cfg.clone(),
        days: days.iter().map(|d| d.truth.clone()).collect(),
        injections: injections.cloned(),
    };
    let mut w = create(&truth)?;
    write_truth_json(&mut w, &file)?;
    w.flush().map_err(|e| io_err(&truth, e))?;
    Ok(SeasonFiles { telemetry, break_log, tray_counts, boundary, truth })
}

pub fn write_day_files(dir: impl AsRef<Path>, cfg: &SynthConfig, day: &SynthDay) -> Result<SeasonFiles, SynthError> {
    write_season_files(dir, cfg, std::slice::from_ref(day), None)
}

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{
    break_mask, detect_breaks, picker_efficiency, tray_fill_time, trim_to_harvest, trays::count_trays, EfficiencyError,
    EfficiencyParams, TimedLabels,
};
use crate::annotate::LabelSequence;
use crate::ingest::{BreakRecord, CartSession, SessionId, TrayCountRecord};

pub const REPORT_HEADER: &str =
    "session_id,harvest_time_s,pick_time_s,efficiency_pct,tray_count,tray_fill_min,breaks_removed,break_seconds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub session_id: SessionId,
    pub harvest_time_s: f64,
    pub pick_time_s: f64,
    pub efficiency_pct: f64,
    pub tray_count: u32,
    /// Absent when no trays were counted.
    pub tray_fill_min: Option<f64>,
    pub breaks_removed: usize,
    pub break_seconds: f64,
}

/// A session and the labels to account it with.
#[derive(Debug, Clone, Copy)]
pub struct SessionInput<'a> {
    pub session: &'a CartSession,
    pub labels: &'a LabelSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSession {
    pub session_id: SessionId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportSet {
    pub reports: Vec<EfficiencyReport>,
    pub skipped: Vec<SkippedSession>,
    /// Sessions whose break log asked for more breaks than were detected: `(id, requested, found)`.
    pub break_shortfalls: Vec<(SessionId, u32, usize)>,
}

impl ReportSet {
    pub fn get(&self, id: &SessionId) -> Option<&EfficiencyReport> {
        self.reports.iter().find(|r| &r.session_id == id)
    }
}

/// Reports for every session, with breaks detected per harvest date.
///
/// Sessions without any `Pick` are skipped with a reason rather than failing the batch.
pub fn compute_reports(
    inputs: &[SessionInput],
    break_log: &[BreakRecord],
    tray_counts: &[TrayCountRecord],
    params: &EfficiencyParams,
) -> Result<ReportSet, EfficiencyError> {
    params.validate()?;
    let tows: Vec<Vec<i64>> = inputs.iter().map(|i| i.session.samples.iter().map(|s| s.gps_tow).collect()).collect();
    for (inp, t) in inputs.iter().zip(&tows) {
        if inp.labels.len() != t.len() {
            return Err(EfficiencyError::LengthMismatch(format!(
                "{}: {} samples but {} labels",
                inp.session.session_id,
                t.len(),
                inp.labels.len()
            )));
        }
    }
    let mut by_day: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inp) in inputs.iter().enumerate() {
        by_day.entry(inp.session.session_id.split().0).or_default().push(i);
    }
    let mut per_session: Vec<Vec<super::BreakInterval>> = vec![Vec::new(); inputs.len()];
    let mut out = ReportSet::default();
    for members in by_day.values() {
        let day: Vec<TimedLabels> = members
            .iter()
            .map(|&i| TimedLabels {
                session_id: &inputs[i].session.session_id,
                tow_ms: &tows[i],
                labels: &inputs[i].labels.labels,
            })
            .collect();
        let found = detect_breaks(&day, break_log, params)?;
        out.break_shortfalls.extend(found.shortfalls);
        for (&i, b) in members.iter().zip(found.per_session) {
            per_session[i] = b;
        }
    }

    for (i, inp) in inputs.iter().enumerate() {
        let s = inp.session;
        let id = &s.session_id;
        let labels = &inp.labels.labels;
        let trim = match trim_to_harvest(id, labels) {
            Ok(t) => t,
            Err(e) => {
                out.skipped.push(SkippedSession { session_id: id.clone(), reason: e.to_string() });
                continue;
            }
        };
        let mask = break_mask(&tows[i], &per_session[i]);
        let acc = match picker_efficiency(id, labels, trim, &mask, s.nominal_rate) {
            Ok(a) => a,
            Err(e @ EfficiencyError::ZeroHarvestTime(_)) => {
                out.skipped.push(SkippedSession { session_id: id.clone(), reason: e.to_string() });
                continue;
            }
            Err(e) => return Err(e),
        };
        let date = s.date();
        let record = tray_counts.iter().find(|r| Some(r.harvest_date) == date && r.cart_id == s.cart());
        let trays = count_trays(s, record, params);
        let removed = per_session[i]
            .iter()
            .filter(|b| (trim.start..=trim.end).any(|k| b.contains_ms(tows[i][k])))
            .count();
        out.reports.push(EfficiencyReport {
            session_id: id.clone(),
            harvest_time_s: acc.harvest_s,
            pick_time_s: acc.pick_s,
            efficiency_pct: acc.efficiency_pct,
            tray_count: trays,
            tray_fill_min: tray_fill_time(acc.pick_s, trays).ok(),
            breaks_removed: removed,
            break_seconds: acc.break_s,
        });
    }
    Ok(out)
}

pub fn write_report_csv<W: Write>(w: W, reports: &[EfficiencyReport]) -> Result<(), EfficiencyError> {
    use crate::ingest::format_float as f;
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wtr.write_record(REPORT_HEADER.split(','))?;
    for r in reports {
        wtr.write_record([
            r.session_id.as_str().to_string(),
            f(r.harvest_time_s),
            f(r.pick_time_s),
            f(r.efficiency_pct),
            r.tray_count.to_string(),
            r.tray_fill_min.map(f).unwrap_or_default(),
            r.breaks_removed.to_string(),
            f(r.break_seconds),
        ])?;
    }
    wtr.flush().map_err(|e| EfficiencyError::Io { path: "<report>".into(), message: e.to_string() })?;
    Ok(())
}

pub fn read_report_csv<R: Read>(r: R) -> Result<Vec<EfficiencyReport>, EfficiencyError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| EfficiencyError::InvalidParams(format!("report row {}: {m}", line + 2));
        let num = |i: usize| -> Result<f64, EfficiencyError> {
            rec.get(i).unwrap_or("").parse::<f64>().map_err(|_| bad("bad number"))
        };
        let fill = rec.get(5).unwrap_or("");
        out.push(EfficiencyReport {
            session_id: SessionId::new(rec.get(0).ok_or_else(|| bad("missing id"))?),
            harvest_time_s: num(1)?,
            pick_time_s: num(2)?,
            efficiency_pct: num(3)?,
            tray_count: rec.get(4).unwrap_or("").parse().map_err(|_| bad("bad tray count"))?,
            tray_fill_min: if fill.is_empty() { None } else { Some(num(5)?) },
            breaks_removed: rec.get(6).unwrap_or("").parse().map_err(|_| bad("bad break count"))?,
            break_seconds: num(7)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Activity, TelemetrySample};
    use Activity::{NoPick as N, Pick as P};

    fn session(cart: &str, labels: &[Activity], mass: impl Fn(usize) -> f64) -> (CartSession, LabelSequence) {
        let id = SessionId::new(format!("4-10-24_{cart}"));
        let samples = (0..labels.len())
            .map(|i| TelemetrySample {
                gps_tow: 36_000_000 + 100 * i as i64,
                easting: 0.0,
                northing: 0.0,
                ax: 0.0,
                ay: 0.0,
                az: 9.81,
                raw_mass: mass(i),
                activity: None,
            })
            .collect();
        (CartSession::new(id.clone(), samples), LabelSequence::new(id, labels.to_vec()))
    }

    #[test]
    fn conservation_and_csv_round_trip() {
        // 10 s idle, 3000 s of 3:1 picking with a 1000 s shared break, 10 s idle.
        let mut labels = vec![N; 100];
        for k in 0..30_000 {
            let in_break = (10_000..20_000).contains(&k);
            labels.push(if in_break || k % 4 == 1 { N } else { P });
        }
        labels.extend(vec![N; 100]);
        let (s1, l1) = session("1", &labels, |_| 2.0);
        let (s2, l2) = session("2", &labels, |_| 2.0);
        let inputs = [SessionInput { session: &s1, labels: &l1 }, SessionInput { session: &s2, labels: &l2 }];
        let set = compute_reports(&inputs, &[], &[], &EfficiencyParams::default()).unwrap();
        assert_eq!(set.reports.len(), 2);
        let r = &set.reports[0];
        assert_eq!(r.breaks_removed, 1);
        let trimmed_out = 100.0 / 10.0 + 100.0 / 10.0;
        assert!((r.harvest_time_s + r.break_seconds + trimmed_out - s1.duration_s()).abs() <= 0.1 + 1e-9);
        assert!((r.efficiency_pct - 75.0).abs() < 0.01, "{}", r.efficiency_pct);
        assert_eq!(r.tray_count, 0);
        assert_eq!(r.tray_fill_min, None);

        let mut buf = Vec::new();
        write_report_csv(&mut buf, &set.reports).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(REPORT_HEADER));
        assert_eq!(read_report_csv(buf.as_slice()).unwrap(), set.reports);
    }

    #[test]
    fn no_pick_session_is_skipped() {
        let (s, l) = session("1", &[N; 50], |_| 0.0);
        let set = compute_reports(&[SessionInput { session: &s, labels: &l }], &[], &[], &EfficiencyParams::default())
            .unwrap();
        assert!(set.reports.is_empty());
        assert_eq!(set.skipped.len(), 1);
    }
}

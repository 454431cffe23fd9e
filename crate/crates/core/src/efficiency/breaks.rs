use serde::{Deserialize, Serialize};

use super::{trim_to_harvest, EfficiencyError, EfficiencyParams};
use crate::ingest::{Activity, BreakRecord, SessionId};

/// Day-wide idle interval on the GPS time-of-week axis, seconds, half-open `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakInterval {
    pub start_s: f64,
    pub end_s: f64,
}

impl BreakInterval {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains_ms(&self, tow_ms: i64) -> bool {
        let t = tow_ms as f64 / 1000.0;
        self.start_s <= t && t < self.end_s
    }
}

/// Labels of one cart on the shared day timeline.
#[derive(Debug, Clone, Copy)]
pub struct TimedLabels<'a> {
    pub session_id: &'a SessionId,
    pub tow_ms: &'a [i64],
    pub labels: &'a [Activity],
}

/// Breaks chosen for each session of a day, in input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DayBreaks {
    /// All qualifying intervals, longest first.
    pub candidates: Vec<BreakInterval>,
    pub per_session: Vec<Vec<BreakInterval>>,
    /// Sessions whose break log asked for more intervals than were found: `(id, requested, found)`.
    pub shortfalls: Vec<(SessionId, u32, usize)>,
}

/// Qualifying idle intervals, longest first (earlier first on ties).
///
/// A cart takes part in a second while that second lies inside its trimmed
/// harvest span. It counts as idle when most of its samples in that second are
/// `NoPick`, or when it logged none.
pub fn break_candidates(day: &[TimedLabels], params: &EfficiencyParams) -> Result<Vec<BreakInterval>, EfficiencyError> {
    params.validate()?;
    struct Cart {
        first: i64,
        last: i64,
        pick: Vec<u32>,
        total: Vec<u32>,
    }
    let mut carts = Vec::new();
    for s in day {
        if s.tow_ms.len() != s.labels.len() {
            return Err(EfficiencyError::LengthMismatch(format!(
                "{}: {} timestamps, {} labels",
                s.session_id,
                s.tow_ms.len(),
                s.labels.len()
            )));
        }
        let Ok(trim) = trim_to_harvest(s.session_id, s.labels) else { continue };
        let first = s.tow_ms[trim.start].div_euclid(1000);
        let last = s.tow_ms[trim.end].div_euclid(1000);
        if last < first {
            continue;
        }
        let span = (last - first + 1) as usize;
        let mut cart = Cart { first, last, pick: vec![0; span], total: vec![0; span] };
        for i in trim.start..=trim.end {
            let sec = s.tow_ms[i].div_euclid(1000);
            if (first..=last).contains(&sec) {
                let k = (sec - first) as usize;
                cart.total[k] += 1;
                cart.pick[k] += u32::from(s.labels[i].is_pick());
            }
        }
        carts.push(cart);
    }
    let Some(day_first) = carts.iter().map(|c| c.first).min() else { return Ok(Vec::new()) };
    let day_last = carts.iter().map(|c| c.last).max().expect("non-empty");

    let mut runs = Vec::new();
    let mut run_start: Option<i64> = None;
    for sec in day_first..=day_last + 1 {
        let qualifies = sec <= day_last && {
            let mut active = 0usize;
            let mut idle = 0usize;
            for c in &carts {
                if (c.first..=c.last).contains(&sec) {
                    active += 1;
                    let k = (sec - c.first) as usize;
                    if 2 * c.pick[k] <= c.total[k] {
                        idle += 1;
                    }
                }
            }
            active > 0 && idle as f64 >= params.idle_fraction * active as f64
        };
        match (qualifies, run_start) {
            (true, None) => run_start = Some(sec),
            (false, Some(start)) => {
                if (sec - start) as f64 >= params.min_break_s {
                    runs.push(BreakInterval { start_s: start as f64, end_s: sec as f64 });
                }
                run_start = None;
            }
            _ => {}
        }
    }
    runs.sort_by(|a, b| b.duration_s().total_cmp(&a.duration_s()).then(a.start_s.total_cmp(&b.start_s)));
    Ok(runs)
}

/// Picks each session's breaks from the day's candidates.
///
/// The break log's `no_breaks` for the session's date and cart decides how many
/// of the longest candidates are excised. A session without a log entry takes
/// every candidate.
pub fn detect_breaks(
    day: &[TimedLabels],
    expected: &[BreakRecord],
    params: &EfficiencyParams,
) -> Result<DayBreaks, EfficiencyError> {
    let candidates = break_candidates(day, params)?;
    let mut out = DayBreaks { candidates: candidates.clone(), ..Default::default() };
    for s in day {
        let date = s.session_id.date();
        let record = expected.iter().find(|r| Some(r.harvest_date) == date && r.cart_id == s.session_id.cart());
        let take = match record {
            Some(r) => {
                let n = r.no_breaks as usize;
                if n > candidates.len() {
                    log::warn!(
                        "{}: break log expects {} breaks, found {} candidates",
                        s.session_id,
                        n,
                        candidates.len()
                    );
                    out.shortfalls.push((s.session_id.clone(), r.no_breaks, candidates.len()));
                }
                n.min(candidates.len())
            }
            None => candidates.len(),
        };
        let mut chosen: Vec<BreakInterval> = candidates[..take].to_vec();
        chosen.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        out.per_session.push(chosen);
    }
    Ok(out)
}

/// Per-sample flag: inside any of `breaks`.
pub fn break_mask(tow_ms: &[i64], breaks: &[BreakInterval]) -> Vec<bool> {
    tow_ms.iter().map(|&t| breaks.iter().any(|b| b.contains_ms(t))).collect()
}

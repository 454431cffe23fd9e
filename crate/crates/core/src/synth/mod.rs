//! Synthetic labeled cart-days.
//!
//! Each cart runs a picker behavior machine at 10 Hz: park outside the field,
//! walk to a bed, pick along it while the tray mass ramps up, carry the full
//! tray to a headland station, return, switch beds at row ends, and stop for
//! day-wide breaks. Telemetry is rendered from the true track with GNSS,
//! scale and accelerometer noise; labels and truth metrics come straight from
//! the behavior states.

mod corrupt;
mod io;
mod sim;

pub use corrupt::{corrupt, Injection, InjectionKind, InjectionLog};
pub use io::{read_truth_json, write_day_files, write_season_files, write_truth_json, SeasonFiles, TruthFile, TRUTH_FORMAT_VERSION};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::annotate::FieldBoundary;
use crate::ingest::{BreakRecord, CartSession, HarvestDate, SessionId, TrayCountRecord};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    ConfigInvalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Behavior of one cart at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BehaviorState {
    PrePost,
    Picking,
    Delivering,
    Returning,
    RowSwitch,
    Break,
}

impl BehaviorState {
    pub fn is_pick(self) -> bool {
        self == BehaviorState::Picking
    }
}

/// Bounded log-normal duration in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dwell {
    pub median_s: f64,
    /// Standard deviation of the log.
    pub sigma: f64,
    pub min_s: f64,
    pub max_s: f64,
}

impl Dwell {
    fn validate(&self, name: &str) -> Result<(), SynthError> {
        if !(self.median_s > 0.0 && self.sigma >= 0.0 && self.min_s > 0.0 && self.min_s <= self.max_s) {
            return Err(SynthError::ConfigInvalid(format!("{name}: need median > 0, sigma >= 0, 0 < min <= max")));
        }
        Ok(())
    }
}

/// Accelerometer amplitudes in m/s².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccelProfile {
    /// White noise while picking in place.
    pub pick_jitter: f64,
    /// Burst amplitude when the picker nudges the cart along the bed.
    pub push_amplitude: f64,
    /// Gait oscillation amplitude while walking the cart.
    pub walk_amplitude: f64,
    pub walk_noise: f64,
    /// Step frequency, Hz.
    pub step_hz: f64,
    /// Noise while parked or on break.
    pub idle_noise: f64,
}

impl Default for AccelProfile {
    fn default() -> Self {
        AccelProfile {
            pick_jitter: 0.05,
            push_amplitude: 0.3,
            walk_amplitude: 0.8,
            walk_noise: 0.25,
            step_hz: 1.8,
            idle_noise: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_carts: usize,
    /// Scheduled end of picking, seconds after the day starts; the tray in hand is still finished and delivered.
    pub day_length_s: f64,
    pub pick_rate_kg_per_min: f64,
    /// Per-cart multiplicative spread of the pick rate, uniform in `1 ± jitter`.
    pub pick_rate_jitter: f64,
    /// Net fruit per full tray.
    pub tray_capacity_kg: f64,
    pub tray_tare_kg: f64,
    /// Station wait and hand-off during a delivery.
    pub deliver_dwell: Dwell,
    pub row_switch: Dwell,
    pub pre_parked: Dwell,
    pub post_parked: Dwell,
    pub walk_speed_mps: f64,
    /// Mean along-bed advance per push while picking, and mean seconds between pushes.
    pub push_step_m: f64,
    pub push_interval_s: f64,
    pub bed_width_m: f64,
    pub n_beds: usize,
    pub row_length_m: f64,
    /// `(start_s, duration_s)` from the day start, shared by all carts.
    pub breaks: Vec<(f64, f64)>,
    pub gnss_sigma_m: f64,
    pub mass_noise_kg: f64,
    pub accel: AccelProfile,
    /// Stop after this many deliveries.
    pub max_trays: Option<u32>,
    pub seed: u64,
    pub first_date: HarvestDate,
    /// Local time of day the carts start, hours.
    pub start_hour: f64,
    /// Field origin, UTM meters.
    pub origin: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_carts: 3,
            day_length_s: 2100.0,
            pick_rate_kg_per_min: 0.66,
            pick_rate_jitter: 0.15,
            tray_capacity_kg: 4.5,
            tray_tare_kg: 0.7,
            deliver_dwell: Dwell { median_s: 130.0, sigma: 0.3, min_s: 40.0, max_s: 300.0 },
            row_switch: Dwell { median_s: 6.0, sigma: 0.3, min_s: 3.0, max_s: 15.0 },
            pre_parked: Dwell { median_s: 90.0, sigma: 0.4, min_s: 30.0, max_s: 240.0 },
            post_parked: Dwell { median_s: 90.0, sigma: 0.4, min_s: 30.0, max_s: 240.0 },
            walk_speed_mps: 1.1,
            push_step_m: 0.3,
            push_interval_s: 7.0,
            bed_width_m: 1.10,
            n_beds: 24,
            row_length_m: 50.0,
            breaks: vec![(900.0, 660.0)],
            gnss_sigma_m: 0.32,
            mass_noise_kg: 0.02,
            accel: AccelProfile::default(),
            max_trays: None,
            seed: 42,
            first_date: HarvestDate(NaiveDate::from_ymd_opt(2024, 4, 1).expect("valid date")),
            start_hour: 7.0,
            origin: (729_000.0, 3_865_000.0),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::ConfigInvalid(m.to_string()));
        if self.n_carts == 0 || self.n_beds < self.n_carts {
            return bad("need at least one cart and at least one bed per cart");
        }
        for (name, v) in [
            ("day_length_s", self.day_length_s),
            ("pick_rate_kg_per_min", self.pick_rate_kg_per_min),
            ("tray_capacity_kg", self.tray_capacity_kg),
            ("tray_tare_kg", self.tray_tare_kg),
            ("walk_speed_mps", self.walk_speed_mps),
            ("push_step_m", self.push_step_m),
            ("push_interval_s", self.push_interval_s),
            ("bed_width_m", self.bed_width_m),
            ("row_length_m", self.row_length_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SynthError::ConfigInvalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.pick_rate_jitter) {
            return bad("pick_rate_jitter must be in [0, 1)");
        }
        if self.gnss_sigma_m < 0.0 || self.mass_noise_kg < 0.0 {
            return bad("noise levels must be non-negative");
        }
        if !(0.0..24.0).contains(&self.start_hour) {
            return bad("start_hour must be in [0, 24)");
        }
        self.deliver_dwell.validate("deliver_dwell")?;
        self.row_switch.validate("row_switch")?;
        self.pre_parked.validate("pre_parked")?;
        self.post_parked.validate("post_parked")?;
        for &(start, dur) in &self.breaks {
            if !(start >= 0.0 && dur > 0.0 && start + dur <= self.day_length_s) {
                return Err(SynthError::ConfigInvalid(format!(
                    "break ({start}, {dur}) must lie inside the {} s day",
                    self.day_length_s
                )));
            }
        }
        if self.max_trays == Some(0) {
            return bad("max_trays must be at least 1");
        }
        Ok(())
    }

    /// Field width across all beds, meters.
    pub fn field_width(&self) -> f64 {
        self.n_beds as f64 * self.bed_width_m
    }

    /// Rectangle around the beds and the headland, in UTM.
    pub fn boundary(&self) -> FieldBoundary {
        let (e0, n0) = self.origin;
        let (x0, x1) = (e0 - 2.0, e0 + self.field_width() + 2.0);
        let (y0, y1) = (n0 - 10.0, n0 + self.row_length_m + 2.0);
        FieldBoundary::new(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]).expect("rectangle is valid")
    }

    pub(crate) fn station(&self) -> (f64, f64) {
        (self.field_width() / 2.0, -5.0)
    }

    pub(crate) fn parking(&self) -> (f64, f64) {
        (-20.0, -5.0)
    }
}

/// Run-length `(state, samples)` pairs.
pub type StateRuns = Vec<(BehaviorState, u32)>;

pub fn run_length(states: &[BehaviorState]) -> StateRuns {
    let mut runs: StateRuns = Vec::new();
    for &s in states {
        match runs.last_mut() {
            Some((last, n)) if *last == s => *n += 1,
            _ => runs.push((s, 1)),
        }
    }
    runs
}

pub fn expand_runs(runs: &[(BehaviorState, u32)]) -> Vec<BehaviorState> {
    runs.iter().flat_map(|&(s, n)| std::iter::repeat_n(s, n as usize)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartTruth {
    pub session_id: SessionId,
    pub states: StateRuns,
    /// Picking samples over trimmed, break-free samples, times 100.
    pub efficiency_pct: f64,
    pub pick_s: f64,
    pub harvest_s: f64,
    pub break_s: f64,
    pub tray_count: u32,
    pub tray_fill_min: Option<f64>,
    pub pick_rate_kg_per_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTruth {
    pub date: HarvestDate,
    pub carts: Vec<CartTruth>,
    /// Scheduled breaks as GPS time-of-week seconds, `[start, end)`.
    pub breaks: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDay {
    pub date: HarvestDate,
    pub sessions: Vec<CartSession>,
    pub truth: DayTruth,
    pub break_log: Vec<BreakRecord>,
    pub tray_counts: Vec<TrayCountRecord>,
    pub boundary: FieldBoundary,
}

/// Truth metrics recomputed from a state sequence at the nominal rate.
pub fn truth_metrics(states: &[BehaviorState], rate: f64) -> (f64, f64, f64, f64) {
    let first = states.iter().position(|s| s.is_pick());
    let last = states.iter().rposition(|s| s.is_pick());
    let (Some(a), Some(b)) = (first, last) else { return (0.0, 0.0, 0.0, 0.0) };
    let span = &states[a..=b];
    let pick = span.iter().filter(|s| s.is_pick()).count();
    let brk = span.iter().filter(|s| **s == BehaviorState::Break).count();
    let harvest = span.len() - brk;
    let eff = if harvest == 0 { 0.0 } else { 100.0 * pick as f64 / harvest as f64 };
    (eff, pick as f64 / rate, harvest as f64 / rate, brk as f64 / rate)
}

/// One cart-day per cart on `first_date + day_index`.
pub fn generate_day(cfg: &SynthConfig, day_index: u32) -> Result<SynthDay, SynthError> {
    cfg.validate()?;
    sim::simulate_day(cfg, day_index)
}

/// `n_days` consecutive days.
pub fn generate_season(cfg: &SynthConfig, n_days: u32) -> Result<Vec<SynthDay>, SynthError> {
    (0..n_days).map(|d| generate_day(cfg, d)).collect()
}

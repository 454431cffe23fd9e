use chrono::{Datelike, Duration};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{run_length, truth_metrics, BehaviorState, CartTruth, DayTruth, Dwell, SynthConfig, SynthDay, SynthError};
use crate::ingest::{
    Activity, BreakRecord, CartSession, HarvestDate, SessionId, TelemetrySample, TrayCountRecord, NOMINAL_RATE_HZ,
};

const DT: f64 = 1.0 / NOMINAL_RATE_HZ;
const GRAVITY: f64 = 9.81;
/// Ticks a push along the bed lasts.
const PUSH_TICKS: u32 = 10;

type Point = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    PreParked { left: u32 },
    PreWalk,
    Picking,
    RowSwitch { left: u32, total: u32, from: Point, to: Point },
    DeliverWalk,
    DeliverDwell { left: u32 },
    ReturnWalk,
    PostWalk,
    PostParked { left: u32 },
    Done,
}

impl Mode {
    fn state(self) -> BehaviorState {
        match self {
            Mode::PreParked { .. } | Mode::PreWalk | Mode::PostWalk | Mode::PostParked { .. } | Mode::Done => {
                BehaviorState::PrePost
            }
            Mode::Picking => BehaviorState::Picking,
            Mode::RowSwitch { .. } => BehaviorState::RowSwitch,
            Mode::DeliverWalk | Mode::DeliverDwell { .. } => BehaviorState::Delivering,
            Mode::ReturnWalk => BehaviorState::Returning,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Motion {
    Parked,
    Still,
    Push,
    Walk,
}

fn gauss(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        sd * rng.sample::<f64, _>(StandardNormal)
    }
}

fn ticks(s: f64) -> u32 {
    (s * NOMINAL_RATE_HZ).round().max(1.0) as u32
}

fn draw(rng: &mut ChaCha8Rng, d: &Dwell) -> u32 {
    let z: f64 = rng.sample(StandardNormal);
    ticks((d.median_s * (d.sigma * z).exp()).clamp(d.min_s, d.max_s))
}

/// Moves `pos` toward `to` by at most `step`; true on arrival.
fn walk(pos: &mut Point, to: Point, step: f64) -> bool {
    let (dx, dy) = (to.0 - pos.0, to.1 - pos.1);
    let d = dx.hypot(dy);
    if d <= step {
        *pos = to;
        true
    } else {
        pos.0 += dx / d * step;
        pos.1 += dy / d * step;
        false
    }
}

struct Cart<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    mode: Mode,
    pos: Point,
    resume: Point,
    beds: (usize, usize),
    bed: usize,
    dir: f64,
    rate_kg_per_s: f64,
    tray_net: f64,
    trays: u32,
    push_left: u32,
    next_push: u32,
    gait_phase: f64,
}

impl<'a> Cart<'a> {
    fn new(cfg: &'a SynthConfig, cart: usize, mut rng: ChaCha8Rng) -> Self {
        let per = cfg.n_beds / cfg.n_carts;
        let jitter = 1.0 + cfg.pick_rate_jitter * (2.0 * rng.random::<f64>() - 1.0);
        let pre = draw(&mut rng, &cfg.pre_parked);
        Cart {
            cfg,
            mode: Mode::PreParked { left: pre },
            pos: cfg.parking(),
            resume: (0.0, 0.0),
            beds: (cart * per, (cart + 1) * per),
            bed: cart * per,
            dir: 1.0,
            rate_kg_per_s: cfg.pick_rate_kg_per_min * jitter / 60.0,
            tray_net: 0.0,
            trays: 0,
            push_left: 0,
            next_push: 0,
            gait_phase: 0.0,
            rng,
        }
    }

    fn bed_x(&self, bed: usize) -> f64 {
        (bed as f64 + 0.5) * self.cfg.bed_width_m
    }

    fn push_gap(&mut self) -> u32 {
        ticks(self.cfg.push_interval_s * (0.5 + self.rng.random::<f64>()))
    }

    /// Advances one tick; returns the state and motion of this tick.
    fn step(&mut self, tick: u32, finishing: bool) -> (BehaviorState, Motion) {
        let cfg = self.cfg;
        let stride = cfg.walk_speed_mps * DT;
        let state = self.mode.state();
        let motion = match self.mode {
            Mode::PreParked { left } => {
                self.mode = if left <= 1 { Mode::PreWalk } else { Mode::PreParked { left: left - 1 } };
                Motion::Parked
            }
            Mode::PreWalk => {
                let start = (self.bed_x(self.bed), 0.0);
                if walk(&mut self.pos, start, stride) {
                    self.start_tray(tick);
                }
                Motion::Walk
            }
            Mode::Picking => self.pick(tick),
            Mode::RowSwitch { left, total, from, to } => {
                let f = 1.0 - (left - 1) as f64 / total as f64;
                self.pos = (from.0 + (to.0 - from.0) * f, from.1 + (to.1 - from.1) * f);
                self.mode = if left <= 1 { Mode::Picking } else { Mode::RowSwitch { left: left - 1, total, from, to } };
                Motion::Walk
            }
            Mode::DeliverWalk => {
                if walk(&mut self.pos, cfg.station(), stride) {
                    let left = draw(&mut self.rng, &cfg.deliver_dwell);
                    self.mode = Mode::DeliverDwell { left };
                }
                Motion::Walk
            }
            Mode::DeliverDwell { left } => {
                if left <= 1 {
                    let last = finishing || cfg.max_trays.is_some_and(|m| self.trays >= m);
                    self.mode = if last { Mode::PostWalk } else { Mode::ReturnWalk };
                } else {
                    self.mode = Mode::DeliverDwell { left: left - 1 };
                }
                Motion::Parked
            }
            Mode::ReturnWalk => {
                if walk(&mut self.pos, self.resume, stride) {
                    self.start_tray(tick);
                }
                Motion::Walk
            }
            Mode::PostWalk => {
                if walk(&mut self.pos, cfg.parking(), stride) {
                    let left = draw(&mut self.rng, &cfg.post_parked);
                    self.mode = Mode::PostParked { left };
                }
                Motion::Walk
            }
            Mode::PostParked { left } => {
                self.mode = if left <= 1 { Mode::Done } else { Mode::PostParked { left: left - 1 } };
                Motion::Parked
            }
            Mode::Done => Motion::Parked,
        };
        (state, motion)
    }

    fn start_tray(&mut self, tick: u32) {
        self.tray_net = 0.0;
        self.mode = Mode::Picking;
        self.next_push = tick + self.push_gap();
    }

    fn pick(&mut self, tick: u32) -> Motion {
        let cfg = self.cfg;
        self.tray_net = (self.tray_net + self.rate_kg_per_s * DT).min(cfg.tray_capacity_kg);
        let mut motion = Motion::Still;
        if self.push_left > 0 {
            self.push_left -= 1;
            self.pos.1 = (self.pos.1 + self.dir * cfg.push_step_m / PUSH_TICKS as f64).clamp(0.0, cfg.row_length_m);
            motion = Motion::Push;
        } else if tick >= self.next_push {
            self.push_left = PUSH_TICKS;
            self.next_push = tick + PUSH_TICKS + self.push_gap();
        }
        if self.tray_net >= cfg.tray_capacity_kg {
            self.trays += 1;
            self.push_left = 0;
            self.resume = self.pos;
            self.mode = Mode::DeliverWalk;
        } else if (self.dir > 0.0 && self.pos.1 >= cfg.row_length_m) || (self.dir < 0.0 && self.pos.1 <= 0.0) {
            let next = if self.bed + 1 < self.beds.1 { self.bed + 1 } else { self.beds.0 };
            let to = (self.bed_x(next), self.pos.1);
            let dist = (to.0 - self.pos.0).abs();
            let total = draw(&mut self.rng, &cfg.row_switch).max(ticks(dist / cfg.walk_speed_mps));
            self.mode = Mode::RowSwitch { left: total, total, from: self.pos, to };
            self.bed = next;
            self.dir = -self.dir;
            self.push_left = 0;
        }
        motion
    }

    fn accel(&mut self, motion: Motion) -> (f64, f64, f64) {
        let a = self.cfg.accel;
        match motion {
            Motion::Parked => {
                (gauss(&mut self.rng, a.idle_noise), gauss(&mut self.rng, a.idle_noise), GRAVITY + gauss(&mut self.rng, a.idle_noise))
            }
            Motion::Still => {
                (gauss(&mut self.rng, a.pick_jitter), gauss(&mut self.rng, a.pick_jitter), GRAVITY + gauss(&mut self.rng, a.pick_jitter))
            }
            Motion::Push => {
                let env = (std::f64::consts::PI * (PUSH_TICKS - self.push_left) as f64 / PUSH_TICKS as f64).sin();
                let base = a.push_amplitude * env * self.dir;
                (
                    gauss(&mut self.rng, a.pick_jitter),
                    base + gauss(&mut self.rng, a.pick_jitter),
                    GRAVITY + gauss(&mut self.rng, a.pick_jitter),
                )
            }
            Motion::Walk => {
                self.gait_phase = (self.gait_phase + 2.0 * std::f64::consts::PI * a.step_hz * DT) % (2.0 * std::f64::consts::PI);
                let p = self.gait_phase;
                (
                    a.walk_amplitude * p.sin() + gauss(&mut self.rng, a.walk_noise),
                    0.4 * a.walk_amplitude * (p + 1.0).sin() + gauss(&mut self.rng, a.walk_noise),
                    GRAVITY + 0.6 * a.walk_amplitude * (2.0 * p).sin() + gauss(&mut self.rng, a.walk_noise),
                )
            }
        }
    }
}

/// One cart's rendered day plus the noiseless track.
pub(crate) struct CartRun {
    pub session: CartSession,
    pub states: Vec<BehaviorState>,
    #[allow(dead_code)]
    pub track: Vec<Point>,
    pub trays: u32,
    pub rate_kg_per_min: f64,
}

pub(crate) fn day_date(cfg: &SynthConfig, day_index: u32) -> HarvestDate {
    HarvestDate(cfg.first_date.0 + Duration::days(i64::from(day_index)))
}

/// GPS time of week of the day start, whole seconds.
pub(crate) fn day_start_tow_s(cfg: &SynthConfig, date: HarvestDate) -> i64 {
    let dow = i64::from(date.0.weekday().num_days_from_sunday());
    dow * 86_400 + (cfg.start_hour * 3600.0).round() as i64
}

fn rng_for(cfg: &SynthConfig, day_index: u32, cart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream((u64::from(day_index) << 20) | cart as u64);
    rng
}

pub(crate) fn simulate_cart(cfg: &SynthConfig, day_index: u32, cart: usize) -> CartRun {
    let date = day_date(cfg, day_index);
    let start_ms = day_start_tow_s(cfg, date) * 1000;
    let mut sim = Cart::new(cfg, cart, rng_for(cfg, day_index, cart));
    let end_tick = ticks(cfg.day_length_s);
    let breaks: Vec<(u32, u32)> = cfg.breaks.iter().map(|&(s, d)| (ticks(s), ticks(s + d))).collect();
    let cap = end_tick.saturating_mul(4) + ticks(3600.0);
    let (e0, n0) = cfg.origin;

    let mut samples = Vec::new();
    let mut states = Vec::new();
    let mut track = Vec::new();
    let mut tick = 0u32;
    while sim.mode != Mode::Done && tick < cap {
        let in_break = breaks.iter().any(|&(a, b)| tick >= a && tick < b) && sim.mode.state() != BehaviorState::PrePost;
        let (state, motion) = if in_break {
            // Frozen in place, tray lifted off the scale.
            (BehaviorState::Break, Motion::Parked)
        } else {
            sim.step(tick, tick >= end_tick)
        };
        let on_scale = !in_break && (state == BehaviorState::Picking || state == BehaviorState::RowSwitch);
        let true_mass = if on_scale { cfg.tray_tare_kg + sim.tray_net } else { 0.0 };
        let (ax, ay, az) = sim.accel(motion);
        let mass = true_mass + gauss(&mut sim.rng, cfg.mass_noise_kg);
        let easting = e0 + sim.pos.0 + gauss(&mut sim.rng, cfg.gnss_sigma_m);
        let northing = n0 + sim.pos.1 + gauss(&mut sim.rng, cfg.gnss_sigma_m);
        samples.push(TelemetrySample {
            gps_tow: start_ms + i64::from(tick) * 100,
            easting,
            northing,
            ax,
            ay,
            az,
            raw_mass: mass,
            activity: Some(Activity::from_pick(state.is_pick())),
        });
        states.push(state);
        track.push(sim.pos);
        tick += 1;
    }
    if sim.mode != Mode::Done {
        log::warn!("synthetic cart {cart} on day {day_index} hit the tick cap");
    }
    let id = SessionId::from_parts(date, &(cart + 1).to_string());
    CartRun {
        session: CartSession::new(id, samples),
        states,
        track,
        trays: sim.trays,
        rate_kg_per_min: sim.rate_kg_per_s * 60.0,
    }
}

pub(crate) fn simulate_day(cfg: &SynthConfig, day_index: u32) -> Result<SynthDay, SynthError> {
    let date = day_date(cfg, day_index);
    let start_s = day_start_tow_s(cfg, date) as f64;
    let break_ticks: Vec<(usize, usize)> =
        cfg.breaks.iter().map(|&(s, d)| (ticks(s) as usize, ticks(s + d) as usize)).collect();
    let mut sessions = Vec::with_capacity(cfg.n_carts);
    let mut carts = Vec::with_capacity(cfg.n_carts);
    let mut break_log = Vec::with_capacity(cfg.n_carts);
    let mut tray_counts = Vec::with_capacity(cfg.n_carts);
    for c in 0..cfg.n_carts {
        let run = simulate_cart(cfg, day_index, c);
        let (efficiency_pct, pick_s, harvest_s, break_s) = truth_metrics(&run.states, NOMINAL_RATE_HZ);
        let first = run.states.iter().position(|s| s.is_pick());
        let last = run.states.iter().rposition(|s| s.is_pick());
        let no_breaks = match (first, last) {
            (Some(a), Some(b)) => break_ticks.iter().filter(|&&(s, _)| s > a && s <= b).count() as u32,
            _ => 0,
        };
        let cart_id = run.session.cart().to_string();
        break_log.push(BreakRecord { harvest_date: date, cart_id: cart_id.clone(), no_breaks });
        tray_counts.push(TrayCountRecord { harvest_date: date, cart_id, tray_count: run.trays });
        carts.push(CartTruth {
            session_id: run.session.session_id.clone(),
            states: run_length(&run.states),
            efficiency_pct,
            pick_s,
            harvest_s,
            break_s,
            tray_count: run.trays,
            tray_fill_min: (run.trays > 0).then(|| pick_s / (60.0 * f64::from(run.trays))),
            pick_rate_kg_per_min: run.rate_kg_per_min,
        });
        sessions.push(run.session);
    }
    let breaks = cfg.breaks.iter().map(|&(s, d)| (start_s + s, start_s + s + d)).collect();
    Ok(SynthDay {
        date,
        sessions,
        truth: DayTruth { date, carts, breaks },
        break_log,
        tray_counts,
        boundary: cfg.boundary(),
    })
}

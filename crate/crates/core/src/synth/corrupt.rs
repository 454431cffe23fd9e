use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::ingest::{CartSession, SessionId};

/// Events per hour of telemetry at severity 1.
pub const GPS_JUMPS_PER_HOUR: f64 = 30.0;
pub const MASS_SPIKES_PER_HOUR: f64 = 30.0;
pub const DROPOUTS_PER_HOUR: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    /// 1 to 3 samples displaced 20 to 80 m.
    GpsJump,
    /// 1 to 3 samples reading 6 to 12 kg.
    MassSpike,
    /// 5 to 50 consecutive samples removed.
    Dropout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub session_id: SessionId,
    pub kind: InjectionKind,
    /// GPS time of week of the first affected sample, ms.
    pub gps_tow: i64,
    pub samples: usize,
    /// Jump distance in m or spike mass in kg; zero for dropouts.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectionLog {
    pub severity: f64,
    pub entries: Vec<Injection>,
}

impl InjectionLog {
    pub fn of_kind(&self, kind: InjectionKind) -> impl Iterator<Item = &Injection> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }
}

fn events(rng: &mut ChaCha8Rng, per_hour: f64, hours: f64, severity: f64) -> usize {
    let lambda = per_hour * hours * severity;
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

/// Picks a free run of `len` samples, marking it taken; `None` after a few failed tries.
fn claim(rng: &mut ChaCha8Rng, taken: &mut [bool], len: usize) -> Option<usize> {
    if taken.len() <= len + 2 {
        return None;
    }
    for _ in 0..20 {
        // Keep one untouched sample on either side so events never merge.
        let start = rng.random_range(1..taken.len() - len - 1);
        if taken[start - 1..start + len + 1].iter().all(|t| !t) {
            taken[start..start + len].iter_mut().for_each(|t| *t = true);
            return Some(start);
        }
    }
    None
}

/// Injects GPS jumps, mass spikes and dropout gaps. Severity is clamped to `[0, 1]`; 0 returns the input unchanged.
pub fn corrupt(sessions: &[CartSession], severity: f64, seed: u64) -> (Vec<CartSession>, InjectionLog) {
    let severity = if severity.is_finite() { severity.clamp(0.0, 1.0) } else { 0.0 };
    let mut log = InjectionLog { severity, entries: Vec::new() };
    let mut out = Vec::with_capacity(sessions.len());
    for (k, s) in sessions.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut samples = s.samples.clone();
        let hours = s.duration_s() / 3600.0;
        let mut taken = vec![false; samples.len()];
        let mut drop = vec![false; samples.len()];

        for _ in 0..events(&mut rng, GPS_JUMPS_PER_HOUR, hours, severity) {
            let len = rng.random_range(1..=3);
            let Some(at) = claim(&mut rng, &mut taken, len) else { continue };
            let dist = rng.random_range(20.0..80.0);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            for p in &mut samples[at..at + len] {
                p.easting += dist * angle.cos();
                p.northing += dist * angle.sin();
            }
            log.entries.push(Injection {
                session_id: s.session_id.clone(),
                kind: InjectionKind::GpsJump,
                gps_tow: samples[at].gps_tow,
                samples: len,
                magnitude: dist,
            });
        }
        for _ in 0..events(&mut rng, MASS_SPIKES_PER_HOUR, hours, severity) {
            let len = rng.random_range(1..=3);
            let Some(at) = claim(&mut rng, &mut taken, len) else { continue };
            let mass = rng.random_range(6.0..12.0);
            for p in &mut samples[at..at + len] {
                p.raw_mass = mass;
            }
            log.entries.push(Injection {
                session_id: s.session_id.clone(),
                kind: InjectionKind::MassSpike,
                gps_tow: samples[at].gps_tow,
                samples: len,
                magnitude: mass,
            });
        }
        for _ in 0..events(&mut rng, DROPOUTS_PER_HOUR, hours, severity) {
            let len = rng.random_range(5..=50);
            let Some(at) = claim(&mut rng, &mut taken, len) else { continue };
            drop[at..at + len].iter_mut().for_each(|d| *d = true);
            log.entries.push(Injection {
                session_id: s.session_id.clone(),
                kind: InjectionKind::Dropout,
                gps_tow: samples[at].gps_tow,
                samples: len,
                magnitude: 0.0,
            });
        }
        let kept: Vec<_> = samples.into_iter().zip(drop).filter(|(_, d)| !d).map(|(p, _)| p).collect();
        out.push(CartSession { session_id: s.session_id.clone(), samples: kept, nominal_rate: s.nominal_rate });
    }
    log.entries.sort_by(|a, b| (&a.session_id, a.gps_tow).cmp(&(&b.session_id, b.gps_tow)));
    (out, log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{mass_valid, MassBounds};
    use crate::synth::{generate_day, SynthConfig};

    fn day() -> Vec<CartSession> {
        generate_day(&SynthConfig { n_carts: 2, ..Default::default() }, 0).unwrap().sessions
    }

    #[test]
    fn zero_severity_is_identity() {
        let s = day();
        let (out, log) = corrupt(&s, 0.0, 9);
        assert_eq!(out, s);
        assert!(log.entries.is_empty());
    }

    #[test]
    fn spikes_fail_the_mass_window_and_dropouts_shorten() {
        let s = day();
        let (out, log) = corrupt(&s, 1.0, 9);
        assert!(log.of_kind(InjectionKind::MassSpike).count() > 0);
        assert!(log.of_kind(InjectionKind::Dropout).count() > 0);
        let bounds = MassBounds::default();
        for e in log.of_kind(InjectionKind::MassSpike) {
            let sess = out.iter().find(|x| x.session_id == e.session_id).unwrap();
            let i = sess.samples.iter().position(|p| p.gps_tow == e.gps_tow).unwrap();
            for p in &sess.samples[i..i + e.samples] {
                assert!(!mass_valid(p.raw_mass, &bounds));
            }
        }
        for (a, b) in s.iter().zip(&out) {
            let removed: usize =
                log.of_kind(InjectionKind::Dropout).filter(|e| e.session_id == a.session_id).map(|e| e.samples).sum();
            assert_eq!(a.len() - b.len(), removed);
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let s = day();
        assert_eq!(corrupt(&s, 0.5, 3), corrupt(&s, 0.5, 3));
    }
}

use serde::{Deserialize, Serialize};

use super::AnnotateError;
use crate::ingest::CartSession;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedParams {
    /// Moving-average window in samples; odd and at least 3.
    pub window: usize,
    /// Upper clamp in m/s.
    pub vmax: f64,
}

impl Default for SpeedParams {
    fn default() -> Self {
        SpeedParams { window: 21, vmax: 5.0 }
    }
}

impl SpeedParams {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(AnnotateError::InvalidParams(format!(
                "speed.window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.vmax > 0.0) {
            return Err(AnnotateError::InvalidParams(format!("speed.vmax must be > 0, got {}", self.vmax)));
        }
        Ok(())
    }
}

/// Per-sample model channels derived from one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    /// m/s, within `[0, vmax]`.
    pub speed: Vec<f64>,
    pub mass: Vec<f64>,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub az: Vec<f64>,
}

impl FeatureFrame {
    pub fn len(&self) -> usize {
        self.speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed.is_empty()
    }
}

/// Centered moving average whose half-width shrinks near the ends so it stays symmetric.
fn smooth(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            (prefix[i + h + 1] - prefix[i - h]) / (2 * h + 1) as f64
        })
        .collect()
}

/// Speed from smoothed positions by central differences (one-sided at the ends).
///
/// Differences use `gps_tow`; a non-positive time step falls back to the nominal sample period.
pub fn derive_speed(session: &CartSession, params: &SpeedParams) -> Result<FeatureFrame, AnnotateError> {
    params.validate()?;
    let n = session.len();
    if n < params.window {
        return Err(AnnotateError::SessionTooShort { samples: n, window: params.window });
    }
    let s = &session.samples;
    let half = params.window / 2;
    // Offsets keep the prefix sums well-conditioned for UTM-sized coordinates.
    let (e0, n0) = (s[0].easting, s[0].northing);
    let xs = smooth(&s.iter().map(|p| p.easting - e0).collect::<Vec<_>>(), half);
    let ys = smooth(&s.iter().map(|p| p.northing - n0).collect::<Vec<_>>(), half);
    let period = 1.0 / session.nominal_rate;

    let speed = (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            let mut dt = (s[b].gps_tow - s[a].gps_tow) as f64 / 1000.0;
            if dt <= 0.0 {
                dt = period * (b - a) as f64;
            }
            let v = (xs[b] - xs[a]).hypot(ys[b] - ys[a]) / dt;
            v.clamp(0.0, params.vmax)
        })
        .collect();

    Ok(FeatureFrame {
        speed,
        mass: s.iter().map(|p| p.raw_mass).collect(),
        ax: s.iter().map(|p| p.ax).collect(),
        ay: s.iter().map(|p| p.ay).collect(),
        az: s.iter().map(|p| p.az).collect(),
    })
}

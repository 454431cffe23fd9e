use serde::{Deserialize, Serialize};

use super::config::FeatureSet;
use super::tensor::Seq;
use super::ModelError;
use crate::annotate::{derive_speed, FeatureFrame, SpeedParams};
use crate::ingest::{CartSession, SessionId};

/// Per-channel mean and population standard deviation of training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(channels: usize) -> Self {
        NormStats { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// From row-major `[sample][channel]` blocks. A constant channel gets std 1.
    pub fn fit<'a>(blocks: impl IntoIterator<Item = &'a [f64]>, channels: usize) -> Self {
        let blocks: Vec<&[f64]> = blocks.into_iter().collect();
        let mut count = 0usize;
        let mut mean = vec![0.0; channels];
        for b in &blocks {
            for row in b.chunks_exact(channels) {
                count += 1;
                for c in 0..channels {
                    mean[c] += row[c];
                }
            }
        }
        if count == 0 {
            return NormStats::identity(channels);
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut var = vec![0.0; channels];
        for b in &blocks {
            for row in b.chunks_exact(channels) {
                for c in 0..channels {
                    var[c] += (row[c] - mean[c]).powi(2);
                }
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / count as f64).sqrt();
                if s > 1e-12 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        NormStats { mean, std }
    }

    pub fn apply(&self, rows: &mut [f64]) {
        let ch = self.channels();
        for row in rows.chunks_exact_mut(ch) {
            for c in 0..ch {
                row[c] = (row[c] - self.mean[c]) / self.std[c];
            }
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.mean.len() != self.std.len() || self.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(ModelError::Artifact("normalization std must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Raw model inputs `[sample][channel]` for a session.
pub fn session_features(
    session: &CartSession,
    features: FeatureSet,
    speed: &SpeedParams,
) -> Result<Vec<f64>, ModelError> {
    let frame = if features.needs_speed() {
        derive_speed(session, speed)?
    } else {
        let s = &session.samples;
        FeatureFrame {
            speed: vec![0.0; s.len()],
            mass: s.iter().map(|p| p.raw_mass).collect(),
            ax: s.iter().map(|p| p.ax).collect(),
            ay: s.iter().map(|p| p.ay).collect(),
            az: s.iter().map(|p| p.az).collect(),
        }
    };
    frame_features(&session.session_id, &frame, features, session.len())
}

pub(crate) fn frame_features(
    id: &SessionId,
    frame: &FeatureFrame,
    features: FeatureSet,
    expected_len: usize,
) -> Result<Vec<f64>, ModelError> {
    let lens = [frame.speed.len(), frame.mass.len(), frame.ax.len(), frame.ay.len(), frame.az.len()];
    if lens.iter().any(|&l| l != expected_len) {
        return Err(ModelError::FeatureMismatch {
            session: id.clone(),
            message: format!("feature columns have lengths {lens:?}, session has {expected_len} samples"),
        });
    }
    let raw = features.extract(frame);
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::FeatureMismatch {
            session: id.clone(),
            message: format!("non-finite feature at sample {}", i / features.channels()),
        });
    }
    Ok(raw)
}

/// `(start, valid)` of consecutive windows covering `len` samples with stride `stride`.
pub fn window_spans(len: usize, seq_len: usize, stride: usize) -> Vec<(usize, usize)> {
    assert!(seq_len > 0 && stride > 0);
    if len == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        out.push((start, seq_len.min(len - start)));
        if start + seq_len >= len {
            break;
        }
        start += stride;
    }
    out
}

/// Normalized windows ready for the network, zero-padded past each window's valid length.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub n: usize,
    pub seq_len: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    /// `(session, first sample, valid samples)` per window.
    pub alignment: Vec<(SessionId, usize, usize)>,
}

impl WindowBatch {
    /// Cuts normalized `[sample][channel]` rows into windows.
    pub fn from_rows(
        id: &SessionId,
        rows: &[f64],
        channels: usize,
        seq_len: usize,
        spans: &[(usize, usize)],
    ) -> Self {
        let mut data = vec![0.0f32; spans.len() * seq_len * channels];
        let mut alignment = Vec::with_capacity(spans.len());
        for (w, &(start, valid)) in spans.iter().enumerate() {
            let dst = &mut data[w * seq_len * channels..(w * seq_len + valid) * channels];
            for (d, s) in dst.iter_mut().zip(&rows[start * channels..(start + valid) * channels]) {
                *d = *s as f32;
            }
            alignment.push((id.clone(), start, valid));
        }
        WindowBatch { n: spans.len(), seq_len, channels, data, alignment }
    }

    pub fn to_seq(&self) -> Seq<f32> {
        Seq::from_vec(self.n, self.seq_len, self.channels, self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

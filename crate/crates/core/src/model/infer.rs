use serde::{Deserialize, Serialize};

use super::features::{frame_features, session_features, window_spans, WindowBatch};
use super::{ModelError, TrainedModel};
use crate::annotate::{FeatureFrame, LabelSequence};
use crate::ingest::{Activity, CartSession};

/// How a session is cut into network windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stitching {
    /// Consecutive non-overlapping windows, the last one zero-padded.
    #[default]
    Tiled,
    /// Windows every `stride` samples; each sample takes the majority vote of the windows covering it,
    /// ties broken by mean Pick probability.
    Overlap { stride: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub labels: LabelSequence,
    /// Mean Pick probability per sample.
    pub pick_prob: Vec<f64>,
}

/// Labels a session from its feature frame using tiled windows.
pub fn classify_session(m: &TrainedModel, s: &CartSession, frame: &FeatureFrame) -> Result<Classification, ModelError> {
    let raw = frame_features(&s.session_id, frame, m.feature_set, s.len())?;
    classify_rows(m, s, raw, Stitching::Tiled)
}

/// Derives features with the model's own settings, then labels the session with tiled windows.
pub fn classify(m: &TrainedModel, s: &CartSession) -> Result<Classification, ModelError> {
    classify_with(m, s, Stitching::Tiled)
}

pub fn classify_with(m: &TrainedModel, s: &CartSession, stitching: Stitching) -> Result<Classification, ModelError> {
    let raw = session_features(s, m.feature_set, &m.speed)?;
    classify_rows(m, s, raw, stitching)
}

const CHUNK: usize = 16;

fn classify_rows(
    m: &TrainedModel,
    s: &CartSession,
    mut rows: Vec<f64>,
    stitching: Stitching,
) -> Result<Classification, ModelError> {
    let ch = m.config.in_channels;
    if m.norm_stats.channels() != ch || m.feature_set.channels() != ch {
        return Err(ModelError::FeatureMismatch {
            session: s.session_id.clone(),
            message: format!(
                "model has {ch} inputs, {} normalization channels, feature set {}",
                m.norm_stats.channels(),
                m.feature_set
            ),
        });
    }
    m.norm_stats.apply(&mut rows);
    let n = s.len();
    let seq_len = m.config.seq_len;
    let stride = match stitching {
        Stitching::Tiled => seq_len,
        Stitching::Overlap { stride } => {
            if stride == 0 || stride > seq_len {
                return Err(ModelError::ConfigInvalid(format!("overlap stride must be in 1..={seq_len}, got {stride}")));
            }
            stride
        }
    };
    let spans = window_spans(n, seq_len, stride);
    let mut votes = vec![0u32; n];
    let mut covered = vec![0u32; n];
    let mut prob_sum = vec![0.0f64; n];
    let mut net = m.net.clone();
    for part in spans.chunks(CHUNK) {
        let batch = WindowBatch::from_rows(&s.session_id, &rows, ch, seq_len, part);
        let probs = net.predict(&batch.to_seq())?;
        for (w, &(start, valid)) in part.iter().enumerate() {
            for t in 0..valid {
                let row = probs.row(w * seq_len + t);
                let i = start + t;
                covered[i] += 1;
                votes[i] += u32::from(row[1] > row[0]);
                prob_sum[i] += f64::from(row[1]);
            }
        }
    }
    let pick_prob: Vec<f64> = prob_sum.iter().zip(&covered).map(|(p, &c)| p / c.max(1) as f64).collect();
    let labels = (0..n)
        .map(|i| {
            let (v, c) = (2 * votes[i], covered[i]);
            Activity::from_pick(v > c || (v == c && pick_prob[i] > 0.5))
        })
        .collect();
    Ok(Classification { labels: LabelSequence::new(s.session_id.clone(), labels), pick_prob })
}

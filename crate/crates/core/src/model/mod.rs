//! Per-timestep Pick/NoPick segmentation network.
//!
//! A five-stage convolutional encoder shrinks each window by 384x, a mirrored
//! decoder restores full resolution with skip connections, two bidirectional
//! LSTMs and one forward LSTM add temporal context, and a pointwise head emits
//! class probabilities for every sample. Forward and backward passes are
//! implemented directly on flat buffers, generic over `f32`/`f64`.

mod artifact;
mod config;
mod features;
mod infer;
mod layers;
mod loocv;
mod network;
mod scalar;
mod tensor;
mod train;

pub use artifact::{load_model, read_model, save_model, write_model, FORMAT_VERSION};
pub use config::{FeatureSet, ModelConfig, TrainConfig, MAX_EPOCHS, TOTAL_POOL};
pub use features::{session_features, window_spans, NormStats, WindowBatch};
pub use infer::{classify, classify_session, classify_with, Classification, Stitching};
pub use layers::{BatchNorm, BiLstm, Conv1d, ConvBlock, Lstm};
pub use loocv::{group_by_date, loocv, DaySessions, FoldResult, FoldSummary, LoocvReport};
pub use network::{cross_entropy, gradient_check, softmax_rows, GradCheckEntry, Network};
pub use scalar::Real;
pub use tensor::{Param, Seq};
pub use train::{train, write_history_csv, EpochRecord, TrainOutcome, HISTORY_HEADER};

use std::path::PathBuf;

use crate::annotate::{AnnotateError, SpeedParams};
use crate::ingest::{HarvestDate, SessionId};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    ConfigInvalid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no labeled sessions to train on")]
    NoLabeledData,
    #[error("need at least {needed} windows, got {got}")]
    InsufficientWindows { needed: usize, got: usize },
    #[error("feature mismatch for {session}: {message}")]
    FeatureMismatch { session: SessionId, message: String },
    #[error("held-out date {0} is not in the data")]
    UnknownDate(HarvestDate),
    #[error("cross-validation needs at least 2 dates, got {0}")]
    TooFewDates(usize),
    #[error("model artifact: {0}")]
    Artifact(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Features(#[from] AnnotateError),
}

/// Network weights plus everything needed to turn raw telemetry into its input.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub feature_set: FeatureSet,
    pub speed: SpeedParams,
    pub norm_stats: NormStats,
    pub net: Network<f32>,
}

impl TrainedModel {
    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Class probabilities `[n, seq_len, 2]` for an already normalized batch.
    pub fn forward(&self, batch: &WindowBatch) -> Result<Seq<f32>, ModelError> {
        if batch.channels != self.config.in_channels || batch.seq_len != self.config.seq_len {
            return Err(ModelError::ShapeMismatch(format!(
                "batch is [{}, {}, {}], model expects [_, {}, {}]",
                batch.n, batch.seq_len, batch.channels, self.config.seq_len, self.config.in_channels
            )));
        }
        let mut net = self.net.clone();
        net.predict(&batch.to_seq())
    }
}

/// Untrained model with seeded weights and identity normalization.
pub fn build_model(cfg: &ModelConfig, feature_set: FeatureSet, seed: u64) -> Result<TrainedModel, ModelError> {
    cfg.validate()?;
    if feature_set.channels() != cfg.in_channels {
        return Err(ModelError::ConfigInvalid(format!(
            "feature set {feature_set} has {} channels, config has {}",
            feature_set.channels(),
            cfg.in_channels
        )));
    }
    Ok(TrainedModel {
        config: cfg.clone(),
        feature_set,
        speed: SpeedParams::default(),
        norm_stats: NormStats::identity(cfg.in_channels),
        net: Network::new(cfg, seed)?,
    })
}

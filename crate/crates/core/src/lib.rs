//! Picking-cart telemetry to picker-efficiency analytics.
//!
//! The pipeline runs in stages, each a module:
//!
//! - [`ingest`] reads and writes the telemetry, break-log and tray-count CSV files.
//! - [`annotate`] labels samples Pick/NoPick without supervision (geofence, density
//!   clustering, mass window) and derives cart speed.
//! - [`model`] is the CNN-LSTM per-timestep segmenter: training, inference, LOOCV.
//! - [`efficiency`] turns labels into efficiency and tray-fill-time reports and
//!   season summaries.
//! - [`evaluate`] scores predicted labels and estimates against ground truth.
//! - [`synth`] generates labeled cart-days with exact ground truth.

pub mod annotate;
pub mod efficiency;
pub mod evaluate;
pub mod ingest;
pub mod model;
pub mod synth;

pub use annotate::{annotate_session, FieldBoundary, LabelSequence};
pub use ingest::{Activity, CartSession, HarvestDate, SessionId, TelemetrySample};
pub use efficiency::{EfficiencyParams, EfficiencyReport, SeasonSummary};
pub use evaluate::{ConfusionCounts, Metrics};
pub use model::{FeatureSet, ModelConfig, TrainConfig, TrainedModel};
pub use synth::{generate_day, generate_season, SynthConfig, SynthDay};

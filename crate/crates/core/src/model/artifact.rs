use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::config::{FeatureSet, ModelConfig};
use super::features::NormStats;
use super::network::Network;
use super::{ModelError, TrainedModel};
use crate::annotate::SpeedParams;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Artifact {
    format_version: u32,
    config: ModelConfig,
    feature_set: FeatureSet,
    speed: SpeedParams,
    norm_stats: NormStats,
    tensors: Vec<Tensor>,
}

/// Little-endian `f32` values, base64 encoded.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tensor {
    shape: Vec<usize>,
    data: String,
}

pub fn write_model<W: Write>(w: W, m: &TrainedModel) -> Result<(), ModelError> {
    let tensors = m
        .net
        .state()
        .into_iter()
        .zip(m.net.state_shapes())
        .map(|(values, shape)| {
            let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            Tensor { shape, data: STANDARD.encode(bytes) }
        })
        .collect();
    let art = Artifact {
        format_version: FORMAT_VERSION,
        config: m.config.clone(),
        feature_set: m.feature_set,
        speed: m.speed,
        norm_stats: m.norm_stats.clone(),
        tensors,
    };
    serde_json::to_writer(w, &art).map_err(|e| ModelError::Artifact(e.to_string()))
}

pub fn read_model<R: Read>(r: R) -> Result<TrainedModel, ModelError> {
    let art: Artifact = serde_json::from_reader(r).map_err(|e| ModelError::Artifact(e.to_string()))?;
    if art.format_version != FORMAT_VERSION {
        return Err(ModelError::Artifact(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            art.format_version
        )));
    }
    art.norm_stats.validate()?;
    if art.norm_stats.channels() != art.config.in_channels || art.feature_set.channels() != art.config.in_channels {
        return Err(ModelError::Artifact("feature set, normalization and config disagree on channel count".into()));
    }
    let mut net = Network::<f32>::new(&art.config, 0)?;
    let shapes = net.state_shapes();
    if shapes.len() != art.tensors.len() {
        return Err(ModelError::Artifact(format!("expected {} tensors, found {}", shapes.len(), art.tensors.len())));
    }
    let mut state = Vec::with_capacity(art.tensors.len());
    for (i, (t, shape)) in art.tensors.iter().zip(&shapes).enumerate() {
        if &t.shape != shape {
            return Err(ModelError::Artifact(format!("tensor {i} has shape {:?}, expected {shape:?}", t.shape)));
        }
        let bytes = STANDARD.decode(&t.data).map_err(|e| ModelError::Artifact(format!("tensor {i}: {e}")))?;
        if bytes.len() != 4 * shape.iter().product::<usize>() {
            return Err(ModelError::Artifact(format!("tensor {i} has {} bytes", bytes.len())));
        }
        state.push(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect());
    }
    net.load_state(state)?;
    Ok(TrainedModel {
        config: art.config,
        feature_set: art.feature_set,
        speed: art.speed,
        norm_stats: art.norm_stats,
        net,
    })
}

pub fn save_model(path: impl AsRef<Path>, m: &TrainedModel) -> Result<(), ModelError> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|source| ModelError::Io { path: path.into(), source })?;
    let mut w = BufWriter::new(f);
    write_model(&mut w, m)?;
    w.flush().map_err(|source| ModelError::Io { path: path.into(), source })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, ModelError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|source| ModelError::Io { path: path.into(), source })?;
    read_model(BufReader::new(f))
}

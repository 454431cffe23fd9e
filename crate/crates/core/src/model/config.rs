use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::annotate::FeatureFrame;

/// Temporal reduction of the full encoder; every window length must be a multiple of it.
pub const TOTAL_POOL: usize = 384;

/// Model input channel combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FeatureSet {
    Velocity,
    Accel,
    Mass,
    MassAccel,
    MassAccelVelocity,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] =
        [FeatureSet::Velocity, FeatureSet::Accel, FeatureSet::Mass, FeatureSet::MassAccel, FeatureSet::MassAccelVelocity];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Velocity => "velocity",
            FeatureSet::Accel => "accel",
            FeatureSet::Mass => "mass",
            FeatureSet::MassAccel => "mass+accel",
            FeatureSet::MassAccelVelocity => "mass+accel+velocity",
        }
    }

    pub fn channel_names(self) -> &'static [&'static str] {
        match self {
            FeatureSet::Velocity => &["speed"],
            FeatureSet::Accel => &["ax", "ay", "az"],
            FeatureSet::Mass => &["mass"],
            FeatureSet::MassAccel => &["mass", "ax", "ay", "az"],
            FeatureSet::MassAccelVelocity => &["mass", "ax", "ay", "az", "speed"],
        }
    }

    pub fn channels(self) -> usize {
        self.channel_names().len()
    }

    pub fn needs_speed(self) -> bool {
        matches!(self, FeatureSet::Velocity | FeatureSet::MassAccelVelocity)
    }

    /// Row-major `[sample][channel]` raw values.
    pub fn extract(self, frame: &FeatureFrame) -> Vec<f64> {
        let cols: Vec<&[f64]> = self
            .channel_names()
            .iter()
            .map(|c| match *c {
                "speed" => frame.speed.as_slice(),
                "mass" => frame.mass.as_slice(),
                "ax" => frame.ax.as_slice(),
                "ay" => frame.ay.as_slice(),
                _ => frame.az.as_slice(),
            })
            .collect();
        let mut out = Vec::with_capacity(frame.len() * cols.len());
        for i in 0..frame.len() {
            out.extend(cols.iter().map(|c| c[i]));
        }
        out
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSet {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.trim().to_ascii_lowercase().replace([',', ' '], "+");
        let parsed = match norm.as_str() {
            "velocity" | "speed" => FeatureSet::Velocity,
            "accel" | "acceleration" => FeatureSet::Accel,
            "mass" => FeatureSet::Mass,
            "mass+accel" => FeatureSet::MassAccel,
            "mass+accel+velocity" | "all" => FeatureSet::MassAccelVelocity,
            _ => return Err(ModelError::ConfigInvalid(format!("unknown feature set `{s}`"))),
        };
        Ok(parsed)
    }
}

impl TryFrom<String> for FeatureSet {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<FeatureSet> for String {
    fn from(f: FeatureSet) -> String {
        f.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub seq_len: usize,
    pub encoder_channels: Vec<usize>,
    pub pool_factors: Vec<usize>,
    pub up_factors: Vec<usize>,
    pub kernel: usize,
    pub bilstm_units: Vec<usize>,
    pub lstm_units: usize,
    pub head_hidden_channels: usize,
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 4,
            seq_len: 768,
            encoder_channels: vec![16, 32, 64, 128, 256],
            pool_factors: vec![1, 8, 6, 4, 2],
            up_factors: vec![2, 4, 6, 8],
            kernel: 9,
            bilstm_units: vec![64, 32],
            lstm_units: 16,
            head_hidden_channels: 16,
            classes: 2,
        }
    }
}

impl ModelConfig {
    pub fn for_features(features: FeatureSet) -> Self {
        ModelConfig { in_channels: features.channels(), ..Default::default() }
    }

    /// Reference architecture: structural checks plus the fixed stage widths, kernel and class count.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.validate_structure()?;
        if self.encoder_channels[1..] != [32, 64, 128, 256] {
            return invalid(format!("encoder stages 2-5 must have 32, 64, 128, 256 channels, got {:?}", self.encoder_channels));
        }
        if self.kernel != 9 {
            return invalid(format!("kernel must be 9, got {}", self.kernel));
        }
        if self.classes != 2 {
            return invalid(format!("classes must be 2, got {}", self.classes));
        }
        if !(1..=5).contains(&self.in_channels) {
            return invalid(format!("in_channels must be 1-5, got {}", self.in_channels));
        }
        Ok(())
    }

    /// Shape consistency only; reduced-width variants pass this but not [`ModelConfig::validate`].
    pub fn validate_structure(&self) -> Result<(), ModelError> {
        let stages = self.encoder_channels.len();
        if stages < 2 || self.pool_factors.len() != stages || self.up_factors.len() != stages - 1 {
            return invalid(format!(
                "need matching stage lists: {} encoder widths, {} pool factors, {} up factors",
                stages,
                self.pool_factors.len(),
                self.up_factors.len()
            ));
        }
        if self.pool_factors.contains(&0) || self.up_factors.contains(&0) {
            return invalid("pool and up factors must be positive".into());
        }
        let pool: usize = self.pool_factors.iter().product();
        let up: usize = self.up_factors.iter().product();
        if pool != TOTAL_POOL || up != TOTAL_POOL {
            return invalid(format!("pool product {pool} and up product {up} must both be {TOTAL_POOL}"));
        }
        for (j, &u) in self.up_factors.iter().enumerate() {
            if u != self.pool_factors[stages - 1 - j] {
                return invalid(format!("up factor {j} ({u}) must undo pool factor {}", stages - 1 - j));
            }
        }
        if self.seq_len == 0 || self.seq_len % TOTAL_POOL != 0 {
            return invalid(format!("seq_len must be a positive multiple of {TOTAL_POOL}, got {}", self.seq_len));
        }
        if self.kernel % 2 == 0 {
            return invalid(format!("kernel must be odd, got {}", self.kernel));
        }
        if self.in_channels == 0
            || self.classes < 2
            || self.encoder_channels.contains(&0)
            || self.bilstm_units.contains(&0)
            || self.lstm_units == 0
            || self.head_hidden_channels == 0
        {
            return invalid("channel and unit counts must be positive".into());
        }
        Ok(())
    }

    /// Every width halved; for numerical gradient checks.
    pub fn halved(&self) -> Self {
        let half = |v: usize| (v / 2).max(1);
        ModelConfig {
            encoder_channels: self.encoder_channels.iter().map(|&c| half(c)).collect(),
            bilstm_units: self.bilstm_units.iter().map(|&c| half(c)).collect(),
            lstm_units: half(self.lstm_units),
            head_hidden_channels: half(self.head_hidden_channels),
            ..self.clone()
        }
    }
}

fn invalid<T>(msg: String) -> Result<T, ModelError> {
    Err(ModelError::ConfigInvalid(msg))
}

/// Optimizer and data-split settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Windows per forward/backward slice; gradients of a batch's slices are summed.
    pub micro_batch: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub feature_set: FeatureSet,
    /// Stop after this many epochs without a validation-loss improvement.
    pub patience: Option<usize>,
    /// Weight the loss by inverse class frequency of the training windows.
    pub class_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 270,
            micro_batch: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-7,
            val_fraction: 0.2,
            seed: 0,
            feature_set: FeatureSet::MassAccel,
            patience: None,
            class_weights: false,
        }
    }
}

/// Upper bound on training epochs.
pub const MAX_EPOCHS: usize = 50;

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<(), ModelError> {
        if self.epochs == 0 || self.epochs > MAX_EPOCHS {
            return invalid(format!("epochs must be 1-{MAX_EPOCHS}, got {}", self.epochs));
        }
        if self.batch_size == 0 || self.micro_batch == 0 {
            return invalid("batch_size and micro_batch must be positive".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return invalid(format!("val_fraction must be in (0, 1), got {}", self.val_fraction));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return invalid("learning_rate must be positive and betas in [0, 1)".into());
        }
        if !(self.adam_epsilon > 0.0) {
            return invalid("adam_epsilon must be positive".into());
        }
        if self.feature_set.channels() != model.in_channels {
            return invalid(format!(
                "feature set {} has {} channels but the model expects {}",
                self.feature_set,
                self.feature_set.channels(),
                model.in_channels
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::default().validate().unwrap();
        TrainConfig::default().validate(&ModelConfig::default()).unwrap();
    }

    #[test]
    fn seq_len_must_be_multiple_of_pool() {
        let cfg = ModelConfig { seq_len: 400, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ModelError::ConfigInvalid(_))));
        for ok in [384, 768, 1152] {
            ModelConfig { seq_len: ok, ..Default::default() }.validate().unwrap();
        }
    }

    #[test]
    fn factor_alignment() {
        let cfg = ModelConfig { up_factors: vec![8, 6, 4, 2], ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig { pool_factors: vec![1, 8, 6, 4, 4], ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn halved_is_structural_only() {
        let half = ModelConfig::default().halved();
        assert_eq!(half.encoder_channels, vec![8, 16, 32, 64, 128]);
        half.validate_structure().unwrap();
        assert!(half.validate().is_err());
    }

    #[test]
    fn feature_set_names() {
        for f in FeatureSet::ALL {
            assert_eq!(f.name().parse::<FeatureSet>().unwrap(), f);
        }
        assert_eq!("mass,accel".parse::<FeatureSet>().unwrap(), FeatureSet::MassAccel);
        assert_eq!("all".parse::<FeatureSet>().unwrap().channels(), 5);
        assert!("gyro".parse::<FeatureSet>().is_err());
    }

    #[test]
    fn feature_set_must_match_channels() {
        let tc = TrainConfig { feature_set: FeatureSet::Mass, ..Default::default() };
        assert!(tc.validate(&ModelConfig::default()).is_err());
        tc.validate(&ModelConfig::for_features(FeatureSet::Mass)).unwrap();
    }

    #[test]
    fn epoch_cap() {
        let tc = TrainConfig { epochs: 51, ..Default::default() };
        assert!(tc.validate(&ModelConfig::default()).is_err());
    }

    #[test]
    fn extract_orders_channels() {
        let frame = FeatureFrame {
            speed: vec![0.5, 0.6],
            mass: vec![1.0, 2.0],
            ax: vec![0.1, 0.2],
            ay: vec![0.3, 0.4],
            az: vec![9.8, 9.9],
        };
        assert_eq!(FeatureSet::MassAccelVelocity.extract(&frame), vec![1.0, 0.1, 0.3, 9.8, 0.5, 2.0, 0.2, 0.4, 9.9, 0.6]);
        assert_eq!(FeatureSet::Velocity.extract(&frame), vec![0.5, 0.6]);
    }
}

use std::path::Path;

use pickeff_core::annotate::AnnotateConfig;
use pickeff_core::efficiency::EfficiencyParams;
use pickeff_core::model::{FeatureSet, ModelConfig, TrainConfig};
use pickeff_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

/// Every tunable parameter, one section per pipeline stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub annotate: AnnotateConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub efficiency: EfficiencyParams,
    pub synth: SynthConfig,
}

/// Resolved configuration plus where each layer came from.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub sources: Vec<String>,
}

/// Parses a `--set` value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn has_key(table: &Table, section: &str, key: &str) -> bool {
    table.get(section).and_then(Value::as_table).is_some_and(|t| t.contains_key(key))
}

/// Layers defaults, the optional TOML file, then `key=value` overrides, then dedicated flags.
pub fn resolve(
    file: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
    features: Option<FeatureSet>,
) -> Result<Resolved, CliError> {
    let mut sources = vec!["defaults".to_string()];
    let mut table = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|_| CliError::MissingInput(p.to_path_buf()))?;
            sources.push(format!("file:{}", p.display()));
            toml::from_str::<Table>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| CliError::Config(format!("expected key=value, got `{o}`")))?;
        set_dotted(&mut table, k.trim(), parse_value(v.trim()))?;
        sources.push(format!("set:{}", o.trim()));
    }
    let explicit_channels = has_key(&table, "model", "in_channels");
    let mut config: RunConfig =
        Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    if let Some(s) = seed {
        config.train.seed = s;
        config.synth.seed = s;
        sources.push(format!("flag:--seed={s}"));
    }
    if let Some(f) = features {
        config.train.feature_set = f;
        sources.push(format!("flag:--features={f}"));
    }
    if !explicit_channels {
        config.model.in_channels = config.train.feature_set.channels();
    }
    Ok(Resolved { config, sources })
}

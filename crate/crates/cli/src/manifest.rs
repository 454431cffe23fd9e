use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Resolved, RunConfig};
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub session_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactVersions {
    pub model_format: u32,
    pub truth_format: u32,
}

/// Everything needed to rerun an invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub inputs: Vec<InputFile>,
    pub config: RunConfig,
    pub config_sources: Vec<String>,
    pub seed: u64,
    pub artifact_versions: ArtifactVersions,
    pub outputs: Vec<PathBuf>,
    pub skipped: Vec<Skipped>,
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, resolved: &Resolved) -> Self {
        Manifest {
            tool: "pickeff".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            inputs: Vec::new(),
            config: resolved.config.clone(),
            config_sources: resolved.sources.clone(),
            seed: resolved.config.train.seed,
            artifact_versions: ArtifactVersions {
                model_format: pickeff_core::model::FORMAT_VERSION,
                truth_format: pickeff_core::synth::TRUTH_FORMAT_VERSION,
            },
            outputs: Vec::new(),
            skipped: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Records an input, failing with the missing-input error if it does not exist.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let meta = std::fs::metadata(path).map_err(|_| CliError::MissingInput(path.to_path_buf()))?;
        self.inputs.push(InputFile { path: path.to_path_buf(), bytes: meta.len() });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn skip(&mut self, session_id: impl ToString, reason: impl ToString) {
        let (session_id, reason) = (session_id.to_string(), reason.to_string());
        log::warn!("skipped {session_id}: {reason}");
        self.skipped.push(Skipped { session_id, reason });
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let f = File::create(&path).map_err(|e| CliError::output(&path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| CliError::output(&path, e))?;
        w.flush().map_err(|e| CliError::output(&path, e))?;
        Ok(path)
    }
}

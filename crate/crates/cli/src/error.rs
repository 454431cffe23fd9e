use std::path::PathBuf;

use pickeff_core::annotate::AnnotateError;
use pickeff_core::efficiency::EfficiencyError;
use pickeff_core::evaluate::EvaluateError;
use pickeff_core::ingest::IngestError;
use pickeff_core::model::ModelError;
use pickeff_core::synth::SynthError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {message}", path.display())]
    Output { path: PathBuf, message: String },
    #[error("{0} session(s) skipped; see the run manifest")]
    SessionsSkipped(usize),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Efficiency(#[from] EfficiencyError),
    #[error(transparent)]
    Evaluate(#[from] EvaluateError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl CliError {
    /// 2 for bad invocations (missing inputs, bad configuration), 3 for skipped sessions under `--strict`, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput(_) | CliError::Config(_) => 2,
            CliError::SessionsSkipped(_) => 3,
            _ => 1,
        }
    }

    pub fn output(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        CliError::Output { path: path.into(), message: e.to_string() }
    }
}

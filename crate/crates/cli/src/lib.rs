//! Reproducible runs on top of `clgl-core`: corpus generation, training,
//! evaluation, theory verification and cross-run reports.

pub mod commands;
pub mod config;

use clgl_core::causal::CausalError;
use clgl_core::encoder::EncoderError;
use clgl_core::expert::ExpertError;
use clgl_core::graphs::GraphError;
use clgl_core::training::TrainError;
use thiserror::Error;

pub use commands::{
    cmd_evaluate, cmd_generate, cmd_report, cmd_train, cmd_verify_theory, load_manifest,
    EvaluationReport, Manifest, ReportRow, RunReport,
};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Verification(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Verification(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ExpertError> for CliError {
    fn from(e: ExpertError) -> Self {
        match e {
            ExpertError::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Encoder(e) => e.into(),
            TrainError::Expert(e) => e.into(),
            TrainError::Graph(e) => e.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CausalError> for CliError {
    fn from(e: CausalError) -> Self {
        match e {
            CausalError::Encoder(e) => e.into(),
            CausalError::Expert(e) => e.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(format!("malformed json: {e}"))
    }
}

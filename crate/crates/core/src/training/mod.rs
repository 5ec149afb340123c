//! Losses, the alternating optimisation loop, the four run modes and the
//! per-epoch metrics.

mod adam;
mod losses;
mod metrics;
mod run;

pub use adam::Adam;
pub use losses::{
    forward_batch, loss_la, loss_lc, loss_ld, loss_lg, BatchOutput, BatchTargets, Objectives,
};
pub use metrics::{metrics_csv, write_metrics_csv, MetricsRow, RunSummary, CSV_HEADER};
pub use run::{
    evaluate, evaluate_split, expert_similarity, train, Evaluation, SplitMetrics, TrainOutcome,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::EncoderError;
use crate::expert::ExpertError;
use crate::graphs::{GraphError, Split};
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("the {0} split is empty")]
    EmptySplit(Split),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "ERM")]
    Erm,
    #[serde(rename = "CLGL")]
    Clgl,
    #[serde(rename = "CLGL-A")]
    ClglA,
    #[serde(rename = "CLGL-D")]
    ClglD,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Erm, Mode::Clgl, Mode::ClglA, Mode::ClglD];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Erm => "ERM",
            Mode::Clgl => "CLGL",
            Mode::ClglA => "CLGL-A",
            Mode::ClglD => "CLGL-D",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
    }

    /// Whether this mode ever takes a step on `L_a`.
    pub fn steps_la(self) -> bool {
        matches!(self, Mode::Clgl | Mode::ClglA)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How `L_g` and `L_a` steps interleave in the CLGL modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternation {
    /// Even batches step `L_g`, odd batches step `L_a`.
    PerBatch,
    /// Odd epochs step `L_g`, even epochs step `L_a`.
    PerEpoch,
    /// `L_g` only.
    Off,
}

impl Alternation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per-batch" => Some(Self::PerBatch),
            "per-epoch" => Some(Self::PerEpoch),
            "off" => Some(Self::Off),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::PerBatch => "per-batch",
            Self::PerEpoch => "per-epoch",
            Self::Off => "off",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub lambda: f64,
    /// Number of intervention types (the first `k_types` of the schedule).
    pub k_types: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub min_epochs: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub alternation: Alternation,
    /// Weight of the CLGL-D auxiliary cross-entropy.
    pub aux_weight: f64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

impl Default for TrainConfig {
    /// Desk-scale settings.
    fn default() -> Self {
        Self {
            mode: Mode::Clgl,
            lambda: 1.0,
            k_types: 3,
            learning_rate: 0.001,
            batch_size: 32,
            min_epochs: 60,
            patience: 5,
            max_epochs: 120,
            seed: 0,
            alternation: Alternation::PerBatch,
            aux_weight: 1.0,
        }
    }
}

impl TrainConfig {
    /// The longer schedule used for full-fidelity runs.
    pub fn full_fidelity() -> Self {
        Self {
            min_epochs: 200,
            max_epochs: 400,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be a finite nonnegative number");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch size must be positive");
        }
        if self.max_epochs == 0 || self.min_epochs > self.max_epochs {
            return fail("need 0 < max epochs and min epochs <= max epochs");
        }
        if self.k_types == 0 || self.k_types > crate::encoder::default_types().len() {
            return fail("k_types must be between 1 and 3");
        }
        if !(self.aux_weight >= 0.0 && self.aux_weight.is_finite()) {
            return fail("aux weight must be nonnegative");
        }
        Ok(())
    }
}

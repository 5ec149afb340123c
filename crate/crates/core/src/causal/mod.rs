//! Exact finite structural causal models: joint enumeration, entropies and
//! mutual information, checks of the representation bounds, d-separation
//! and IC discovery.
//!
//! Variable names follow the factor model: `S*` (inaccessible factor),
//! `S~` (accessible factor), `X` (embodiment), `C` (confounder), `G` (graph),
//! `R` (representation), `T~` (expert output), `T` (model output) and an
//! optional latent `L` shared by `S~` and `S*`.

mod checks;
mod ic;
mod pattern;
mod report;
mod sampler;
mod scm;

pub use checks::{
    check_coverage_gap, check_output_sandwich, check_representation_bound, conformance_issues,
    output_sandwich_on_joint, plugin_mutual_information, representation_bound_on_joint, BoundCheck,
    CoverageReport, SandwichCheck, SandwichStatus, BOUND_TOLERANCE,
};
pub use ic::{ic_discover, ic_from_joint, CiOracle, IcOptions, JointOracle, CI_THRESHOLD};
pub use pattern::{d_separated, EdgeKind, PatternEdge, PatternGraph, S_STAR, S_TILDE};
pub use report::{
    factor_dsep_table, ic_options, leaking_representation_scm, run_verification, scm_dump, seeded,
    CheckRecord, VerificationReport, IC_RUNS,
};
pub use sampler::{random_bound_scm, random_faithful_scm, random_sandwich_scm};
pub use scm::{enumerate_joint, DiscreteSCM, JointTable, Variable, MAX_STATES, ROW_TOLERANCE};

use thiserror::Error;

use crate::encoder::EncoderError;
use crate::expert::ExpertError;

#[derive(Debug, Error)]
pub enum CausalError {
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("duplicate variable {0}")]
    DuplicateVariable(String),
    #[error("invalid table for {variable}: {reason}")]
    InvalidTable { variable: String, reason: String },
    #[error("joint has {size} states, above the enumeration limit")]
    StateSpace { size: u128 },
    #[error("model does not conform to the factor graph: {}", .0.join("; "))]
    NonConforming(Vec<String>),
    #[error("oracle answered asymmetrically for {a} and {b} given {given:?}")]
    OracleInconsistent {
        a: String,
        b: String,
        given: Vec<String>,
    },
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// `S~, C` fair coins, `X = S~`, `G = (X, C)`, `R = G`.
pub fn reference_bound_scm() -> DiscreteSCM {
    let mut scm = DiscreteSCM::new();
    scm.add(S_TILDE, 2, &[], vec![0.5, 0.5]).unwrap();
    scm.add("C", 2, &[], vec![0.5, 0.5]).unwrap();
    scm.add_deterministic("X", 2, &[S_TILDE], |v| v[0]).unwrap();
    scm.add_deterministic("G", 4, &["X", "C"], |v| v[0] * 2 + v[1])
        .unwrap();
    scm.add_deterministic("R", 4, &["G"], |v| v[0]).unwrap();
    scm
}

/// `S~` a fair coin, `X = S~`, `G = X`, `R = G`, `T~ = G`, `T = R`.
pub fn reference_sandwich_scm() -> DiscreteSCM {
    let mut scm = DiscreteSCM::new();
    scm.add(S_TILDE, 2, &[], vec![0.5, 0.5]).unwrap();
    scm.add_deterministic("X", 2, &[S_TILDE], |v| v[0]).unwrap();
    scm.add_deterministic("G", 2, &["X"], |v| v[0]).unwrap();
    scm.add_deterministic("R", 2, &["G"], |v| v[0]).unwrap();
    scm.add_deterministic("T~", 2, &["G"], |v| v[0]).unwrap();
    scm.add_deterministic("T", 2, &["R"], |v| v[0]).unwrap();
    scm
}

#[cfg(test)]
mod tests;

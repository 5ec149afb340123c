//! Learning a fixed expert causal model inside a graph neural network.
//!
//! The crate is split by concern:
//!
//! - [`numerics`]: tensors, a reverse-mode tape and the shared statistics
//!   (KL divergence, cross-entropy, softmax, cosine similarity).
//! - [`graphs`]: the graph data model, the synthetic motif/confounder
//!   generators and the JSON-lines corpus format.
//! - [`encoder`]: the learnable message-passing encoder and its heads.
//! - [`expert`]: the parameter-free morphology expert and its tempered
//!   intervention targets.
//! - [`training`]: losses, alternating optimisation, run modes and metrics.
//! - [`causal`]: exact finite structural causal models, information
//!   quantities, the two bound checks, d-separation and IC discovery.

pub mod causal;
pub mod encoder;
pub mod expert;
pub mod graphs;
pub mod numerics;
pub mod training;

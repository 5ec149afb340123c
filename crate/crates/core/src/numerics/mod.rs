//! Tensors, reverse-mode gradients, and the scalar statistics shared by the
//! rest of the crate. All logarithms are natural (nats).

mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::{log_sum_exp, softmax_in_place};

use thiserror::Error;

/// Floor applied to every distribution before a KL divergence is taken.
pub const PROBABILITY_FLOOR: f64 = 1e-8;

/// Tolerance on `Σp = 1` accepted by [`DistributionVector::new`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch at operation {op_index} ({op}): {detail}")]
    Shape {
        op_index: usize,
        op: &'static str,
        detail: String,
    },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    RaggedRows,
    #[error("usage error: {0}")]
    Usage(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("not a probability distribution: {0}")]
    NotNormalized(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
}

/// A probability vector: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionVector(Vec<f64>);

impl DistributionVector {
    pub fn new(values: Vec<f64>) -> Result<Self, NumericsError> {
        validate_distribution(&values)?;
        Ok(Self(values))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry (first one on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    /// Entries clamped to at least `floor`, then renormalized.
    pub fn floored(&self, floor: f64) -> Self {
        Self(clamp_and_renormalize(&self.0, floor))
    }
}

impl AsRef<[f64]> for DistributionVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn validate_distribution(p: &[f64]) -> Result<(), NumericsError> {
    if p.is_empty() {
        return Err(NumericsError::NotNormalized("empty".into()));
    }
    if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(NumericsError::NotNormalized(format!("entry {bad}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(NumericsError::NotNormalized(format!("sums to {total}")));
    }
    Ok(())
}

pub(crate) fn clamp_and_renormalize(p: &[f64], floor: f64) -> Vec<f64> {
    let clamped: Vec<f64> = p.iter().map(|&v| v.max(floor)).collect();
    let total: f64 = clamped.iter().sum();
    clamped.into_iter().map(|v| v / total).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `KL(p ‖ q)` in nats, after flooring both sides at [`PROBABILITY_FLOOR`].
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, NumericsError> {
    if p.len() != q.len() {
        return Err(NumericsError::LengthMismatch(p.len(), q.len()));
    }
    validate_distribution(p)?;
    validate_distribution(q)?;
    let p = clamp_and_renormalize(p, PROBABILITY_FLOOR);
    let q = clamp_and_renormalize(q, PROBABILITY_FLOOR);
    let kl: f64 = p
        .iter()
        .zip(&q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum();
    Ok(kl.max(0.0))
}

/// `-ln softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64, NumericsError> {
    if label >= logits.len() {
        return Err(NumericsError::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    Ok(log_sum_exp(logits) - logits[label])
}

/// Numerically stable softmax.
pub fn softmax_normalize(v: &[f64]) -> DistributionVector {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    DistributionVector(out)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, NumericsError> {
    if a.len() != b.len() {
        return Err(NumericsError::LengthMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(NumericsError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

//! The learnable encoder `f^E` and its heads: the label classifier `f^H`, the
//! embodiment projection `f^P`, the intervened projection `f^I_j`, and the
//! auxiliary expert-label head used by the CLGL-D baseline.

mod batch;
mod checkpoint;
mod intervention;

pub use batch::Batch;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use intervention::{
    default_types, sample_plans, InterventionPlan, InterventionType, ReplacementSource, SourceRow,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graphs::{GraphError, GraphSample, MorphologyClass, FEATURE_WIDTH, NUM_CLASSES};
use crate::numerics::{DistributionVector, NumericsError, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("graph {0} has an empty embodiment")]
    EmptyEmbodiment(usize),
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    LocalExtremum,
    MeanAggregate,
}

impl LayerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "local-extremum" => Some(Self::LocalExtremum),
            "mean-aggregate" => Some(Self::MeanAggregate),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LocalExtremum => "local-extremum",
            Self::MeanAggregate => "mean-aggregate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Layer widths; `widths[0]` is the node feature width.
    pub widths: Vec<usize>,
    pub kind: LayerKind,
    /// Layer whose embodiment rows feed `f^P` (0 = raw features).
    pub m: usize,
    pub num_label_classes: usize,
    pub num_factor_classes: usize,
    pub projection_hidden: usize,
    /// Divide the local-extremum neighbour sum by the degree.
    pub degree_normalize: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            widths: vec![FEATURE_WIDTH, 32, 32, 32],
            kind: LayerKind::LocalExtremum,
            m: 2,
            num_label_classes: NUM_CLASSES,
            num_factor_classes: MorphologyClass::COUNT,
            projection_hidden: 32,
            degree_normalize: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let fail = |m: String| Err(EncoderError::Config(m));
        if self.widths.len() < 2 {
            return fail("need at least one message-passing layer".into());
        }
        if self.widths[0] != FEATURE_WIDTH {
            return fail(format!(
                "widths[0] = {} but node features have width {FEATURE_WIDTH}",
                self.widths[0]
            ));
        }
        if self.widths.contains(&0) || self.projection_hidden == 0 {
            return fail("zero layer width".into());
        }
        if self.m >= self.widths.len() {
            return fail(format!(
                "m = {} but there are only {} layers",
                self.m,
                self.widths.len()
            ));
        }
        if self.num_label_classes < 2 || self.num_factor_classes < 2 {
            return fail("need at least two classes per head".into());
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len()
    }

    /// Parameter names and shapes in canonical order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for l in 0..self.widths.len() - 1 {
            let shape = vec![self.widths[l], self.widths[l + 1]];
            match self.kind {
                LayerKind::LocalExtremum => {
                    for w in ["w1", "w2", "w3"] {
                        out.push((format!("conv{l}.{w}"), shape.clone()));
                    }
                }
                LayerKind::MeanAggregate => out.push((format!("conv{l}.w"), shape)),
            }
        }
        let last = *self.widths.last().unwrap();
        let tap = self.widths[self.m];
        let (h, f, c) = (
            self.projection_hidden,
            self.num_factor_classes,
            self.num_label_classes,
        );
        out.push(("head.w".into(), vec![last, c]));
        out.push(("head.b".into(), vec![c]));
        out.push(("proj.w1".into(), vec![tap, h]));
        out.push(("proj.b1".into(), vec![h]));
        out.push(("proj.w2".into(), vec![h, f]));
        out.push(("proj.b2".into(), vec![f]));
        out.push(("aux.w".into(), vec![last, f]));
        out.push(("aux.b".into(), vec![f]));
        out
    }
}

/// Named parameter tensors in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Params {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape) in config.parameter_shapes() {
            let tensor = if shape.len() == 2 {
                let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                let data = (0..shape[0] * shape[1])
                    .map(|_| rng.random_range(-a..a))
                    .collect();
                Tensor::new(shape, data)?
            } else {
                Tensor::zeros(&shape)
            };
            names.push(name);
            tensors.push(tensor);
        }
        Ok(Self { names, tensors })
    }

    pub fn from_named(entries: Vec<(String, Tensor)>) -> Self {
        let (names, tensors) = entries.into_iter().unzip();
        Self { names, tensors }
    }

    /// Checks that names and shapes match `config` exactly.
    pub fn check_against(&self, config: &EncoderConfig) -> Result<(), EncoderError> {
        let expected = config.parameter_shapes();
        if expected.len() != self.names.len() {
            return Err(EncoderError::Config(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.names.len()
            )));
        }
        for ((name, shape), (have, t)) in expected.iter().zip(self.iter()) {
            if name != have || shape.as_slice() != t.shape() {
                return Err(EncoderError::Config(format!(
                    "expected {name} {shape:?}, found {have} {:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.position(name).map(|i| &mut self.tensors[i])
    }

    /// sha256 over names, shapes and value bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.iter() {
            h.update(name.as_bytes());
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for &v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Per-layer node matrices; layer 0 is the raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRepresentations {
    pub layers: Vec<Tensor>,
}

impl NodeRepresentations {
    pub fn layer(&self, l: usize) -> &Tensor {
        &self.layers[l]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

/// Parameters bound to a tape as leaves.
#[derive(Debug, Clone)]
pub struct Bound {
    pub vars: Vec<Var>,
    names: Vec<String>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var, EncoderError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.vars[i])
            .ok_or_else(|| EncoderError::MissingParameter(name.into()))
    }
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: EncoderConfig,
    pub params: Params,
}

impl Model {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self, EncoderError> {
        let params = Params::init(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: EncoderConfig, params: Params) -> Result<Self, EncoderError> {
        config.validate()?;
        params.check_against(&config)?;
        Ok(Self { config, params })
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self
                .params
                .tensors
                .iter()
                .map(|t| tape.leaf(t.clone()))
                .collect(),
            names: self.params.names.clone(),
        }
    }

    /// `f^E` on a batch: one variable per layer, layer 0 being the features.
    pub fn encode_vars(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        batch: &Batch,
    ) -> Result<Vec<Var>, EncoderError> {
        let n = batch.num_nodes();
        let mut h = tape.constant(batch.features.clone());
        let mut layers = vec![h];
        let last = self.config.num_layers() - 2;
        for l in 0..=last {
            let out = match self.config.kind {
                LayerKind::LocalExtremum => {
                    let w1 = bound.var(&format!("conv{l}.w1"))?;
                    let w2 = bound.var(&format!("conv{l}.w2"))?;
                    let w3 = bound.var(&format!("conv{l}.w3"))?;
                    let a = tape.matmul(h, w1)?;
                    let b = tape.matmul(h, w2)?;
                    let c = tape.matmul(h, w3)?;
                    if batch.src.is_empty() {
                        a
                    } else {
                        let msgs = tape.gather_rows(c, batch.src.clone())?;
                        let nsum = tape.scatter_add_rows(msgs, batch.dst.clone(), n)?;
                        let (self_factor, nbr_factor): (Vec<f64>, Vec<f64>) =
                            if self.config.degree_normalize {
                                batch
                                    .degree
                                    .iter()
                                    .map(|&d| if d > 0.0 { (1.0, 1.0 / d) } else { (0.0, 0.0) })
                                    .unzip()
                            } else {
                                (batch.degree.clone(), vec![1.0; n])
                            };
                        let b = tape.scale_rows(b, self_factor)?;
                        let nsum = if self.config.degree_normalize {
                            tape.scale_rows(nsum, nbr_factor)?
                        } else {
                            nsum
                        };
                        let ab = tape.add(a, b)?;
                        tape.sub(ab, nsum)?
                    }
                }
                LayerKind::MeanAggregate => {
                    let w = bound.var(&format!("conv{l}.w"))?;
                    let agg = if batch.src.is_empty() {
                        h
                    } else {
                        let msgs = tape.gather_rows(h, batch.src.clone())?;
                        let nsum = tape.scatter_add_rows(msgs, batch.dst.clone(), n)?;
                        let with_self = tape.add(nsum, h)?;
                        let inv: Vec<f64> = batch.degree.iter().map(|d| 1.0 / (d + 1.0)).collect();
                        tape.scale_rows(with_self, inv)?
                    };
                    tape.matmul(agg, w)?
                }
            };
            h = if l < last { tape.relu(out)? } else { out };
            layers.push(h);
        }
        Ok(layers)
    }

    /// Mean of the rows listed per graph: `groups[g]` are row indices of `x`.
    fn segment_mean(tape: &mut Tape, x: Var, groups: &[Vec<usize>]) -> Result<Var, EncoderError> {
        let mut index = Vec::new();
        let mut target = Vec::new();
        let mut inv = Vec::with_capacity(groups.len());
        for (g, rows) in groups.iter().enumerate() {
            if rows.is_empty() {
                return Err(EncoderError::EmptyEmbodiment(g));
            }
            index.extend_from_slice(rows);
            target.extend(std::iter::repeat_n(g, rows.len()));
            inv.push(1.0 / rows.len() as f64);
        }
        let picked = tape.gather_rows(x, index)?;
        let summed = tape.scatter_add_rows(picked, target, groups.len())?;
        Ok(tape.scale_rows(summed, inv)?)
    }

    /// Global mean pool of the last layer, one row per graph.
    pub fn pool_vars(
        &self,
        tape: &mut Tape,
        last: Var,
        batch: &Batch,
    ) -> Result<Var, EncoderError> {
        let mut groups = vec![Vec::new(); batch.num_graphs()];
        for (node, &g) in batch.graph_of.iter().enumerate() {
            groups[g].push(node);
        }
        Self::segment_mean(tape, last, &groups)
    }

    fn affine(
        tape: &mut Tape,
        bound: &Bound,
        x: Var,
        w: &str,
        b: &str,
    ) -> Result<Var, EncoderError> {
        let xw = tape.matmul(x, bound.var(w)?)?;
        Ok(tape.add_row(xw, bound.var(b)?)?)
    }

    /// `f^H` logits, `[graphs × label classes]`.
    pub fn classify_vars(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        pooled: Var,
    ) -> Result<Var, EncoderError> {
        Self::affine(tape, bound, pooled, "head.w", "head.b")
    }

    /// CLGL-D auxiliary logits over the factor classes.
    pub fn aux_vars(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        pooled: Var,
    ) -> Result<Var, EncoderError> {
        Self::affine(tape, bound, pooled, "aux.w", "aux.b")
    }

    fn perceptron(&self, tape: &mut Tape, bound: &Bound, pooled: Var) -> Result<Var, EncoderError> {
        let hidden = Self::affine(tape, bound, pooled, "proj.w1", "proj.b1")?;
        let hidden = tape.relu(hidden)?;
        Self::affine(tape, bound, hidden, "proj.w2", "proj.b2")
    }

    /// `f^P` logits from the layer-`m` embodiment rows.
    pub fn project_vars(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        tap: Var,
        batch: &Batch,
    ) -> Result<Var, EncoderError> {
        let pooled = Self::segment_mean(tape, tap, &batch.embodiment)?;
        self.perceptron(tape, bound, pooled)
    }

    /// `f^I_j` logits: `plans[g]` rewrites graph `g`'s embodiment rows.
    pub fn intervene_vars(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        tap: Var,
        batch: &Batch,
        plans: &[InterventionPlan],
    ) -> Result<Var, EncoderError> {
        let n = batch.num_nodes();
        let mean = tape.mean_rows(tap)?;
        let extended = tape.concat_rows(tap, mean)?;
        let groups: Vec<Vec<usize>> = batch
            .embodiment
            .iter()
            .zip(plans)
            .map(|(emb, plan)| plan.gather_index(emb, n))
            .collect();
        let pooled = Self::segment_mean(tape, extended, &groups)?;
        self.perceptron(tape, bound, pooled)
    }

    /// `f^E` for a single graph.
    pub fn encode(&self, g: &GraphSample) -> Result<NodeRepresentations, EncoderError> {
        let batch = Batch::new(&[g])?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let layers = self.encode_vars(&mut tape, &bound, &batch)?;
        Ok(NodeRepresentations {
            layers: layers.into_iter().map(|v| tape.value(v).clone()).collect(),
        })
    }

    /// `f^H`: logits for one graph's representations.
    pub fn classify(&self, reps: &NodeRepresentations) -> Result<Vec<f64>, EncoderError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let last_layer = reps.layers.last().unwrap();
        let all: Vec<usize> = (0..last_layer.rows()).collect();
        let last = tape.constant(last_layer.clone());
        let pooled = Self::segment_mean(&mut tape, last, &[all])?;
        let logits = self.classify_vars(&mut tape, &bound, pooled)?;
        Ok(tape.value(logits).data().to_vec())
    }

    /// `f^P` for one graph; `embodiment` holds node indices of that graph.
    pub fn project_embodiment(
        &self,
        reps: &NodeRepresentations,
        embodiment: &[usize],
    ) -> Result<DistributionVector, EncoderError> {
        self.intervene_project(
            reps,
            embodiment,
            &InterventionPlan::empty(1, ReplacementSource::SameGraph),
        )
    }

    /// `f^I_j` for one graph; the batch mean is the mean over this graph.
    pub fn intervene_project(
        &self,
        reps: &NodeRepresentations,
        embodiment: &[usize],
        plan: &InterventionPlan,
    ) -> Result<DistributionVector, EncoderError> {
        if embodiment.is_empty() {
            return Err(EncoderError::EmptyEmbodiment(0));
        }
        let layer = &reps.layers[self.config.m];
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let tap = tape.constant(layer.clone());
        let mean = tape.mean_rows(tap)?;
        let extended = tape.concat_rows(tap, mean)?;
        let groups = vec![plan.gather_index(embodiment, layer.rows())];
        let pooled = Self::segment_mean(&mut tape, extended, &groups)?;
        let logits = self.perceptron(&mut tape, &bound, pooled)?;
        let probs = tape.softmax_rows(logits)?;
        Ok(DistributionVector::new(tape.value(probs).data().to_vec())?)
    }

    /// Predicted labels for a batch (only `f^E` and `f^H` are used).
    pub fn predict(&self, batch: &Batch) -> Result<Vec<usize>, EncoderError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let layers = self.encode_vars(&mut tape, &bound, batch)?;
        let pooled = self.pool_vars(&mut tape, *layers.last().unwrap(), batch)?;
        let logits = self.classify_vars(&mut tape, &bound, pooled)?;
        let v = tape.value(logits);
        Ok((0..v.rows())
            .map(|r| crate::numerics::argmax(v.row(r)))
            .collect())
    }
}

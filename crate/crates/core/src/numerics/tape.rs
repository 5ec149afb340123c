//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation applied through a [`Tape`] is evaluated eagerly and
//! appended to the record together with its output. [`Tape::backward`]
//! walks the record in reverse and accumulates Jacobian-transpose products
//! into every node that contributed to the seeded output.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{gemm, Tensor};
use super::NumericsError;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    index: usize,
    tape: u64,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    ScaleRows(usize, Vec<f64>),
    Ln(usize),
    Exp(usize),
    Relu(usize),
    Gather(usize, Vec<usize>),
    ScatterAdd(usize, Vec<usize>),
    ConcatRows(usize, usize),
    Sum(usize),
    MeanRows(usize),
    Softmax(usize),
    LogSoftmax(usize),
    Kl(usize, Tensor),
    CrossEntropy(usize, Vec<usize>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::ScaleRows(..) => "scale_rows",
            Op::Ln(..) => "ln",
            Op::Exp(..) => "exp",
            Op::Relu(..) => "relu",
            Op::Gather(..) => "gather_rows",
            Op::ScatterAdd(..) => "scatter_add_rows",
            Op::ConcatRows(..) => "concat_rows",
            Op::Sum(..) => "sum",
            Op::MeanRows(..) => "mean_rows",
            Op::Softmax(..) => "softmax_rows",
            Op::LogSoftmax(..) => "log_softmax_rows",
            Op::Kl(..) => "kl_rows",
            Op::CrossEntropy(..) => "cross_entropy_rows",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Computation record: the ordered list of primitives applied so far.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `var`; a zero tensor when `var` did not
    /// influence the seeded output.
    pub fn get(&self, var: Var) -> Tensor {
        assert_eq!(var.tape, self.tape, "variable from a different tape");
        self.grads[var.index]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.index]))
    }

    /// Gradient with respect to `var`, or `None` if nothing flowed into it.
    pub fn try_get(&self, var: Var) -> Option<&Tensor> {
        assert_eq!(var.tape, self.tape, "variable from a different tape");
        self.grads[var.index].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    /// Number of recorded operations.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded value. Handles created before the reset become
    /// stale and are rejected by later calls.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
    }

    /// A differentiable input (parameters, inputs under test).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        assert_eq!(var.tape, self.id, "stale or foreign variable");
        &self.nodes[var.index].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node { op, value });
        Var {
            index,
            tape: self.id,
        }
    }

    fn check(&self, var: Var) -> Result<&Tensor, NumericsError> {
        if var.tape != self.id || var.index >= self.nodes.len() {
            return Err(NumericsError::Usage(
                "variable does not belong to this record (reset or foreign tape)",
            ));
        }
        Ok(&self.nodes[var.index].value)
    }

    fn shape_err(&self, op: &'static str, detail: String) -> NumericsError {
        NumericsError::Shape {
            op_index: self.nodes.len(),
            op,
            detail,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (av, bv) = (self.check(a)?, self.check(b)?);
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.rows() {
            return Err(self.shape_err("matmul", format!("{:?} x {:?}", av.shape(), bv.shape())));
        }
        let (m, n) = (av.rows(), bv.cols());
        let out = gemm(
            av.data(),
            av.rows(),
            av.cols(),
            false,
            bv.data(),
            bv.rows(),
            bv.cols(),
            false,
        );
        Ok(self.push(
            Op::MatMul(a.index, b.index),
            Tensor::from_parts(vec![m, n], out),
        ))
    }

    fn same_shape(&self, name: &'static str, a: Var, b: Var) -> Result<(), NumericsError> {
        let (av, bv) = (self.check(a)?, self.check(b)?);
        if av.shape() != bv.shape() {
            return Err(self.shape_err(name, format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (&self.nodes[a.index].value, &self.nodes[b.index].value);
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_parts(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a.index, b.index), out))
    }

    /// Adds a row vector (`[d]` or `[1, d]`) to every row of an `n×d` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, NumericsError> {
        let (xv, rv) = (self.check(x)?, self.check(row)?);
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(self.shape_err(
                "add_row",
                format!("{:?} + row {:?}", xv.shape(), rv.shape()),
            ));
        }
        let c = xv.cols();
        let mut data = xv.data().to_vec();
        for chunk in data.chunks_mut(c) {
            for (a, b) in chunk.iter_mut().zip(rv.data()) {
                *a += b;
            }
        }
        let out = Tensor::from_parts(xv.shape().to_vec(), data);
        Ok(self.push(Op::AddRow(x.index, row.index), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a.index, b.index), out))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a.index, b.index), out))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, NumericsError> {
        let out = self.check(x)?.map(|v| v * factor);
        Ok(self.push(Op::Scale(x.index, factor), out))
    }

    /// Multiplies row `i` by the constant `factors[i]`.
    pub fn scale_rows(&mut self, x: Var, factors: Vec<f64>) -> Result<Var, NumericsError> {
        let xv = self.check(x)?;
        if factors.len() != xv.rows() {
            return Err(self.shape_err(
                "scale_rows",
                format!("{} factors for {} rows", factors.len(), xv.rows()),
            ));
        }
        let c = xv.cols();
        let mut data = xv.data().to_vec();
        for (chunk, f) in data.chunks_mut(c).zip(&factors) {
            chunk.iter_mut().for_each(|v| *v *= f);
        }
        let out = Tensor::from_parts(xv.shape().to_vec(), data);
        Ok(self.push(Op::ScaleRows(x.index, factors), out))
    }

    pub fn ln(&mut self, x: Var) -> Result<Var, NumericsError> {
        let out = self.check(x)?.map(f64::ln);
        Ok(self.push(Op::Ln(x.index), out))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, NumericsError> {
        let out = self.check(x)?.map(f64::exp);
        Ok(self.push(Op::Exp(x.index), out))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NumericsError> {
        let out = self.check(x)?.map(|v| v.max(0.0));
        Ok(self.push(Op::Relu(x.index), out))
    }

    /// Output row `r` is input row `index[r]`.
    pub fn gather_rows(&mut self, x: Var, index: Vec<usize>) -> Result<Var, NumericsError> {
        let xv = self.check(x)?;
        if index.is_empty() {
            return Err(self.shape_err("gather_rows", "empty index list".into()));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= xv.rows()) {
            return Err(self.shape_err(
                "gather_rows",
                format!("row {bad} out of range for {} rows", xv.rows()),
            ));
        }
        let c = xv.cols();
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in &index {
            data.extend_from_slice(xv.row(i));
        }
        let out = Tensor::from_parts(vec![index.len(), c], data);
        Ok(self.push(Op::Gather(x.index, index), out))
    }

    /// Input row `r` is added into output row `index[r]`; the output has
    /// `out_rows` rows (rows that receive nothing are zero).
    pub fn scatter_add_rows(
        &mut self,
        x: Var,
        index: Vec<usize>,
        out_rows: usize,
    ) -> Result<Var, NumericsError> {
        let xv = self.check(x)?;
        if index.len() != xv.rows() || out_rows == 0 {
            return Err(self.shape_err(
                "scatter_add_rows",
                format!("{} targets for {} rows", index.len(), xv.rows()),
            ));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= out_rows) {
            return Err(self.shape_err(
                "scatter_add_rows",
                format!("target row {bad} out of range for {out_rows} rows"),
            ));
        }
        let c = xv.cols();
        let mut data = vec![0.0; out_rows * c];
        for (r, &t) in index.iter().enumerate() {
            for (o, v) in data[t * c..(t + 1) * c].iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        let out = Tensor::from_parts(vec![out_rows, c], data);
        Ok(self.push(Op::ScatterAdd(x.index, index), out))
    }

    /// Stacks the rows of `b` under the rows of `a`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (av, bv) = (self.check(a)?, self.check(b)?);
        if av.cols() != bv.cols() {
            return Err(self.shape_err(
                "concat_rows",
                format!("{:?} over {:?}", av.shape(), bv.shape()),
            ));
        }
        let mut data = av.data().to_vec();
        data.extend_from_slice(bv.data());
        let out = Tensor::from_parts(vec![av.rows() + bv.rows(), av.cols()], data);
        Ok(self.push(Op::ConcatRows(a.index, b.index), out))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NumericsError> {
        let out = Tensor::scalar(self.check(x)?.sum());
        Ok(self.push(Op::Sum(x.index), out))
    }

    /// Mean over axis 0; the result has shape `[cols]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var, NumericsError> {
        let xv = self.check(x)?;
        let (r, c) = (xv.rows(), xv.cols());
        let mut data = vec![0.0; c];
        for i in 0..r {
            for (o, v) in data.iter_mut().zip(xv.row(i)) {
                *o += v;
            }
        }
        data.iter_mut().for_each(|v| *v /= r as f64);
        Ok(self.push(Op::MeanRows(x.index), Tensor::from_parts(vec![c], data)))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, NumericsError> {
        let xv = self.check(x)?;
        let c = xv.cols();
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(c) {
            softmax_in_place(row);
        }
        let out = Tensor::from_parts(xv.shape().to_vec(), data);
        Ok(self.push(Op::Softmax(x.index), out))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var, NumericsError> {
        let xv = self.check(x)?;
        let c = xv.cols();
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(c) {
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let out = Tensor::from_parts(xv.shape().to_vec(), data);
        Ok(self.push(Op::LogSoftmax(x.index), out))
    }

    /// Mean over rows of `KL(target_r ‖ exp(log_q_r))`, taking the model side
    /// as log-probabilities. The target is a constant.
    pub fn kl_rows(&mut self, log_q: Var, target: Tensor) -> Result<Var, NumericsError> {
        let qv = self.check(log_q)?;
        if qv.rows() != target.rows() || qv.cols() != target.cols() {
            return Err(self.shape_err(
                "kl_rows",
                format!("log_q {:?} vs target {:?}", qv.shape(), target.shape()),
            ));
        }
        let mut total = 0.0;
        for (&p, &lq) in target.data().iter().zip(qv.data()) {
            if p > 0.0 {
                total += p * (p.ln() - lq);
            }
        }
        let out = Tensor::scalar(total / qv.rows() as f64);
        Ok(self.push(Op::Kl(log_q.index, target), out))
    }

    /// Mean over rows of `-log softmax(logits_r)[labels_r]`.
    pub fn cross_entropy_rows(
        &mut self,
        logits: Var,
        labels: Vec<usize>,
    ) -> Result<Var, NumericsError> {
        let lv = self.check(logits)?;
        let c = lv.cols();
        if labels.len() != lv.rows() {
            return Err(self.shape_err(
                "cross_entropy_rows",
                format!("{} labels for {} rows", labels.len(), lv.rows()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(NumericsError::LabelOutOfRange {
                label: bad,
                classes: c,
            });
        }
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = lv.row(r);
            total += log_sum_exp(row) - row[y];
        }
        let out = Tensor::scalar(total / labels.len() as f64);
        Ok(self.push(Op::CrossEntropy(logits.index, labels), out))
    }

    /// Backward pass from a scalar output with seed 1.
    pub fn backward(&self, output: Var) -> Result<Gradients, NumericsError> {
        let shape = self.check(output)?.shape().to_vec();
        self.backward_with_seed(output, Tensor::filled(&shape, 1.0))
    }

    /// Backward pass from `output` seeded with `seed` (same shape as output).
    pub fn backward_with_seed(
        &self,
        output: Var,
        seed: Tensor,
    ) -> Result<Gradients, NumericsError> {
        let out_value = self.check(output)?;
        if out_value.shape() != seed.shape() {
            return Err(NumericsError::Shape {
                op_index: output.index,
                op: "backward",
                detail: format!("seed {:?} vs output {:?}", seed.shape(), out_value.shape()),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.index + 1];
        grads[output.index] = Some(seed);
        for i in (0..=output.index).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            tape: self.id,
            shapes: self
                .nodes
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
            grads,
        })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let da = gemm(
                    g.data(),
                    g.rows(),
                    g.cols(),
                    false,
                    bv.data(),
                    bv.rows(),
                    bv.cols(),
                    true,
                );
                let db = gemm(
                    av.data(),
                    av.rows(),
                    av.cols(),
                    true,
                    g.data(),
                    g.rows(),
                    g.cols(),
                    false,
                );
                accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), da));
                accumulate(grads, *b, Tensor::from_parts(bv.shape().to_vec(), db));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::AddRow(x, row) => {
                accumulate(grads, *x, g.clone());
                let c = g.cols();
                let mut db = vec![0.0; c];
                for chunk in g.data().chunks(c) {
                    for (o, v) in db.iter_mut().zip(chunk) {
                        *o += v;
                    }
                }
                accumulate(
                    grads,
                    *row,
                    Tensor::from_parts(val(*row).shape().to_vec(), db),
                );
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let da = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                let db = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), da));
                accumulate(grads, *b, Tensor::from_parts(bv.shape().to_vec(), db));
            }
            Op::Scale(x, f) => accumulate(grads, *x, g.map(|v| v * f)),
            Op::ScaleRows(x, factors) => {
                let c = g.cols();
                let mut d = g.data().to_vec();
                for (chunk, f) in d.chunks_mut(c).zip(factors) {
                    chunk.iter_mut().for_each(|v| *v *= f);
                }
                accumulate(grads, *x, Tensor::from_parts(g.shape().to_vec(), d));
            }
            Op::Ln(x) => {
                let xv = val(*x);
                let d = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(gv, x)| gv / x)
                    .collect();
                accumulate(grads, *x, Tensor::from_parts(xv.shape().to_vec(), d));
            }
            Op::Exp(x) => {
                let y = &node.value;
                let d = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(gv, y)| gv * y)
                    .collect();
                accumulate(grads, *x, Tensor::from_parts(y.shape().to_vec(), d));
            }
            Op::Relu(x) => {
                let xv = val(*x);
                let d = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(gv, &x)| if x > 0.0 { *gv } else { 0.0 })
                    .collect();
                accumulate(grads, *x, Tensor::from_parts(xv.shape().to_vec(), d));
            }
            Op::Gather(x, index) => {
                let xv = val(*x);
                let c = xv.cols();
                let mut d = vec![0.0; xv.len()];
                for (r, &src) in index.iter().enumerate() {
                    for (o, v) in d[src * c..(src + 1) * c].iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, *x, Tensor::from_parts(xv.shape().to_vec(), d));
            }
            Op::ScatterAdd(x, index) => {
                let xv = val(*x);
                let c = xv.cols();
                let mut d = Vec::with_capacity(xv.len());
                for &t in index {
                    d.extend_from_slice(&g.data()[t * c..(t + 1) * c]);
                }
                accumulate(grads, *x, Tensor::from_parts(xv.shape().to_vec(), d));
            }
            Op::ConcatRows(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let split = av.len();
                let da = g.data()[..split].to_vec();
                let db = g.data()[split..].to_vec();
                accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), da));
                accumulate(grads, *b, Tensor::from_parts(bv.shape().to_vec(), db));
            }
            Op::Sum(x) => {
                let xv = val(*x);
                accumulate(grads, *x, Tensor::filled(xv.shape(), g.data()[0]));
            }
            Op::MeanRows(x) => {
                let xv = val(*x);
                let r = xv.rows() as f64;
                let mut d = Vec::with_capacity(xv.len());
                for _ in 0..xv.rows() {
                    d.extend(g.data().iter().map(|v| v / r));
                }
                accumulate(grads, *x, Tensor::from_parts(xv.shape().to_vec(), d));
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let c = y.cols();
                let mut d = vec![0.0; y.len()];
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for k in 0..c {
                        d[r * c + k] = yr[k] * (gr[k] - dot);
                    }
                }
                accumulate(grads, *x, Tensor::from_parts(y.shape().to_vec(), d));
            }
            Op::LogSoftmax(x) => {
                let y = &node.value;
                let c = y.cols();
                let mut d = vec![0.0; y.len()];
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let gsum: f64 = gr.iter().sum();
                    for k in 0..c {
                        d[r * c + k] = gr[k] - yr[k].exp() * gsum;
                    }
                }
                accumulate(grads, *x, Tensor::from_parts(y.shape().to_vec(), d));
            }
            Op::Kl(log_q, target) => {
                let qv = val(*log_q);
                let scale = g.data()[0] / qv.rows() as f64;
                let d = target.data().iter().map(|p| -p * scale).collect();
                accumulate(grads, *log_q, Tensor::from_parts(qv.shape().to_vec(), d));
            }
            Op::CrossEntropy(logits, labels) => {
                let lv = val(*logits);
                let c = lv.cols();
                let scale = g.data()[0] / labels.len() as f64;
                let mut d = lv.data().to_vec();
                for (r, &y) in labels.iter().enumerate() {
                    let row = &mut d[r * c..(r + 1) * c];
                    softmax_in_place(row);
                    row[y] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                accumulate(grads, *logits, Tensor::from_parts(lv.shape().to_vec(), d));
            }
        }
    }

    /// Name of the primitive recorded at `index` (diagnostics).
    pub fn op_name(&self, index: usize) -> Option<&'static str> {
        self.nodes.get(index).map(|n| n.op.name())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], index: usize, g: Tensor) {
    match &mut grads[index] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_record_returns_input() {
        let mut tape = Tape::new();
        let x = tape.leaf(m(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        assert_eq!(tape.value(x).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn sum_of_squares_and_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        assert_eq!(tape.value(s).data(), &[5.0]);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).data(), &[2.0, 4.0]);
    }

    #[test]
    fn mean_over_axis_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(m(&[vec![2.0, 4.0], vec![6.0, 8.0]]));
        let mean = tape.mean_rows(x).unwrap();
        assert_eq!(tape.value(mean).data(), &[4.0, 6.0]);
    }

    #[test]
    fn gradient_of_constant_output_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let c = tape.constant(Tensor::vector(vec![3.0, 4.0]));
        let s = tape.sum(c).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).data(), &[0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_reports_operation_index() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        let _ = tape.add(a, b).unwrap();
        match tape.matmul(a, b) {
            Err(NumericsError::Shape { op_index, op, .. }) => {
                assert_eq!(op_index, 3);
                assert_eq!(op, "matmul");
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn stale_variable_is_a_usage_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        tape.reset();
        assert!(matches!(tape.backward(x), Err(NumericsError::Usage(_))));
    }

    #[test]
    fn replay_is_bitwise_identical() {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.leaf(m(&[vec![0.3, -1.2, 2.5], vec![1.1, 0.7, -0.4]]));
            let w = tape.leaf(m(&[vec![0.2, -0.5], vec![1.5, 0.1], vec![-0.3, 0.9]]));
            let h = tape.matmul(x, w).unwrap();
            let ls = tape.log_softmax_rows(h).unwrap();
            let loss = tape.cross_entropy_rows(ls, vec![0, 1]).unwrap();
            let g = tape.backward(loss).unwrap();
            (tape.value(loss).clone(), g.get(w))
        };
        assert_eq!(run(), run());
    }
}

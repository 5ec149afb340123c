//! Random compositions of tape operations, checked against central
//! finite differences.

use clgl_core::numerics::{NumericsError, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const RELATIVE_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
pub const ABSOLUTE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub enum Step {
    MatMul,
    Add,
    Mul,
    AddRow,
    Scale(f64),
    ScaleRows(Vec<f64>),
    Relu,
    Exp,
    Softmax,
    LogSoftmax,
    Gather(Vec<usize>),
    Concat,
    ScatterAdd(Vec<usize>, usize),
}

#[derive(Debug, Clone)]
pub enum Head {
    Sum,
    MeanRowsSum,
    SumSquares,
    Kl(Tensor),
    CrossEntropy(Vec<usize>),
}

/// A random program: `leaves[0]` is the input, each binary step consumes
/// the next leaf.
#[derive(Debug, Clone)]
pub struct Record {
    pub steps: Vec<Step>,
    pub head: Head,
    pub leaves: Vec<Tensor>,
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

impl Record {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut r, mut c) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let mut leaves = vec![random_tensor(&mut rng, r, c)];
        let mut steps = Vec::new();
        for _ in 0..rng.random_range(2..=6) {
            let step = match rng.random_range(0..13) {
                0 => {
                    let out = rng.random_range(1..=4);
                    leaves.push(random_tensor(&mut rng, c, out));
                    c = out;
                    Step::MatMul
                }
                1 => {
                    leaves.push(random_tensor(&mut rng, r, c));
                    Step::Add
                }
                2 => {
                    leaves.push(random_tensor(&mut rng, r, c));
                    Step::Mul
                }
                3 => {
                    leaves.push(random_tensor(&mut rng, 1, c).reshape(vec![c]).unwrap());
                    Step::AddRow
                }
                4 => Step::Scale(rng.random_range(-2.0..2.0)),
                5 => Step::ScaleRows((0..r).map(|_| rng.random_range(-2.0..2.0)).collect()),
                6 => Step::Relu,
                7 => Step::Exp,
                8 => Step::Softmax,
                9 => Step::LogSoftmax,
                10 => {
                    let n = rng.random_range(1..=4);
                    let idx = (0..n).map(|_| rng.random_range(0..r)).collect();
                    r = n;
                    Step::Gather(idx)
                }
                11 => {
                    let extra = rng.random_range(1..=3);
                    leaves.push(random_tensor(&mut rng, extra, c));
                    r += extra;
                    Step::Concat
                }
                _ => {
                    let out = rng.random_range(1..=4);
                    let idx = (0..r).map(|_| rng.random_range(0..out)).collect();
                    r = out;
                    Step::ScatterAdd(idx, out)
                }
            };
            steps.push(step);
        }
        let head = match rng.random_range(0..5) {
            0 => Head::Sum,
            1 => Head::MeanRowsSum,
            2 => Head::SumSquares,
            3 => {
                let mut t = Vec::with_capacity(r * c);
                for _ in 0..r {
                    let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.1..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    t.extend(raw.iter().map(|v| v / s));
                }
                Head::Kl(Tensor::new(vec![r, c], t).unwrap())
            }
            _ => Head::CrossEntropy((0..r).map(|_| rng.random_range(0..c)).collect()),
        };
        Record {
            steps,
            head,
            leaves,
        }
    }

    /// Builds the program on a fresh tape; returns the leaf variables and
    /// the scalar output.
    pub fn build(&self, leaves: &[Tensor]) -> Result<(Tape, Vec<Var>, Var), NumericsError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone())).collect();
        let mut next = 1;
        let mut take = || {
            next += 1;
            vars[next - 1]
        };
        let mut x = vars[0];
        for step in &self.steps {
            x = match step {
                Step::MatMul => tape.matmul(x, take())?,
                Step::Add => tape.add(x, take())?,
                Step::Mul => tape.mul(x, take())?,
                Step::AddRow => tape.add_row(x, take())?,
                Step::Scale(f) => tape.scale(x, *f)?,
                Step::ScaleRows(f) => tape.scale_rows(x, f.clone())?,
                Step::Relu => tape.relu(x)?,
                Step::Exp => {
                    let damped = tape.scale(x, 0.5)?;
                    tape.exp(damped)?
                }
                Step::Softmax => tape.softmax_rows(x)?,
                Step::LogSoftmax => tape.log_softmax_rows(x)?,
                Step::Gather(idx) => tape.gather_rows(x, idx.clone())?,
                Step::Concat => tape.concat_rows(x, take())?,
                Step::ScatterAdd(idx, out) => tape.scatter_add_rows(x, idx.clone(), *out)?,
            };
        }
        let out = match &self.head {
            Head::Sum => tape.sum(x)?,
            Head::MeanRowsSum => {
                let m = tape.mean_rows(x)?;
                tape.sum(m)?
            }
            Head::SumSquares => {
                let sq = tape.mul(x, x)?;
                tape.sum(sq)?
            }
            Head::Kl(target) => {
                let lq = tape.log_softmax_rows(x)?;
                tape.kl_rows(lq, target.clone())?
            }
            Head::CrossEntropy(labels) => tape.cross_entropy_rows(x, labels.clone())?,
        };
        Ok((tape, vars, out))
    }

    fn output(&self, leaves: &[Tensor]) -> f64 {
        let (tape, _, out) = self.build(leaves).unwrap();
        tape.value(out).data()[0]
    }

    /// Largest violation of the tolerance over every leaf entry, as a
    /// multiple of the tolerance (at most 1 means the record passes).
    pub fn worst_violation(&self) -> f64 {
        let (tape, vars, out) = self.build(&self.leaves).unwrap();
        let grads = tape.backward(out).unwrap();
        let mut worst: f64 = 0.0;
        for (k, var) in vars.iter().enumerate() {
            let analytic = grads.get(*var);
            for i in 0..self.leaves[k].len() {
                let mut plus = self.leaves.clone();
                plus[k].data_mut()[i] += FD_STEP;
                let mut minus = self.leaves.clone();
                minus[k].data_mut()[i] -= FD_STEP;
                let numeric = (self.output(&plus) - self.output(&minus)) / (2.0 * FD_STEP);
                let a = analytic.data()[i];
                let scale = a.abs().max(numeric.abs()).max(ABSOLUTE_FLOOR);
                worst = worst.max((a - numeric).abs() / scale / RELATIVE_TOLERANCE);
            }
        }
        worst
    }
}

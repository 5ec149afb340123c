use crate::encoder::Params;
use crate::numerics::Tensor;

use super::{ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};

/// Adaptive-moment optimizer with a step counter per parameter, so that heads
/// which receive no gradient on a step keep their bias correction in sync
/// with their own update count.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: Vec<u64>,
}

impl Adam {
    pub fn new(params: &Params, learning_rate: f64) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        Self {
            learning_rate,
            m: zeros.clone(),
            v: zeros,
            t: vec![0; params.len()],
        }
    }

    /// Applies one update; `None` entries are left untouched.
    pub fn step(&mut self, params: &mut Params, grads: &[Option<&Tensor>]) {
        for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            self.t[i] += 1;
            let t = self.t[i] as i32;
            let c1 = 1.0 - ADAM_BETA1.powi(t);
            let c2 = 1.0 - ADAM_BETA2.powi(t);
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (k, (w, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * gk;
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * gk * gk;
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                *w -= self.learning_rate * mhat / (vhat.sqrt() + ADAM_EPSILON);
            }
        }
    }

    pub fn steps(&self) -> &[u64] {
        &self.t
    }
}

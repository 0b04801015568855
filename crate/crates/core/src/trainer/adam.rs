use hsisr_tensor::{Gradients, Tensor};

use super::AdamConfig;
use crate::models::{Bound, NetworkWeights};

/// First and second moments, shaped like the weights they follow.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: NetworkWeights,
    pub v: NetworkWeights,
    pub t: u64,
}

fn zeros_like(w: &NetworkWeights) -> NetworkWeights {
    let mut z = w.clone();
    for p in z.params.iter_mut() {
        p.tensor = Tensor::zeros(p.tensor.shape());
    }
    z
}

impl Adam {
    pub fn new(w: &NetworkWeights) -> Self {
        Self {
            m: zeros_like(w),
            v: zeros_like(w),
            t: 0,
        }
    }

    /// One bias-corrected update of every trainable parameter that
    /// received a gradient. Parameters without one are left untouched and
    /// keep their moments.
    pub fn step(&mut self, w: &mut NetworkWeights, bound: &Bound, grads: &Gradients, c: &AdamConfig) {
        self.t += 1;
        let b1t = 1.0 - c.beta1.powi(self.t as i32);
        let b2t = 1.0 - c.beta2.powi(self.t as i32);
        for (i, p) in w.params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let Some(g) = grads.get(bound.vars[i]) else {
                continue;
            };
            let m = self.m.params[i].tensor.data_mut();
            let v = self.v.params[i].tensor.data_mut();
            let x = p.tensor.data_mut();
            for k in 0..x.len() {
                let gk = g.data()[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
                x[k] -= c.lr * (m[k] / b1t) / ((v[k] / b2t).sqrt() + c.eps);
            }
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

/// First-order optimisers over a flat parameter buffer.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f32) {
        match self {
            Optimizer::Sgd(o) => o.step(params, grads, lr),
            Optimizer::Adam(o) => o.step(params, grads, lr),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

/// SGD with heavy-ball momentum and L2 weight decay (PyTorch update order).
#[derive(Clone, Debug)]
pub struct Sgd {
    momentum: f32,
    weight_decay: f32,
    velocity: Vec<f32>,
}

impl Sgd {
    pub fn new(len: usize, momentum: f32, weight_decay: f32) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f32) {
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            let d = g + self.weight_decay * *p;
            *v = self.momentum * *v + d;
            *p -= lr * *v;
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f32,
    beta2: f32,
    eps: f32,
    weight_decay: f32,
    t: i32,
    m: Vec<f32>,
    v: Vec<f32>,
}

impl Adam {
    pub fn new(len: usize, weight_decay: f32) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn with_betas(mut self, beta1: f32, beta2: f32) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f32) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let d = g + self.weight_decay * *p;
            *m = self.beta1 * *m + (1.0 - self.beta1) * d;
            *v = self.beta2 * *v + (1.0 - self.beta2) * d * d;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_minimise_a_quadratic() {
        for mut opt in [
            Optimizer::Sgd(Sgd::new(2, 0.9, 0.0)),
            Optimizer::Adam(Adam::new(2, 0.0)),
        ] {
            let mut p = vec![3.0f32, -2.0];
            for _ in 0..2000 {
                let g: Vec<f32> = p.iter().map(|v| 2.0 * v).collect();
                opt.step(&mut p, &g, 1e-2);
            }
            assert!(p.iter().all(|v| v.abs() < 1e-2), "{p:?}");
        }
    }

    #[test]
    fn sgd_first_step_is_plain_gradient_step() {
        let mut opt = Sgd::new(1, 0.9, 0.5);
        let mut p = vec![2.0f32];
        opt.step(&mut p, &[1.0], 0.1);
        // g + wd * p = 2.0
        assert!((p[0] - 1.8).abs() < 1e-6);
    }
}

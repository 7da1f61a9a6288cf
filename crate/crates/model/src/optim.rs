use serde::{Deserialize, Serialize};

use crate::elem::Elem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<E> {
    pub cfg: AdamConfig,
    m: Vec<E>,
    v: Vec<E>,
    t: u64,
}

impl<E: Elem> Adam<E> {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        Adam { cfg, m: vec![E::zero(); n], v: vec![E::zero(); n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [E], grads: &[E], lr: f64) {
        assert!(params.len() == self.m.len() && grads.len() == self.m.len(), "optimizer size");
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let step = E::lit(lr / c1);
        let inv_c2 = E::lit(1.0 / c2);
        let (eb1, eb2) = (E::lit(b1), E::lit(b2));
        let (ob1, ob2) = (E::lit(1.0 - b1), E::lit(1.0 - b2));
        let eps = E::lit(self.cfg.eps);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = eb1 * self.m[i] + ob1 * g;
            self.v[i] = eb2 * self.v[i] + ob2 * g * g;
            params[i] = params[i] - step * self.m[i] / ((self.v[i] * inv_c2).sqrt() + eps);
        }
    }
}

/// Scales `grads` so its Euclidean norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_grad_norm<E: Elem>(grads: &mut [E], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = E::lit(max_norm / norm);
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

use serde::{Deserialize, Serialize};

use super::params::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Adam {
    pub fn new() -> Self {
        Adam::default()
    }

    /// One bias-corrected update of every trainable tensor from its accumulated gradient.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        if self.m.is_empty() {
            self.m = store.iter().map(|p| vec![0.0; p.value.data.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            for (((w, g), m), v) in p.value.data.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *w -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap());
        s.add_buffer("running", Tensor::full(&[2], 7.0));
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = store();
        for p in s.iter_mut() {
            p.grad.iter_mut().for_each(|g| *g = 1.0);
        }
        let before = s.clone();
        let mut adam = Adam::new();
        adam.step(&mut s, 0.005);
        let (a, b) = (before.iter().next().unwrap(), s.iter().next().unwrap());
        for (x, y) in a.value.data.iter().zip(&b.value.data) {
            assert!((y - x + 0.005).abs() < 1e-6);
        }
        assert_eq!(s.iter().nth(1).unwrap().value.data, vec![7.0, 7.0]);
    }

    #[test]
    fn zero_grad_no_move() {
        let mut s = store();
        let before = s.clone();
        let mut adam = Adam::new();
        adam.step(&mut s, 0.1);
        adam.step(&mut s, 0.1);
        assert_eq!(s, before);
        assert_eq!(adam.step, 2);
    }
}

//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self { learning_rate: 2e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

impl AdamW {
    pub fn step(&self, params: &mut [f64], grad: &[f64], state: &mut AdamState) {
        assert_eq!(params.len(), grad.len(), "gradient length");
        assert_eq!(params.len(), state.m.len(), "optimizer state length");
        state.t += 1;
        let t = state.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.learning_rate * self.weight_decay;
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p * decay - self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let opt = AdamW { weight_decay: 0.0, ..AdamW::default() };
        let mut p = vec![1.0, -2.0, 3.5];
        let mut s = AdamState::new(3);
        opt.step(&mut p, &[0.0; 3], &mut s);
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn decoupled_decay_scales_parameters() {
        let opt = AdamW { learning_rate: 1e-2, weight_decay: 0.5, ..AdamW::default() };
        let mut p = vec![1.0, -2.0];
        opt.step(&mut p, &[0.0; 2], &mut AdamState::new(2));
        let f = 1.0 - 1e-2 * 0.5;
        assert_eq!(p, vec![f, -2.0 * f]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let opt = AdamW { learning_rate: 0.1, weight_decay: 0.0, ..AdamW::default() };
        let mut p = vec![0.0, 0.0];
        opt.step(&mut p, &[3.0, -0.002], &mut AdamState::new(2));
        assert!((p[0] + 0.1).abs() < 1e-6);
        assert!((p[1] - 0.1).abs() < 1e-4);
    }

    #[test]
    fn converges_on_a_quadratic() {
        // f(x) = (x - 3)^2, minimiser 3.
        let opt = AdamW { learning_rate: 1e-2, weight_decay: 0.0, ..AdamW::default() };
        let mut x = vec![-1.0];
        let mut s = AdamState::new(1);
        let mut steps = 0;
        while (x[0] - 3.0f64).abs() >= 1e-6 && steps < 5000 {
            let g = 2.0 * (x[0] - 3.0);
            opt.step(&mut x, &[g], &mut s);
            steps += 1;
        }
        assert!((x[0] - 3.0).abs() < 1e-6, "x = {} after {steps} steps", x[0]);
    }
}

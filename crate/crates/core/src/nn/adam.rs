use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected adaptive-moment optimiser whose learning rate decays by a
/// fixed factor at each epoch boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub decay: f64,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64, decay: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::Config(format!(
                "learning rate {learning_rate} must be > 0 and decay {decay} in (0, 1]"
            )));
        }
        Ok(Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
            decay,
        })
    }

    /// One descent step on `params` along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Input(format!(
                "optimiser holds {} moments, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let b1t = 1.0 - self.beta1.powf(self.step as f64);
        let b2t = 1.0 - self.beta2.powf(self.step as f64);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / b1t;
            let v_hat = self.v[k] / b2t;
            params[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }

    pub fn end_epoch(&mut self) {
        self.learning_rate *= self.decay;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_size() {
        let mut s = AdamState::new(1, 1e-3, 1.0).unwrap();
        let mut p = [0.0];
        s.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 0.000_999_999_99).abs() < 1e-12, "{}", p[0]);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = AdamState::new(2, 1e-2, 0.9).unwrap();
        let mut p = [1.5, -2.0];
        for _ in 0..100 {
            s.step(&mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, [1.5, -2.0]);
    }

    #[test]
    fn decay_per_epoch() {
        let mut s = AdamState::new(1, 1e-4, 0.9).unwrap();
        let mut p = [0.0];
        s.step(&mut p, &[1.0]).unwrap();
        s.step(&mut p, &[1.0]).unwrap();
        assert_eq!(s.learning_rate, 1e-4);
        s.end_epoch();
        assert!((s.learning_rate - 9e-5).abs() < 1e-20);
    }
}

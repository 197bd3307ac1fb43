use super::HyperParams;
use crate::error::{Error, Result};
use crate::splats::SplatParams;

/// Bias-corrected Adam moments for the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    /// One update with per-role learning rates.
    pub fn step(&mut self, params: &mut SplatParams, grad: &[f64], h: &HyperParams) -> Result<()> {
        let n = params.values.len();
        if grad.len() != n || self.m.len() != n {
            return Err(Error::DimensionMismatch {
                context: "adam step",
                expected: n,
                actual: if grad.len() != n { grad.len() } else { self.m.len() },
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - h.adam_beta1.powi(t);
        let bias2 = 1.0 - h.adam_beta2.powi(t);
        for i in 0..n {
            let g = grad[i];
            self.m[i] = h.adam_beta1 * self.m[i] + (1.0 - h.adam_beta1) * g;
            self.v[i] = h.adam_beta2 * self.v[i] + (1.0 - h.adam_beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params.values[i] -= h.learning_rate(i) * m_hat / (v_hat.sqrt() + h.adam_eps);
        }
        Ok(())
    }
}

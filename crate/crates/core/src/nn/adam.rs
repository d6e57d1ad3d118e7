use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Bias-corrected Adam. Moment buffers are allocated on the first step to
/// match the parameter buffers they are applied to.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<F>>,
    second: Vec<Vec<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, params: &mut [&mut [F]], grads: &[&[F]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                context: "adam parameter groups",
                expected: params.len(),
                actual: grads.len(),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::DimensionMismatch {
                    context: "adam parameter buffer",
                    expected: p.len(),
                    actual: g.len(),
                });
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![F::zero(); p.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::InvalidArgument(
                "parameter layout changed between adam steps".into(),
            ));
        }

        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let b1 = F::from_f64_lossy(c.beta1);
        let b2 = F::from_f64_lossy(c.beta2);
        let lr = F::from_f64_lossy(c.learning_rate);
        let eps = F::from_f64_lossy(c.epsilon);
        let correction1 = F::from_f64_lossy(1.0 - c.beta1.powi(t));
        let correction2 = F::from_f64_lossy(1.0 - c.beta2.powi(t));
        let one = F::one();

        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    MeanAbsoluteError,
}

/// Architecture of a feed-forward projection network.
///
/// `layer_widths` lists the input width, every hidden width and the output
/// width. `activations` has one entry per dense layer; `batch_norm` and
/// `dropout` have one entry per hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub batch_norm: Vec<bool>,
    pub dropout: Vec<f64>,
    pub loss: Loss,
    /// Decay applied to the running batch-norm statistics.
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

pub const DEFAULT_HIDDEN: [usize; 3] = [320, 256, 352];
pub const DEFAULT_DROPOUT: f64 = 0.25;

impl NetworkSpec {
    /// The tuned architecture: hidden widths 320/256/352, batch norm and
    /// dropout 0.25 after every hidden layer, linear 2-D output.
    pub fn tuned(input_width: usize) -> Self {
        Self::new(input_width, &DEFAULT_HIDDEN, true, DEFAULT_DROPOUT)
    }

    pub fn new(input_width: usize, hidden: &[usize], batch_norm: bool, dropout: f64) -> Self {
        let mut layer_widths = Vec::with_capacity(hidden.len() + 2);
        layer_widths.push(input_width);
        layer_widths.extend_from_slice(hidden);
        layer_widths.push(2);
        let mut activations = vec![Activation::Relu; hidden.len()];
        activations.push(Activation::Identity);
        Self {
            layer_widths,
            activations,
            batch_norm: vec![batch_norm; hidden.len()],
            dropout: vec![dropout; hidden.len()],
            loss: Loss::MeanAbsoluteError,
            bn_momentum: 0.99,
            bn_epsilon: 1e-3,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated spec has layers")
    }

    pub fn hidden_count(&self) -> usize {
        self.layer_widths.len().saturating_sub(2)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.layer_widths.len();
        if n < 2 {
            return Err(Error::InvalidConfig(
                "a network needs at least an input and an output width".into(),
            ));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if self.output_width() != 2 {
            return Err(Error::InvalidConfig(format!(
                "output width must be 2, got {}",
                self.output_width()
            )));
        }
        let hidden = n - 2;
        if self.activations.len() != n - 1 {
            return Err(Error::InvalidConfig(format!(
                "expected {} activations, got {}",
                n - 1,
                self.activations.len()
            )));
        }
        if self.batch_norm.len() != hidden || self.dropout.len() != hidden {
            return Err(Error::InvalidConfig(format!(
                "expected {hidden} batch-norm and dropout entries"
            )));
        }
        if let Some(p) = self.dropout.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(Error::InvalidConfig(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || self.bn_epsilon <= 0.0 {
            return Err(Error::InvalidConfig(
                "batch-norm momentum must be in [0, 1) and epsilon positive".into(),
            ));
        }
        Ok(())
    }

    /// Total number of trainable parameters.
    pub fn parameter_count(&self) -> usize {
        let mut total = 0;
        for (l, pair) in self.layer_widths.windows(2).enumerate() {
            total += pair[0] * pair[1] + pair[1];
            if l < self.hidden_count() && self.batch_norm[l] {
                total += 2 * pair[1];
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuned_spec_matches_reported_architecture() {
        let spec = NetworkSpec::tuned(11);
        assert_eq!(spec.layer_widths, vec![11, 320, 256, 352, 2]);
        assert!(spec.batch_norm.iter().all(|&b| b));
        assert!(spec.dropout.iter().all(|&p| p == 0.25));
        assert_eq!(spec.activations.last(), Some(&Activation::Identity));
        spec.validate().unwrap();
    }

    #[test]
    fn output_width_must_be_two() {
        let mut spec = NetworkSpec::new(3, &[4], false, 0.0);
        *spec.layer_widths.last_mut().unwrap() = 3;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn dropout_of_one_is_rejected() {
        let spec = NetworkSpec::new(3, &[4], false, 1.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn parameter_count_includes_batch_norm() {
        let spec = NetworkSpec::new(2, &[3], true, 0.0);
        // 2*3+3 + 2*3 (gamma, beta) + 3*2+2
        assert_eq!(spec.parameter_count(), 9 + 6 + 8);
    }
}

//! Plain stochastic gradient descent with L2 weight decay.

use serde::{Deserialize, Serialize};

/// Optimizer settings. No momentum and no schedule: the update rule is
/// `p <- p - lr * (g + weight_decay * p)`, applied uniformly to every
/// trainable parameter. `seed` drives parameter initialization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f32,
    pub weight_decay: f32,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            weight_decay: 0.0001,
            seed: 0,
        }
    }
}

impl SgdConfig {
    /// A zero learning rate is allowed: it freezes the parameters, which
    /// reproducibility fixtures rely on.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate >= 0.0) {
            return Err(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.weight_decay < 0.0 {
            return Err(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        Ok(())
    }
}

/// One SGD update on a flat parameter slice.
pub fn sgd_step(params: &mut [f32], grads: &[f32], cfg: &SgdConfig) {
    debug_assert_eq!(params.len(), grads.len());
    let lr = cfg.learning_rate;
    let wd = cfg.weight_decay;
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * (g + wd * *p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_step() {
        let mut p = [1.0f32];
        sgd_step(
            &mut p,
            &[1.0],
            &SgdConfig {
                learning_rate: 0.1,
                weight_decay: 0.0,
                seed: 0,
            },
        );
        assert_eq!(p[0], 0.9);
    }

    #[test]
    fn decay_only_step() {
        let mut p = [1.0f32];
        sgd_step(
            &mut p,
            &[0.0],
            &SgdConfig {
                learning_rate: 0.1,
                weight_decay: 0.0001,
                seed: 0,
            },
        );
        assert!((p[0] - 0.99999).abs() < 1e-7);
    }

    #[test]
    fn paper_defaults() {
        let cfg = SgdConfig::default();
        assert_eq!(cfg.learning_rate, 0.01);
        assert_eq!(cfg.weight_decay, 0.0001);
    }
}

//! Sequential layer stack with cached intermediates for backprop.

use rand_chacha::ChaCha8Rng;

use super::{Layer, LayerSpec, Mode, NnError, Tensor};

/// A sequence of layers applied in order. `forward` retains per-layer caches
/// so that a following `backward` can run; mutating passes therefore require
/// exclusive access (independent stacks may run on separate threads).
#[derive(Debug, Clone)]
pub struct Stack {
    pub layers: Vec<Layer>,
}

impl Stack {
    pub fn from_specs(specs: &[LayerSpec]) -> Self {
        Stack {
            layers: specs.iter().map(|s| Layer::new(*s)).collect(),
        }
    }

    pub fn init_params(&mut self, rng: &mut ChaCha8Rng) {
        for layer in &mut self.layers {
            layer.init_params(rng);
        }
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x, mode)?;
        }
        Ok(x)
    }

    /// Backward through the whole stack; returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grads();
        }
    }

    pub fn clear_caches(&mut self) {
        for layer in &mut self.layers {
            layer.clear_cache();
        }
    }

    /// Number of trainable parameter values.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.is_trainable())
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }
}

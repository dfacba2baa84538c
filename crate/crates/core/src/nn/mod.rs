//! Minimal deterministic differentiable core.
//!
//! Five layer kinds (conv2d, batch-norm, ReLU, max-pool, linear) with
//! hand-coded forward/backward passes, sigmoid, parameter initialization,
//! and plain SGD with weight decay. Convolutions are valid (unpadded)
//! throughout: padding would break the exact receptive-field accounting the
//! architecture layer relies on.

mod checkpoint;
pub mod gradcheck;
mod layer;
mod sgd;
mod stack;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointData, CheckpointMeta};
pub use layer::{sigmoid, sigmoid_backward, Layer};
pub use sgd::{sgd_step, SgdConfig};
pub use stack::Stack;
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Execution mode. Batch-norm uses batch statistics in `Train` and running
/// statistics in `Eval`; running statistics are only updated in `Train`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("backward called without a preceding forward pass in train state")]
    NoForwardState,
    #[error("numerical domain error: {0}")]
    NumericalDomain(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The five layer kinds of the core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv2d,
    BatchNorm,
    ReLU,
    MaxPool,
    Linear,
}

impl LayerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::ReLU => "relu",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Linear => "linear",
        }
    }
}

/// Declarative layer description. `kernel`/`stride` apply to conv and pool;
/// `in_channels`/`out_channels` to conv and linear (features for linear).
/// Kernel-1 stride-1 is used for the kinds where the fields are meaningless,
/// which keeps receptive-field folds uniform over any layer list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl LayerSpec {
    pub fn conv(kernel: usize, stride: usize, in_channels: usize, out_channels: usize) -> Self {
        assert!(kernel >= 1 && stride >= 1, "conv kernel/stride must be >= 1");
        LayerSpec {
            kind: LayerKind::Conv2d,
            kernel,
            stride,
            in_channels,
            out_channels,
        }
    }

    pub fn batch_norm(channels: usize) -> Self {
        LayerSpec {
            kind: LayerKind::BatchNorm,
            kernel: 1,
            stride: 1,
            in_channels: channels,
            out_channels: channels,
        }
    }

    pub fn relu() -> Self {
        LayerSpec {
            kind: LayerKind::ReLU,
            kernel: 1,
            stride: 1,
            in_channels: 0,
            out_channels: 0,
        }
    }

    pub fn max_pool(kernel: usize, stride: usize) -> Self {
        assert!(kernel >= 1 && stride >= 1, "pool kernel/stride must be >= 1");
        LayerSpec {
            kind: LayerKind::MaxPool,
            kernel,
            stride,
            in_channels: 0,
            out_channels: 0,
        }
    }

    pub fn linear(in_features: usize, out_features: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Linear,
            kernel: 1,
            stride: 1,
            in_channels: in_features,
            out_channels: out_features,
        }
    }

    /// Short human-readable form used by plan printouts.
    pub fn describe(&self) -> String {
        match self.kind {
            LayerKind::Conv2d => format!(
                "conv{k}x{k}/s{s}({i}->{o})",
                k = self.kernel,
                s = self.stride,
                i = self.in_channels,
                o = self.out_channels
            ),
            LayerKind::BatchNorm => format!("bn({})", self.in_channels),
            LayerKind::ReLU => "relu".to_string(),
            LayerKind::MaxPool => format!("pool{k}x{k}/s{s}", k = self.kernel, s = self.stride),
            LayerKind::Linear => format!("linear({}->{})", self.in_channels, self.out_channels),
        }
    }
}

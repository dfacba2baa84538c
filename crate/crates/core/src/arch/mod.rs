//! Architecture: per-modality encoders, receptive-field-exact branch
//! planning, late-fusion model assembly, and empirical extent verification.

mod model;
mod plan;
mod rf;

pub use model::{assemble, rf_verify, Model};
pub use plan::{
    plan_branch, required_patch_size, ArchConfig, BranchPlan, EncoderLayerCfg, ModalityConfig,
    ModelConfig,
};
pub use rf::rf_symbolic;

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ArchError {
    #[error("no branch plan reaches extent {target} for modality '{modality}' (encoder rf {rf}, jump {jump}): {reason}")]
    Unreachable {
        modality: String,
        target: usize,
        rf: usize,
        jump: usize,
        reason: String,
    },
    #[error("parity violation in modality '{modality}': {detail}")]
    Parity { modality: String, detail: String },
    #[error("invalid architecture config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

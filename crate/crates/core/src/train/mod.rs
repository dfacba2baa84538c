//! Training: the weighted multi-label objective with other-species-as-
//! negatives, deterministic mini-batch assembly with patch extraction, and
//! the epoch loop with checkpointing.

mod batch;
mod loss;
mod trainer;

pub use batch::{make_batches, shuffled_indices, Batch, SkipReport};
pub use loss::{weighted_loss, weighted_loss_and_grad};
pub use trainer::{train, train_with_progress, EpochStats, TrainConfig, TrainOutcome};

use thiserror::Error;

use crate::arch::ArchError;
use crate::geo::GeoError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("numerical domain error: {0}")]
    NumericalDomain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

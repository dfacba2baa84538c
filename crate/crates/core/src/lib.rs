//! Core library for `msdm`: multi-scale, multimodal species distribution
//! modeling at desk scale.
//!
//! The crate is organized around six subsystems:
//!
//! - [`geo`] — georeferenced rasters (GRB1 file format), occurrence tables,
//!   and centered patch extraction.
//! - [`nn`] — a minimal deterministic differentiable core: dense tensors,
//!   conv2d / batch-norm / ReLU / max-pool / linear layers with hand-coded
//!   backward passes, and plain SGD with weight decay.
//! - [`arch`] — receptive-field arithmetic, a branch planner that synthesizes
//!   conv/pool stacks with exact target extents, model assembly with late
//!   fusion, and empirical receptive-field verification.
//! - [`train`] — the weighted multi-label objective, deterministic batch
//!   assembly, and the epoch loop with checkpointing.
//! - [`metrics`] — per-species ROC AUC (rank-based, tie-aware), site-averaged
//!   F1 at a fixed threshold, and Δ-comparison reports.
//! - [`synth`] — synthetic worlds and virtual species with known suitability
//!   windows, for controlled scale-recovery experiments.

pub mod arch;
pub mod geo;
pub mod metrics;
pub mod nn;
pub mod synth;
pub mod train;

pub use arch::{ArchConfig, BranchPlan, ModalityConfig, Model, ModelConfig};
pub use geo::{GeoRaster, GeoTransform, OccurrenceTable, Patch};
pub use metrics::EvalReport;
pub use nn::{LayerKind, LayerSpec, Mode, SgdConfig, Tensor};
pub use train::TrainConfig;

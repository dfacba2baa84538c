//! Declarative architecture configuration and the greedy branch planner.

use serde::{Deserialize, Serialize};

use super::{rf_symbolic, ArchError};
use crate::nn::LayerSpec;

fn one() -> usize {
    1
}
fn default_branch_channels() -> usize {
    256
}
fn default_head_channels() -> usize {
    512
}
fn default_proj_dim() -> usize {
    1024
}

/// One encoder layer in config form. `kind` is `"conv"` or `"pool"`; a
/// batch-norm + ReLU pair is inserted after every convolution when the
/// encoder is materialized.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct EncoderLayerCfg {
    pub kind: String,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub out: usize,
}

/// A modality: which raster feeds it, its shared encoder, and the spatial
/// extents (in input pixels) its branches must realize exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModalityConfig {
    pub name: String,
    pub raster: String,
    pub bands: usize,
    pub pixel_ground_km: f64,
    pub encoder: Vec<EncoderLayerCfg>,
    /// Declared encoder receptive field; verified against the stack.
    pub encoder_rf: usize,
    /// Declared encoder jump (product of encoder strides); verified.
    pub encoder_jump: usize,
    /// Target extents; may be left empty in sweep templates, which fill it
    /// per configuration.
    #[serde(default)]
    pub scales: Vec<usize>,
    #[serde(default = "default_branch_channels")]
    pub branch_channels: usize,
    #[serde(default = "default_head_channels")]
    pub head_channels: usize,
    #[serde(default = "default_proj_dim")]
    pub proj_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchConfig {
    pub seed: u64,
    #[serde(rename = "modality")]
    pub modalities: Vec<ModalityConfig>,
}

/// Architecture plus the resolved species universe size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: ArchConfig,
    pub species_count: usize,
}

/// A planned branch: the layer sequence (with batch-norm and ReLU
/// interleaved) whose symbolic receptive field equals `target_scale`
/// exactly, closing with a 1x1 convolution to `head_channels`. The central
/// pixel of the final map is the branch's feature vector, later projected to
/// `proj_dim`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchPlan {
    pub modality: String,
    pub target_scale: usize,
    pub layers: Vec<LayerSpec>,
    pub proven_rf: usize,
    pub jump: usize,
    pub head_channels: usize,
    pub proj_dim: usize,
}

impl BranchPlan {
    /// Conv/pool layers only, for display.
    pub fn describe(&self) -> String {
        self.layers
            .iter()
            .filter(|l| {
                matches!(
                    l.kind,
                    crate::nn::LayerKind::Conv2d | crate::nn::LayerKind::MaxPool
                )
            })
            .map(|l| l.describe())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl ModalityConfig {
    /// Encoder as concrete layers, batch-norm + ReLU after each conv.
    pub fn encoder_specs(&self) -> Result<Vec<LayerSpec>, ArchError> {
        let mut specs = Vec::new();
        let mut cin = self.bands;
        for (i, l) in self.encoder.iter().enumerate() {
            match l.kind.as_str() {
                "conv" => {
                    if l.out == 0 {
                        return Err(ArchError::Invalid(format!(
                            "modality '{}': encoder layer {i} needs 'out' channels",
                            self.name
                        )));
                    }
                    if l.kernel < 1 || l.stride < 1 {
                        return Err(ArchError::Invalid(format!(
                            "modality '{}': encoder layer {i} kernel/stride must be >= 1",
                            self.name
                        )));
                    }
                    specs.push(LayerSpec::conv(l.kernel, l.stride, cin, l.out));
                    specs.push(LayerSpec::batch_norm(l.out));
                    specs.push(LayerSpec::relu());
                    cin = l.out;
                }
                "pool" => specs.push(LayerSpec::max_pool(l.kernel, l.stride)),
                other => {
                    return Err(ArchError::Invalid(format!(
                        "modality '{}': unknown encoder layer kind '{other}'",
                        self.name
                    )))
                }
            }
        }
        Ok(specs)
    }

    /// Channel count after the encoder.
    pub fn encoder_out_channels(&self) -> usize {
        self.encoder
            .iter()
            .rev()
            .find(|l| l.kind == "conv")
            .map(|l| l.out)
            .unwrap_or(self.bands)
    }

    /// Validate declared rf/jump against the stack and check the scale list
    /// invariants: odd, strictly increasing, reachable under the divisibility
    /// constraint.
    pub fn validate(&self) -> Result<(), ArchError> {
        if self.bands == 0 {
            return Err(ArchError::Invalid(format!(
                "modality '{}': bands must be >= 1",
                self.name
            )));
        }
        if self.scales.is_empty() {
            return Err(ArchError::Invalid(format!(
                "modality '{}': at least one scale is required",
                self.name
            )));
        }
        let specs = self.encoder_specs()?;
        let (rf, jump) = rf_symbolic(&specs, 1, 1);
        if rf != self.encoder_rf || jump != self.encoder_jump {
            return Err(ArchError::Invalid(format!(
                "modality '{}': encoder stack has rf {rf} / jump {jump}, declared {} / {}",
                self.name, self.encoder_rf, self.encoder_jump
            )));
        }
        for pair in self.scales.windows(2) {
            if pair[1] <= pair[0] {
                return Err(ArchError::Invalid(format!(
                    "modality '{}': scales must be strictly increasing",
                    self.name
                )));
            }
        }
        for &s in &self.scales {
            if s % 2 == 0 {
                return Err(ArchError::Parity {
                    modality: self.name.clone(),
                    detail: format!("scale {s} is even; extents must be odd for centered extraction"),
                });
            }
            if s < self.encoder_rf {
                return Err(ArchError::Unreachable {
                    modality: self.name.clone(),
                    target: s,
                    rf: self.encoder_rf,
                    jump: self.encoder_jump,
                    reason: "target is below the encoder receptive field".into(),
                });
            }
            if (s - self.encoder_rf) % self.encoder_jump != 0 {
                return Err(ArchError::Unreachable {
                    modality: self.name.clone(),
                    target: s,
                    rf: self.encoder_rf,
                    jump: self.encoder_jump,
                    reason: format!(
                        "(scale - encoder_rf) = {} is not a multiple of the encoder jump",
                        s - self.encoder_rf
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Patch size a modality needs: the largest spatial extent it considers.
pub fn required_patch_size(modality: &ModalityConfig) -> usize {
    *modality.scales.iter().max().expect("at least one scale")
}

/// Deterministic greedy branch plan.
///
/// Working in units of the current jump, a kernel-3 convolution consumes 2
/// of the remaining extent deficit, a kernel-2 convolution consumes 1, and a
/// kernel-3 stride-2 max-pool consumes 2 then halves what remains. Pools are
/// inserted after every second convolution whenever the post-pool deficit
/// stays integral, which bounds depth for large extents. Every convolution
/// carries batch-norm + ReLU; the plan closes with a 1x1 convolution to
/// `head_channels` (for `target_scale == encoder_rf` that 1x1 is the whole
/// plan).
pub fn plan_branch(
    modality: &str,
    encoder_rf: usize,
    encoder_jump: usize,
    target_scale: usize,
    channels_in: usize,
    branch_channels: usize,
    head_channels: usize,
    proj_dim: usize,
) -> Result<BranchPlan, ArchError> {
    let unreachable = |reason: String| ArchError::Unreachable {
        modality: modality.to_string(),
        target: target_scale,
        rf: encoder_rf,
        jump: encoder_jump,
        reason,
    };
    if target_scale < encoder_rf {
        return Err(unreachable(
            "target is below the encoder receptive field".into(),
        ));
    }
    if (target_scale - encoder_rf) % encoder_jump != 0 {
        return Err(unreachable(format!(
            "(scale - encoder_rf) = {} is not a multiple of the encoder jump",
            target_scale - encoder_rf
        )));
    }

    let mut remaining = (target_scale - encoder_rf) / encoder_jump;
    let mut layers: Vec<LayerSpec> = Vec::new();
    let mut convs_since_pool = 0usize;
    let mut cin = channels_in;
    let push_conv = |layers: &mut Vec<LayerSpec>, cin: &mut usize, kernel: usize| {
        layers.push(LayerSpec::conv(kernel, 1, *cin, branch_channels));
        layers.push(LayerSpec::batch_norm(branch_channels));
        layers.push(LayerSpec::relu());
        *cin = branch_channels;
    };
    while remaining > 0 {
        if convs_since_pool >= 2 && remaining >= 2 && (remaining - 2) % 2 == 0 {
            layers.push(LayerSpec::max_pool(3, 2));
            remaining = (remaining - 2) / 2;
            convs_since_pool = 0;
        } else if remaining >= 2 {
            push_conv(&mut layers, &mut cin, 3);
            remaining -= 2;
            convs_since_pool += 1;
        } else {
            push_conv(&mut layers, &mut cin, 2);
            remaining -= 1;
            convs_since_pool += 1;
        }
    }
    layers.push(LayerSpec::conv(1, 1, cin, head_channels));
    layers.push(LayerSpec::batch_norm(head_channels));
    layers.push(LayerSpec::relu());

    let (proven_rf, jump) = rf_symbolic(&layers, encoder_rf, encoder_jump);
    if proven_rf != target_scale {
        // The greedy rule above consumes the deficit exactly; reaching this
        // arm means the planner itself is broken.
        return Err(unreachable(format!(
            "planner produced rf {proven_rf} instead of {target_scale}"
        )));
    }
    Ok(BranchPlan {
        modality: modality.to_string(),
        target_scale,
        layers,
        proven_rf,
        jump,
        head_channels,
        proj_dim,
    })
}

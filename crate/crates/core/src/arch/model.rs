//! Late-fusion model: shared per-modality encoders, planned branches with
//! central-pixel extraction, 1024-wide projections, concatenation, and the
//! species classifier.
//!
//! Training and inference run each branch on the centered crop of the
//! encoder map that its extent actually depends on ("cone" execution); with
//! valid convolutions and exact tiling this produces bit-identical central
//! features to running the branch over the full map and extracting the
//! center, while skipping the off-center columns. The full-map path is kept
//! for empirical receptive-field verification.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::plan::{plan_branch, required_patch_size, BranchPlan, ModelConfig};
use super::ArchError;
use crate::nn::{
    read_checkpoint, sgd_step, sigmoid, write_checkpoint, CheckpointMeta, Layer, LayerKind,
    LayerSpec, Mode, NnError, SgdConfig, Stack, Tensor,
};

#[derive(Debug, Clone)]
pub struct BranchNet {
    pub plan: BranchPlan,
    /// Planned conv/pool layers ending in the 1x1 head; input is the
    /// (cropped) encoder map, output the `[N, head, m, m]` feature map.
    pub spatial: Stack,
    /// Projection of the central 512-vector: linear to `proj_dim` + ReLU.
    pub projection: Stack,
    /// Side length of the centered encoder-map window the branch depends on.
    pub cone_width: usize,
}

#[derive(Debug, Clone)]
pub struct ModalityNet {
    pub name: String,
    pub patch_size: usize,
    pub bands: usize,
    pub encoder: Stack,
    pub encoder_rf: usize,
    pub encoder_jump: usize,
    /// Encoder output map side for a `patch_size` input.
    pub encoder_map: usize,
    pub branches: Vec<BranchNet>,
}

#[derive(Debug)]
struct ForwardState {
    mode: Mode,
    probs: Tensor,
    enc_shapes: Vec<[usize; 4]>,
    proj_widths: Vec<usize>,
}

/// Assembled runnable network. Forward/backward on one instance is
/// single-threaded (mutable cached intermediates); independent instances may
/// run on separate threads.
#[derive(Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub modalities: Vec<ModalityNet>,
    pub classifier: Stack,
    pub species_count: usize,
    pub seed: u64,
    pub step: u64,
    pub epoch: u64,
    state: Option<ForwardState>,
}

/// Output extent of a layer list applied to `size`, requiring every conv and
/// pool application to tile its input exactly; a remainder would drop
/// columns asymmetrically and break centering.
fn fold_extent(layers: &[LayerSpec], size: usize, what: &str) -> Result<usize, ArchError> {
    let mut n = size;
    for l in layers {
        if l.kernel == 1 && l.stride == 1 {
            continue;
        }
        if n < l.kernel {
            return Err(ArchError::Invalid(format!(
                "{what}: map of {n} is smaller than {}",
                l.describe()
            )));
        }
        if (n - l.kernel) % l.stride != 0 {
            return Err(ArchError::Invalid(format!(
                "{what}: {} does not tile a map of {n} exactly",
                l.describe()
            )));
        }
        n = (n - l.kernel) / l.stride + 1;
    }
    Ok(n)
}

/// Build the runnable model for a validated configuration, initializing all
/// parameters deterministically from `seed`.
pub fn assemble(config: &ModelConfig, seed: u64) -> Result<Model, ArchError> {
    if config.species_count == 0 {
        return Err(ArchError::Invalid("species_count must be >= 1".into()));
    }
    if config.arch.modalities.is_empty() {
        return Err(ArchError::Invalid("at least one modality is required".into()));
    }

    let mut modalities = Vec::new();
    let mut fusion_dim = 0usize;
    for m in &config.arch.modalities {
        m.validate()?;
        let patch_size = required_patch_size(m);
        let enc_specs = m.encoder_specs()?;
        let encoder_map = fold_extent(
            &enc_specs,
            patch_size,
            &format!("modality '{}' encoder on patch {patch_size}", m.name),
        )?;
        if encoder_map % 2 == 0 {
            return Err(ArchError::Parity {
                modality: m.name.clone(),
                detail: format!(
                    "encoder map for patch {patch_size} has even side {encoder_map}; no central pixel"
                ),
            });
        }

        let enc_channels = m.encoder_out_channels();
        let mut branches = Vec::new();
        for &scale in &m.scales {
            let plan = plan_branch(
                &m.name,
                m.encoder_rf,
                m.encoder_jump,
                scale,
                enc_channels,
                m.branch_channels,
                m.head_channels,
                m.proj_dim,
            )?;
            // Window of the encoder map the branch's central feature sees.
            let cone_width = 1 + (scale - m.encoder_rf) / m.encoder_jump;
            if cone_width > encoder_map || (encoder_map - cone_width) % 2 != 0 {
                return Err(ArchError::Parity {
                    modality: m.name.clone(),
                    detail: format!(
                        "branch {scale}: cone width {cone_width} cannot be centered in encoder map {encoder_map}"
                    ),
                });
            }
            let cone_out = fold_extent(
                &plan.layers,
                cone_width,
                &format!("modality '{}' branch {scale} on its cone", m.name),
            )?;
            if cone_out != 1 {
                return Err(ArchError::Parity {
                    modality: m.name.clone(),
                    detail: format!("branch {scale}: cone collapses to {cone_out}, expected 1"),
                });
            }
            let full_out = fold_extent(
                &plan.layers,
                encoder_map,
                &format!("modality '{}' branch {scale} on the full map", m.name),
            )?;
            if full_out % 2 == 0 {
                return Err(ArchError::Parity {
                    modality: m.name.clone(),
                    detail: format!(
                        "branch {scale}: full map side {full_out} is even; no central pixel"
                    ),
                });
            }
            let projection = Stack::from_specs(&[
                LayerSpec::linear(m.head_channels, m.proj_dim),
                LayerSpec::relu(),
            ]);
            fusion_dim += m.proj_dim;
            branches.push(BranchNet {
                spatial: Stack::from_specs(&plan.layers),
                projection,
                cone_width,
                plan,
            });
        }

        modalities.push(ModalityNet {
            name: m.name.clone(),
            patch_size,
            bands: m.bands,
            encoder: Stack::from_specs(&enc_specs),
            encoder_rf: m.encoder_rf,
            encoder_jump: m.encoder_jump,
            encoder_map,
            branches,
        });
    }

    let classifier = Stack::from_specs(&[LayerSpec::linear(fusion_dim, config.species_count)]);

    let mut model = Model {
        config: config.clone(),
        modalities,
        classifier,
        species_count: config.species_count,
        seed,
        step: 0,
        epoch: 0,
        state: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in &mut model.modalities {
        m.encoder.init_params(&mut rng);
        for b in &mut m.branches {
            b.spatial.init_params(&mut rng);
            b.projection.init_params(&mut rng);
        }
    }
    model.classifier.init_params(&mut rng);
    Ok(model)
}

/// Centered spatial crop of a `[N, C, H, W]` tensor to `width` x `width`.
fn center_crop(t: &Tensor, width: usize) -> Tensor {
    let (n, c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]);
    debug_assert!(width <= h && (h - width) % 2 == 0 && h == w);
    if width == h {
        return t.clone();
    }
    let off = (h - width) / 2;
    let mut out = Tensor::zeros(&[n, c, width, width]);
    let src = t.values();
    let dst = out.values_mut();
    for plane in 0..n * c {
        let src_base = plane * h * w;
        let dst_base = plane * width * width;
        for r in 0..width {
            let s = src_base + (off + r) * w + off;
            dst[dst_base + r * width..dst_base + (r + 1) * width]
                .copy_from_slice(&src[s..s + width]);
        }
    }
    out
}

/// Scatter-add a cropped gradient back into the center of a full-map buffer.
fn accumulate_center(full: &mut Tensor, crop: &Tensor) {
    let (n, c, h, w) = (
        full.shape()[0],
        full.shape()[1],
        full.shape()[2],
        full.shape()[3],
    );
    let width = crop.shape()[2];
    let off = (h - width) / 2;
    let dst = full.values_mut();
    let src = crop.values();
    for plane in 0..n * c {
        let dst_base = plane * h * w;
        let src_base = plane * width * width;
        for r in 0..width {
            let d = dst_base + (off + r) * w + off;
            for i in 0..width {
                dst[d + i] += src[src_base + r * width + i];
            }
        }
    }
}

/// Central spatial pixel of a `[N, C, m, m]` map as `[N, C]`.
fn center_pixel(t: &Tensor) -> Tensor {
    let (n, c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]);
    debug_assert!(h % 2 == 1 && w % 2 == 1);
    let (cy, cx) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c]);
    let src = t.values();
    let dst = out.values_mut();
    for ni in 0..n {
        for ci in 0..c {
            dst[ni * c + ci] = src[((ni * c + ci) * h + cy) * w + cx];
        }
    }
    out
}

impl Model {
    pub fn fusion_dim(&self) -> usize {
        self.modalities
            .iter()
            .map(|m| m.branches.len() * m.branches.first().map(|b| b.plan.proj_dim).unwrap_or(0))
            .sum()
    }

    /// Modality patch sizes in model order, as (name, bands, size).
    pub fn patch_layout(&self) -> Vec<(String, usize, usize)> {
        self.modalities
            .iter()
            .map(|m| (m.name.clone(), m.bands, m.patch_size))
            .collect()
    }

    /// Forward through every branch of every modality to species
    /// probabilities. `patches` follow modality order, each `[N, B, P, P]`.
    pub fn forward(&mut self, patches: &[Tensor], mode: Mode) -> Result<Tensor, NnError> {
        assert_eq!(patches.len(), self.modalities.len(), "one patch tensor per modality");
        let n = patches[0].shape()[0];
        let mut parts: Vec<Tensor> = Vec::new();
        let mut enc_shapes = Vec::new();
        let mut proj_widths = Vec::new();
        for (m, patch) in self.modalities.iter_mut().zip(patches) {
            let enc_out = m.encoder.forward(patch, mode)?;
            enc_shapes.push([
                enc_out.shape()[0],
                enc_out.shape()[1],
                enc_out.shape()[2],
                enc_out.shape()[3],
            ]);
            for b in &mut m.branches {
                let cone = center_crop(&enc_out, b.cone_width);
                let feat_map = b.spatial.forward(&cone, mode)?;
                debug_assert_eq!(feat_map.shape()[2], 1);
                let feat = feat_map.reshaped(&[n, b.plan.head_channels]);
                let proj = b.projection.forward(&feat, mode)?;
                proj_widths.push(b.plan.proj_dim);
                parts.push(proj);
            }
        }

        let fusion_dim: usize = proj_widths.iter().sum();
        let mut fusion = Tensor::zeros(&[n, fusion_dim]);
        {
            let dst = fusion.values_mut();
            for ni in 0..n {
                let mut off = 0usize;
                for part in &parts {
                    let width = part.shape()[1];
                    let src = &part.values()[ni * width..(ni + 1) * width];
                    dst[ni * fusion_dim + off..ni * fusion_dim + off + width].copy_from_slice(src);
                    off += width;
                }
            }
        }

        let logits = self.classifier.forward(&fusion, mode)?;
        let probs = sigmoid(&logits);
        self.state = Some(ForwardState {
            mode,
            probs: probs.clone(),
            enc_shapes,
            proj_widths,
        });
        Ok(probs)
    }

    /// Backward from a gradient on the probabilities. Returns per-modality
    /// gradients with respect to the input patches.
    pub fn backward(&mut self, grad_probs: &Tensor) -> Result<Vec<Tensor>, NnError> {
        let state = self.state.take().ok_or(NnError::NoForwardState)?;
        if state.mode != Mode::Train {
            return Err(NnError::NumericalDomain(
                "backward requires a forward pass in train mode".into(),
            ));
        }
        let n = grad_probs.shape()[0];
        // Chain through sigmoid with clamped probabilities: an f32-saturated
        // output (exactly 0 or 1) would otherwise kill the gradient even
        // when the prediction is wrong; the clamp reproduces the stable
        // (p - y) form the fused formulation would give.
        let mut dlogits = grad_probs.clone();
        for (g, &p) in dlogits.values_mut().iter_mut().zip(state.probs.values()) {
            let p = p.clamp(1e-7, 1.0 - 1e-7);
            *g *= p * (1.0 - p);
        }
        let dfusion = self.classifier.backward(&dlogits)?;

        let fusion_dim: usize = state.proj_widths.iter().sum();
        let mut patch_grads = Vec::new();
        let mut part_idx = 0usize;
        let mut off = 0usize;
        for (mi, m) in self.modalities.iter_mut().enumerate() {
            let mut denc = Tensor::zeros(&state.enc_shapes[mi]);
            for b in &mut m.branches {
                let width = state.proj_widths[part_idx];
                let mut dproj = Tensor::zeros(&[n, width]);
                {
                    let dst = dproj.values_mut();
                    let src = dfusion.values();
                    for ni in 0..n {
                        dst[ni * width..(ni + 1) * width].copy_from_slice(
                            &src[ni * fusion_dim + off..ni * fusion_dim + off + width],
                        );
                    }
                }
                off += width;
                part_idx += 1;

                let dfeat = b.projection.backward(&dproj)?;
                let dmap = dfeat.reshaped(&[n, b.plan.head_channels, 1, 1]);
                let dcone = b.spatial.backward(&dmap)?;
                accumulate_center(&mut denc, &dcone);
            }
            patch_grads.push(m.encoder.backward(&denc)?);
        }
        Ok(patch_grads)
    }

    /// Full-map branch feature: encoder on the whole patch, branch layers on
    /// the whole encoder map, central pixel extracted last. Bit-identical to
    /// the cone path in eval mode; used by receptive-field verification.
    pub fn branch_feature_full(
        &mut self,
        modality: usize,
        branch: usize,
        patch: &Tensor,
        mode: Mode,
    ) -> Result<Tensor, NnError> {
        let m = &mut self.modalities[modality];
        let enc_out = m.encoder.forward(patch, mode)?;
        let b = &mut m.branches[branch];
        let feat_map = b.spatial.forward(&enc_out, mode)?;
        let center = center_pixel(&feat_map);
        m.encoder.clear_caches();
        b.spatial.clear_caches();
        Ok(center)
    }

    /// Cone-path branch feature (central 512-vector before projection).
    pub fn branch_feature_cone(
        &mut self,
        modality: usize,
        branch: usize,
        patch: &Tensor,
        mode: Mode,
    ) -> Result<Tensor, NnError> {
        let n = patch.shape()[0];
        let m = &mut self.modalities[modality];
        let enc_out = m.encoder.forward(patch, mode)?;
        let b = &mut m.branches[branch];
        let cone = center_crop(&enc_out, b.cone_width);
        let feat_map = b.spatial.forward(&cone, mode)?;
        let head = b.plan.head_channels;
        m.encoder.clear_caches();
        b.spatial.clear_caches();
        Ok(feat_map.reshaped(&[n, head]))
    }

    pub fn zero_grads(&mut self) {
        for m in &mut self.modalities {
            m.encoder.zero_grads();
            for b in &mut m.branches {
                b.spatial.zero_grads();
                b.projection.zero_grads();
            }
        }
        self.classifier.zero_grads();
    }

    pub fn clear_caches(&mut self) {
        for m in &mut self.modalities {
            m.encoder.clear_caches();
            for b in &mut m.branches {
                b.spatial.clear_caches();
                b.projection.clear_caches();
            }
        }
        self.classifier.clear_caches();
        self.state = None;
    }

    /// One SGD step over every trainable parameter, in declaration order.
    pub fn sgd_update(&mut self, cfg: &SgdConfig) {
        self.for_each_layer_mut(|layer| {
            if !layer.is_trainable() {
                return;
            }
            if let Some(g) = layer.weight.grad() {
                let g = g.to_vec();
                sgd_step(layer.weight.values_mut(), &g, cfg);
            }
            if let Some(g) = layer.bias.grad() {
                let g = g.to_vec();
                sgd_step(layer.bias.values_mut(), &g, cfg);
            }
        });
        self.step += 1;
    }

    fn for_each_layer_mut(&mut self, mut f: impl FnMut(&mut Layer)) {
        for m in &mut self.modalities {
            for l in &mut m.encoder.layers {
                f(l);
            }
            for b in &mut m.branches {
                for l in &mut b.spatial.layers {
                    f(l);
                }
                for l in &mut b.projection.layers {
                    f(l);
                }
            }
        }
        for l in &mut self.classifier.layers {
            f(l);
        }
    }

    /// Named parameter tensors in declaration order, including batch-norm
    /// running statistics (needed to restore eval-mode behavior).
    fn named_tensor_entries(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        let mut out = Vec::new();
        let push_stack = |prefix: String, stack: &Stack, out: &mut Vec<(String, Vec<usize>, Vec<f32>)>| {
            for (li, l) in stack.layers.iter().enumerate() {
                let kind = l.spec.kind.as_str();
                if l.is_trainable() {
                    out.push((
                        format!("{prefix}.{li}.{kind}.weight"),
                        l.weight.shape().to_vec(),
                        l.weight.values().to_vec(),
                    ));
                    out.push((
                        format!("{prefix}.{li}.{kind}.bias"),
                        l.bias.shape().to_vec(),
                        l.bias.values().to_vec(),
                    ));
                }
                if l.spec.kind == LayerKind::BatchNorm {
                    out.push((
                        format!("{prefix}.{li}.{kind}.running_mean"),
                        vec![l.running_mean.len()],
                        l.running_mean.clone(),
                    ));
                    out.push((
                        format!("{prefix}.{li}.{kind}.running_var"),
                        vec![l.running_var.len()],
                        l.running_var.clone(),
                    ));
                }
            }
        };
        for (mi, m) in self.modalities.iter().enumerate() {
            push_stack(format!("m{mi}.enc"), &m.encoder, &mut out);
            for (bi, b) in m.branches.iter().enumerate() {
                push_stack(format!("m{mi}.b{bi}.spatial"), &b.spatial, &mut out);
                push_stack(format!("m{mi}.b{bi}.proj"), &b.projection, &mut out);
            }
        }
        push_stack("classifier".into(), &self.classifier, &mut out);
        out
    }

    /// Write a checkpoint: text manifest (arch config embedded as JSON, seed,
    /// step counter, caller-provided metadata) plus raw little-endian values.
    pub fn save_checkpoint(
        &self,
        path: &Path,
        extra: &BTreeMap<String, String>,
    ) -> Result<(), NnError> {
        let mut meta = CheckpointMeta {
            seed: self.seed,
            step: self.step,
            epoch: self.epoch,
            extra: extra.clone(),
        };
        meta.extra.insert(
            "arch".into(),
            serde_json::to_string(&self.config)
                .map_err(|e| NnError::Checkpoint(format!("cannot serialize arch: {e}")))?,
        );
        let entries = self.named_tensor_entries();
        let tensors: Vec<(String, Vec<usize>, &[f32])> = entries
            .iter()
            .map(|(n, s, v)| (n.clone(), s.clone(), v.as_slice()))
            .collect();
        write_checkpoint(path, &meta, &tensors)
    }

    /// Rebuild a model from a checkpoint: assemble from the embedded config,
    /// then overwrite every tensor.
    pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta), ArchError> {
        let data = read_checkpoint(path)?;
        let arch_json = data
            .meta
            .extra
            .get("arch")
            .ok_or_else(|| NnError::Checkpoint("checkpoint is missing the arch config".into()))?;
        let config: ModelConfig = serde_json::from_str(arch_json)
            .map_err(|e| NnError::Checkpoint(format!("bad arch config: {e}")))?;
        let mut model = assemble(&config, data.meta.seed)?;
        model.step = data.meta.step;
        model.epoch = data.meta.epoch;

        let expected = model.named_tensor_entries();
        if expected.len() != data.tensors.len() {
            return Err(ArchError::Nn(NnError::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                data.tensors.len(),
                expected.len()
            ))));
        }
        for ((name, shape, _), (got_name, got_shape, _)) in expected.iter().zip(&data.tensors) {
            if name != got_name || shape != got_shape {
                return Err(ArchError::Nn(NnError::Checkpoint(format!(
                    "tensor mismatch: model expects {name} {shape:?}, checkpoint has {got_name} {got_shape:?}"
                ))));
            }
        }
        let values: Vec<Vec<f32>> = data.tensors.into_iter().map(|(_, _, v)| v).collect();
        let mut idx = 0usize;
        model.for_each_layer_mut(|l| {
            if l.is_trainable() {
                l.weight.values_mut().copy_from_slice(&values[idx]);
                idx += 1;
                l.bias.values_mut().copy_from_slice(&values[idx]);
                idx += 1;
            }
            if l.spec.kind == LayerKind::BatchNorm {
                l.running_mean.copy_from_slice(&values[idx]);
                idx += 1;
                l.running_var.copy_from_slice(&values[idx]);
                idx += 1;
            }
        });
        Ok((model, data.meta))
    }
}

/// Empirically measure a branch's spatial extent: the side length of the
/// minimal centered square window outside which input perturbations leave
/// the branch's central feature vector bitwise unchanged.
///
/// Valid convolution makes dependence exact, so for any window at least as
/// wide as the true receptive field equality is structural; below it, a
/// perturbation generically changes the output. Two perturbation draws at
/// different amplitudes guard against masking by ReLU gates or pool maxima.
pub fn rf_verify(model: &mut Model, modality: usize, branch: usize) -> Result<usize, ArchError> {
    use rand::Rng;
    let (patch_size, bands) = {
        let m = &model.modalities[modality];
        (m.patch_size, m.bands)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(
        0x5f3759df ^ ((modality as u64) << 32) ^ branch as u64,
    );
    let count = bands * patch_size * patch_size;
    let base_values: Vec<f32> = (0..count).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
    let noise: Vec<Vec<f32>> = [1.0f32, 8.0]
        .iter()
        .map(|amp| (0..count).map(|_| (rng.random::<f32>() * 2.0 - 1.0) * amp).collect())
        .collect();

    let base_patch = Tensor::from_vec(&[1, bands, patch_size, patch_size], base_values.clone());
    let baseline = model.branch_feature_full(modality, branch, &base_patch, Mode::Eval)?;

    let perturbed_outside = |window: usize, draw: &[f32]| -> Tensor {
        let half = (window - 1) / 2;
        let center = patch_size / 2;
        let mut values = base_values.clone();
        for b in 0..bands {
            for r in 0..patch_size {
                for c in 0..patch_size {
                    let inside = r.abs_diff(center) <= half && c.abs_diff(center) <= half;
                    if !inside {
                        let i = (b * patch_size + r) * patch_size + c;
                        values[i] += draw[i];
                    }
                }
            }
        }
        Tensor::from_vec(&[1, bands, patch_size, patch_size], values)
    };

    let unchanged = |model: &mut Model, window: usize| -> Result<bool, ArchError> {
        if window >= patch_size {
            return Ok(true);
        }
        for draw in &noise {
            let out = model.branch_feature_full(
                modality,
                branch,
                &perturbed_outside(window, draw),
                Mode::Eval,
            )?;
            if out.values() != baseline.values() {
                return Ok(false);
            }
        }
        Ok(true)
    };

    // Binary search over odd window sizes for the smallest unchanged one,
    // then confirm both sides of the boundary. The midpoint rounds down to
    // odd so it stays strictly below `hi`, guaranteeing progress.
    let (mut lo, mut hi) = (1usize, patch_size);
    while lo < hi {
        let mid = {
            let m = lo + (hi - lo) / 2;
            if m % 2 == 0 {
                m - 1
            } else {
                m
            }
        };
        if unchanged(model, mid)? {
            hi = mid;
        } else {
            lo = mid + 2;
        }
    }
    let measured = lo;
    if !unchanged(model, measured)? {
        return Err(ArchError::Invalid(format!(
            "rf_verify: window {measured} unexpectedly changed the output"
        )));
    }
    if measured > 1 && unchanged(model, measured - 2)? {
        return Err(ArchError::Invalid(format!(
            "rf_verify: non-monotone dependence around window {measured}"
        )));
    }
    Ok(measured)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::plan::{ArchConfig, EncoderLayerCfg, ModalityConfig};

    fn conv_cfg(kernel: usize, stride: usize, out: usize) -> EncoderLayerCfg {
        EncoderLayerCfg {
            kind: "conv".into(),
            kernel,
            stride,
            out,
        }
    }

    fn pointwise_modality(scales: Vec<usize>) -> ModalityConfig {
        ModalityConfig {
            name: "coarse".into(),
            raster: "coarse.grb1".into(),
            bands: 3,
            pixel_ground_km: 0.6,
            encoder: vec![conv_cfg(1, 1, 8), conv_cfg(1, 1, 8)],
            encoder_rf: 1,
            encoder_jump: 1,
            scales,
            branch_channels: 8,
            head_channels: 16,
            proj_dim: 12,
        }
    }

    fn model_config(modalities: Vec<ModalityConfig>, species: usize) -> ModelConfig {
        ModelConfig {
            arch: ArchConfig {
                seed: 3,
                modalities,
            },
            species_count: species,
        }
    }

    #[test]
    fn fusion_width_counts_all_branches() {
        let cfg = model_config(vec![pointwise_modality(vec![1, 5, 9])], 6);
        let model = assemble(&cfg, 3).unwrap();
        assert_eq!(model.fusion_dim(), 3 * 12);
        assert_eq!(model.classifier.layers[0].spec.in_channels, 36);
        assert_eq!(model.classifier.layers[0].spec.out_channels, 6);
    }

    #[test]
    fn single_branch_fusion_is_one_projection() {
        let cfg = model_config(vec![pointwise_modality(vec![5])], 2);
        let model = assemble(&cfg, 0).unwrap();
        assert_eq!(model.fusion_dim(), 12);
    }

    #[test]
    fn outputs_are_probabilities() {
        let cfg = model_config(vec![pointwise_modality(vec![1, 5])], 4);
        let mut model = assemble(&cfg, 9).unwrap();
        let patch = Tensor::from_vec(
            &[2, 3, 5, 5],
            (0..150).map(|i| ((i * 37 % 101) as f32) / 50.5 - 1.0).collect(),
        );
        let probs = model.forward(&[patch], Mode::Train).unwrap();
        assert_eq!(probs.shape(), &[2, 4]);
        assert!(probs.values().iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn cone_and_full_paths_agree_bitwise_in_eval() {
        let mut m = pointwise_modality(vec![1, 5, 9]);
        m.encoder = vec![conv_cfg(1, 1, 6)];
        let cfg = model_config(vec![m], 3);
        let mut model = assemble(&cfg, 11).unwrap();
        let patch = Tensor::from_vec(
            &[2, 3, 9, 9],
            (0..486).map(|i| ((i * 17 % 89) as f32) / 44.0 - 1.0).collect(),
        );
        for bi in 0..3 {
            let full = model
                .branch_feature_full(0, bi, &patch, Mode::Eval)
                .unwrap();
            let cone = model
                .branch_feature_cone(0, bi, &patch, Mode::Eval)
                .unwrap();
            assert_eq!(full.values(), cone.values(), "branch {bi}");
        }
    }

    #[test]
    fn same_seed_assembles_identical_models() {
        let cfg = model_config(vec![pointwise_modality(vec![1, 5])], 4);
        let a = assemble(&cfg, 21).unwrap();
        let b = assemble(&cfg, 21).unwrap();
        let (ta, tb) = (a.named_tensor_entries(), b.named_tensor_entries());
        assert_eq!(ta, tb);
        let c = assemble(&cfg, 22).unwrap();
        assert_ne!(ta, c.named_tensor_entries());
    }

    #[test]
    fn checkpoint_roundtrip_restores_function() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cfg = model_config(vec![pointwise_modality(vec![1, 5])], 4);
        let mut model = assemble(&cfg, 5).unwrap();
        model.step = 77;
        model
            .save_checkpoint(&path, &BTreeMap::new())
            .unwrap();
        let (mut back, meta) = Model::load_checkpoint(&path).unwrap();
        assert_eq!(meta.step, 77);
        assert_eq!(back.step, 77);
        let patch = Tensor::from_vec(
            &[1, 3, 5, 5],
            (0..75).map(|i| (i as f32).cos()).collect(),
        );
        let p1 = model.forward(&[patch.clone()], Mode::Eval).unwrap();
        let p2 = back.forward(&[patch], Mode::Eval).unwrap();
        assert_eq!(p1.values(), p2.values());
    }

    #[test]
    fn locality_outside_target_window_is_exact_zero_change() {
        let mut m = pointwise_modality(vec![1, 5]);
        m.encoder = vec![conv_cfg(1, 1, 4)];
        let cfg = model_config(vec![m], 2);
        let mut model = assemble(&cfg, 2).unwrap();
        // Branch 0 has extent 1: zeroing everything but the center pixel of
        // the 5x5 patch must leave its feature vector untouched.
        let vals: Vec<f32> = (0..75).map(|i| ((i % 13) as f32) * 0.3 - 1.5).collect();
        let patch = Tensor::from_vec(&[1, 3, 5, 5], vals.clone());
        let base = model
            .branch_feature_full(0, 0, &patch, Mode::Eval)
            .unwrap();
        let mut zeroed = vals;
        for b in 0..3 {
            for r in 0..5 {
                for c in 0..5 {
                    if !(r == 2 && c == 2) {
                        zeroed[(b * 5 + r) * 5 + c] = 0.0;
                    }
                }
            }
        }
        let masked = Tensor::from_vec(&[1, 3, 5, 5], zeroed);
        let out = model.branch_feature_full(0, 0, &masked, Mode::Eval).unwrap();
        assert_eq!(base.values(), out.values());
    }
}

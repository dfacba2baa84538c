//! Finite-difference gradient verification.
//!
//! The oracle is a naive f64 re-implementation of each layer's forward pass
//! with its own f64 parameter copies, deliberately independent of the f32
//! implementation path it checks: central differences on the f64 shadow
//! estimate the true gradient to ~1e-10, so a mismatch beyond tolerance
//! points at the analytic backward pass rather than at float noise. The
//! small default step (1e-5) is exact in f64 and keeps encounters with the
//! kinks of ReLU / max-pool rare; coordinates whose interval still straddles
//! a kink (detected by disagreeing one-sided slopes) are skipped and counted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Layer, LayerKind, LayerSpec, Mode, Stack, Tensor};

/// Tolerances for a finite-difference check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckSettings {
    /// Central-difference step, applied in f64.
    pub eps: f64,
    /// Relative tolerance on |analytic - fd| / max(|analytic|, |fd|).
    pub rel_tol: f64,
    /// Absolute floor below which a deviation always passes.
    pub abs_floor: f64,
    /// Max coordinates sampled per tensor.
    pub max_coords: usize,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        GradCheckSettings {
            eps: 1e-5,
            rel_tol: 1e-3,
            abs_floor: 1e-5,
            max_coords: 64,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CheckOutcome {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub failures: usize,
    pub max_rel_err: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }

    fn absorb(&mut self, other: &CheckOutcome) {
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
        self.failures += other.failures;
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
    }
}

// ---- f64 shadow network ----

struct ShadowLayer {
    spec: LayerSpec,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

struct ShadowStack {
    layers: Vec<ShadowLayer>,
}

impl ShadowStack {
    fn from_stack(stack: &Stack) -> Self {
        ShadowStack {
            layers: stack
                .layers
                .iter()
                .map(|l: &Layer| ShadowLayer {
                    spec: l.spec,
                    weight: l.weight.values().iter().map(|&v| v as f64).collect(),
                    bias: l.bias.values().iter().map(|&v| v as f64).collect(),
                })
                .collect(),
        }
    }

    fn loss(&self, input: &[f64], input_shape: &[usize], upstream: &[f64]) -> f64 {
        let mut shape = input_shape.to_vec();
        let mut values = input.to_vec();
        for layer in &self.layers {
            (shape, values) = shadow_forward(layer, &shape, &values);
        }
        debug_assert_eq!(values.len(), upstream.len());
        values.iter().zip(upstream).map(|(y, u)| y * u).sum()
    }
}

fn shadow_forward(layer: &ShadowLayer, shape: &[usize], x: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let spec = &layer.spec;
    match spec.kind {
        LayerKind::Conv2d => {
            let (n, cin, h, w) = (shape[0], shape[1], shape[2], shape[3]);
            let (k, s) = (spec.kernel, spec.stride);
            let cout = spec.out_channels;
            let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
            let mut out = vec![0.0f64; n * cout * oh * ow];
            for ni in 0..n {
                for oc in 0..cout {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = layer.bias[oc];
                            for ic in 0..cin {
                                for kh in 0..k {
                                    for kw in 0..k {
                                        let xi =
                                            ((ni * cin + ic) * h + oy * s + kh) * w + ox * s + kw;
                                        let wi = ((oc * cin + ic) * k + kh) * k + kw;
                                        acc += layer.weight[wi] * x[xi];
                                    }
                                }
                            }
                            out[((ni * cout + oc) * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
            }
            (vec![n, cout, oh, ow], out)
        }
        LayerKind::BatchNorm => {
            let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
            let plane = h * w;
            let count = (n * plane) as f64;
            let mut out = vec![0.0f64; x.len()];
            for ch in 0..c {
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for ni in 0..n {
                    let base = (ni * c + ch) * plane;
                    for &v in &x[base..base + plane] {
                        sum += v;
                        sum_sq += v * v;
                    }
                }
                let mean = sum / count;
                let var = (sum_sq / count - mean * mean).max(0.0);
                let inv = 1.0 / (var + 1e-5).sqrt();
                let (g, b) = (layer.weight[ch], layer.bias[ch]);
                for ni in 0..n {
                    let base = (ni * c + ch) * plane;
                    for i in 0..plane {
                        out[base + i] = g * (x[base + i] - mean) * inv + b;
                    }
                }
            }
            (shape.to_vec(), out)
        }
        LayerKind::ReLU => (shape.to_vec(), x.iter().map(|&v| v.max(0.0)).collect()),
        LayerKind::MaxPool => {
            let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
            let (k, s) = (spec.kernel, spec.stride);
            let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
            let mut out = vec![0.0f64; n * c * oh * ow];
            for plane_idx in 0..n * c {
                let base = plane_idx * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        for kh in 0..k {
                            for kw in 0..k {
                                let v = x[base + (oy * s + kh) * w + ox * s + kw];
                                if v > best {
                                    best = v;
                                }
                            }
                        }
                        out[plane_idx * oh * ow + oy * ow + ox] = best;
                    }
                }
            }
            (vec![n, c, oh, ow], out)
        }
        LayerKind::Linear => {
            let (n, f) = (shape[0], shape[1]);
            let o = spec.out_channels;
            let mut out = vec![0.0f64; n * o];
            for ni in 0..n {
                for oi in 0..o {
                    let mut acc = layer.bias[oi];
                    for fi in 0..f {
                        acc += layer.weight[oi * f + fi] * x[ni * f + fi];
                    }
                    out[ni * o + oi] = acc;
                }
            }
            (vec![n, o], out)
        }
    }
}

// ---- the check itself ----

fn sample_indices(len: usize, max: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        let mut idx: Vec<usize> = (0..len).collect();
        for i in 0..max {
            let j = i + (rng.random::<u64>() as usize) % (len - i);
            idx.swap(i, j);
        }
        idx.truncate(max);
        idx
    }
}

struct FdProbe<'a> {
    shadow: &'a mut ShadowStack,
    input: Vec<f64>,
    input_shape: Vec<usize>,
    upstream: Vec<f64>,
    settings: GradCheckSettings,
}

enum Coord {
    Weight(usize, usize),
    Bias(usize, usize),
    Input(usize),
}

impl FdProbe<'_> {
    fn value(&self, coord: &Coord) -> f64 {
        match *coord {
            Coord::Weight(l, i) => self.shadow.layers[l].weight[i],
            Coord::Bias(l, i) => self.shadow.layers[l].bias[i],
            Coord::Input(i) => self.input[i],
        }
    }

    fn set(&mut self, coord: &Coord, v: f64) {
        match *coord {
            Coord::Weight(l, i) => self.shadow.layers[l].weight[i] = v,
            Coord::Bias(l, i) => self.shadow.layers[l].bias[i] = v,
            Coord::Input(i) => self.input[i] = v,
        }
    }

    fn loss(&self) -> f64 {
        self.shadow.loss(&self.input, &self.input_shape, &self.upstream)
    }

    fn check_one(&mut self, analytic: f64, coord: Coord, outcome: &mut CheckOutcome) {
        let eps = self.settings.eps;
        let original = self.value(&coord);
        self.set(&coord, original + eps);
        let f_plus = self.loss();
        self.set(&coord, original - eps);
        let f_minus = self.loss();
        self.set(&coord, original);
        let f_zero = self.loss();

        let fwd = (f_plus - f_zero) / eps;
        let bwd = (f_zero - f_minus) / eps;
        // Disagreeing one-sided slopes mean the interval straddles a kink of
        // ReLU or max-pool; central differences are meaningless there.
        if (fwd - bwd).abs() > (1e-4 * fwd.abs().max(bwd.abs())).max(1e-7) {
            outcome.skipped_kinks += 1;
            return;
        }
        let fd = (f_plus - f_minus) / (2.0 * eps);
        let diff = (analytic - fd).abs();
        let denom = analytic.abs().max(fd.abs());
        outcome.checked += 1;
        if diff <= self.settings.abs_floor {
            return;
        }
        let rel = diff / denom.max(self.settings.abs_floor);
        outcome.max_rel_err = outcome.max_rel_err.max(rel);
        if rel > self.settings.rel_tol {
            outcome.failures += 1;
        }
    }
}

/// Check analytic parameter and input gradients of a stack against the f64
/// finite-difference oracle, on a random input and random upstream gradient.
pub fn check_stack(
    specs: &[LayerSpec],
    input_shape: &[usize],
    seed: u64,
    settings: GradCheckSettings,
) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stack = Stack::from_specs(specs);
    stack.init_params(&mut rng);

    let n_in: usize = input_shape.iter().product();
    let input_f32: Vec<f32> = (0..n_in).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
    let input = Tensor::from_vec(input_shape, input_f32.clone());

    // Analytic pass in f32.
    let out = stack
        .forward(&input, Mode::Train)
        .expect("gradcheck forward");
    let upstream_f32: Vec<f32> = (0..out.len()).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
    stack.zero_grads();
    let grad_in = stack
        .backward(&Tensor::from_vec(out.shape(), upstream_f32.clone()))
        .expect("gradcheck backward");

    let analytic_params: Vec<(usize, Vec<f64>, Vec<f64>)> = stack
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_trainable())
        .map(|(i, l)| {
            (
                i,
                l.weight.grad().unwrap().iter().map(|&g| g as f64).collect(),
                l.bias.grad().unwrap().iter().map(|&g| g as f64).collect(),
            )
        })
        .collect();
    let analytic_input: Vec<f64> = grad_in.values().iter().map(|&g| g as f64).collect();

    let mut shadow = ShadowStack::from_stack(&stack);
    let mut outcome = CheckOutcome::default();
    let mut probe = FdProbe {
        shadow: &mut shadow,
        input: input_f32.iter().map(|&v| v as f64).collect(),
        input_shape: input_shape.to_vec(),
        upstream: upstream_f32.iter().map(|&u| u as f64).collect(),
        settings,
    };

    for (li, wg, bg) in &analytic_params {
        for &ci in &sample_indices(wg.len(), settings.max_coords, &mut rng) {
            probe.check_one(wg[ci], Coord::Weight(*li, ci), &mut outcome);
        }
        for &ci in &sample_indices(bg.len(), settings.max_coords, &mut rng) {
            probe.check_one(bg[ci], Coord::Bias(*li, ci), &mut outcome);
        }
    }
    for &ci in &sample_indices(analytic_input.len(), settings.max_coords, &mut rng) {
        probe.check_one(analytic_input[ci], Coord::Input(ci), &mut outcome);
    }

    outcome
}

/// Run `check_stack` for each of the five layer kinds on small random
/// tensors, one seed each call. Used by the acceptance suite.
pub fn check_all_layer_kinds(seed: u64, settings: GradCheckSettings) -> CheckOutcome {
    let cases: Vec<(Vec<LayerSpec>, Vec<usize>)> = vec![
        (vec![LayerSpec::conv(3, 1, 2, 3)], vec![2, 2, 6, 6]),
        (vec![LayerSpec::conv(2, 2, 2, 2)], vec![2, 2, 6, 6]),
        (vec![LayerSpec::batch_norm(3)], vec![3, 3, 4, 4]),
        (vec![LayerSpec::relu()], vec![2, 2, 5, 5]),
        (vec![LayerSpec::max_pool(2, 2)], vec![2, 2, 6, 6]),
        (vec![LayerSpec::max_pool(3, 2)], vec![1, 2, 7, 7]),
        (vec![LayerSpec::linear(10, 7)], vec![4, 10]),
        // Composite: conv+bn+relu+pool+conv, exercising the chain.
        (
            vec![
                LayerSpec::conv(3, 1, 1, 3),
                LayerSpec::batch_norm(3),
                LayerSpec::relu(),
                LayerSpec::max_pool(3, 2),
                LayerSpec::conv(1, 1, 3, 2),
            ],
            vec![2, 1, 9, 9],
        ),
    ];
    let mut total = CheckOutcome::default();
    for (i, (specs, shape)) in cases.iter().enumerate() {
        let outcome = check_stack(specs, shape, seed.wrapping_add(i as u64 * 1013), settings);
        total.absorb(&outcome);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_layer_kinds_pass_fd_check() {
        for seed in 0..6 {
            let outcome = check_all_layer_kinds(seed, GradCheckSettings::default());
            assert!(
                outcome.passed(),
                "seed {seed}: {} failures, max rel err {}",
                outcome.failures,
                outcome.max_rel_err
            );
        }
    }

    #[test]
    fn kink_skips_stay_rare() {
        let mut total = CheckOutcome::default();
        for seed in 0..6 {
            total.absorb(&check_all_layer_kinds(seed, GradCheckSettings::default()));
        }
        assert!(
            total.skipped_kinks * 50 < total.checked,
            "{} kink skips vs {} checked",
            total.skipped_kinks,
            total.checked
        );
    }

    #[test]
    fn detects_a_broken_gradient() {
        // Sanity check on the checker: corrupt one analytic value and make
        // sure the probe flags it.
        let specs = vec![LayerSpec::linear(4, 3)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut stack = Stack::from_specs(&specs);
        stack.init_params(&mut rng);
        let input_f32: Vec<f32> = (0..8).map(|_| rng.random::<f32>()).collect();
        let input = Tensor::from_vec(&[2, 4], input_f32.clone());
        let out = stack.forward(&input, Mode::Train).unwrap();
        let upstream: Vec<f32> = (0..out.len()).map(|_| 1.0).collect();
        stack.zero_grads();
        stack
            .backward(&Tensor::from_vec(out.shape(), upstream.clone()))
            .unwrap();

        let analytic = stack.layers[0].weight.grad().unwrap()[0] as f64 + 0.5; // corrupted
        let mut shadow = ShadowStack::from_stack(&stack);
        let mut outcome = CheckOutcome::default();
        let mut probe = FdProbe {
            shadow: &mut shadow,
            input: input_f32.iter().map(|&v| v as f64).collect(),
            input_shape: vec![2, 4],
            upstream: upstream.iter().map(|&u| u as f64).collect(),
            settings: GradCheckSettings::default(),
        };
        probe.check_one(analytic, Coord::Weight(0, 0), &mut outcome);
        assert_eq!(outcome.failures, 1);
    }
}

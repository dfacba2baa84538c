//! Timing probe for one training step of a small single-modality model.
//!
//! Run with: `cargo run -p msdm-core --example bench_step --release`

use msdm_core::arch::{assemble, ArchConfig, EncoderLayerCfg, ModalityConfig, ModelConfig};
use msdm_core::nn::{Mode, SgdConfig, Tensor};
use msdm_core::train::weighted_loss_and_grad;
use std::time::Instant;

fn conv(kernel: usize, out: usize) -> EncoderLayerCfg {
    EncoderLayerCfg {
        kind: "conv".into(),
        kernel,
        stride: 1,
        out,
    }
}

fn main() {
    let cfg = ModelConfig {
        arch: ArchConfig {
            seed: 42,
            modalities: vec![ModalityConfig {
                name: "coarse".into(),
                raster: "coarse.grb1".into(),
                bands: 5,
                pixel_ground_km: 0.6,
                encoder: vec![conv(1, 16), conv(1, 16), conv(1, 16), conv(1, 16)],
                encoder_rf: 1,
                encoder_jump: 1,
                scales: vec![9],
                branch_channels: 12,
                head_channels: 96,
                proj_dim: 192,
            }],
        },
        species_count: 8,
    };
    let mut model = assemble(&cfg, 42).unwrap();
    let n = 256;
    let x = Tensor::from_vec(
        &[n, 5, 9, 9],
        (0..n * 5 * 81).map(|i| ((i % 97) as f32) / 48.0 - 1.0).collect(),
    );
    let labels = Tensor::from_vec(&[n, 8], (0..n * 8).map(|i| ((i % 3) == 0) as u8 as f32).collect());
    let sgd = SgdConfig {
        learning_rate: 0.01,
        weight_decay: 1e-4,
        seed: 42,
    };

    for _ in 0..3 {
        let probs = model.forward(&[x.clone()], Mode::Train).unwrap();
        let (_, grad) = weighted_loss_and_grad(&probs, &labels, 2.0).unwrap();
        model.zero_grads();
        model.backward(&grad).unwrap();
        model.sgd_update(&sgd);
    }

    let iters = 20;
    let t0 = Instant::now();
    for _ in 0..iters {
        let probs = model.forward(&[x.clone()], Mode::Train).unwrap();
        std::hint::black_box(probs.values()[0]);
    }
    let fwd = t0.elapsed().as_secs_f64() / iters as f64;

    let t0 = Instant::now();
    for _ in 0..iters {
        let probs = model.forward(&[x.clone()], Mode::Train).unwrap();
        let (_, grad) = weighted_loss_and_grad(&probs, &labels, 2.0).unwrap();
        model.zero_grads();
        model.backward(&grad).unwrap();
        model.sgd_update(&sgd);
    }
    let step = t0.elapsed().as_secs_f64() / iters as f64;
    println!(
        "batch-256 forward: {:.1} ms, full step: {:.1} ms",
        fwd * 1e3,
        step * 1e3
    );
}

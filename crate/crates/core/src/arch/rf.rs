//! Symbolic receptive-field arithmetic.

use crate::nn::LayerSpec;

/// Fold the receptive-field recurrence over a layer list: for each layer,
/// `rf += (kernel - 1) * jump` then `jump *= stride`. Convolutions and pools
/// contribute identically; kernel-1 stride-1 kinds (batch-norm, ReLU, 1x1
/// projections) leave both values unchanged.
///
/// `jump` is the spacing, in input pixels, between adjacent output
/// activations; `rf` is the side length of the input window one activation
/// depends on.
pub fn rf_symbolic(layers: &[LayerSpec], input_rf: usize, input_jump: usize) -> (usize, usize) {
    let mut rf = input_rf;
    let mut jump = input_jump;
    for l in layers {
        rf += (l.kernel - 1) * jump;
        jump *= l.stride;
    }
    (rf, jump)
}

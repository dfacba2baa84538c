//! Positively-reweighted binary cross-entropy over all model outputs.
//!
//! Records of other species act as negatives; no additional pseudo-absences
//! are sampled. A single global `pos_weight` scales the positive terms:
//!
//! ```text
//! L = mean over N*S of -[ pos_weight * y * ln(p) + (1 - y) * ln(1 - p) ]
//! ```
//!
//! Predictions are clamped to `[1e-7, 1 - 1e-7]` before the logarithms, so
//! saturated probabilities (exactly 0 or 1 in f32) contribute a bounded
//! penalty instead of an infinity.

use super::TrainError;
use crate::nn::Tensor;

pub const PRED_CLAMP: f32 = 1e-7;

fn clamp_pred(p: f32) -> f32 {
    p.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP)
}

fn validate(pred: &Tensor, labels: &Tensor, pos_weight: f32) -> Result<(), TrainError> {
    if pred.shape() != labels.shape() {
        return Err(TrainError::NumericalDomain(format!(
            "pred shape {:?} != labels shape {:?}",
            pred.shape(),
            labels.shape()
        )));
    }
    if pred.is_empty() {
        return Err(TrainError::NumericalDomain("empty prediction tensor".into()));
    }
    if !(pos_weight >= 1.0) {
        return Err(TrainError::NumericalDomain(format!(
            "pos_weight must be >= 1, got {pos_weight}"
        )));
    }
    for &p in pred.values() {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(TrainError::NumericalDomain(format!(
                "prediction {p} is not a probability"
            )));
        }
    }
    for &y in labels.values() {
        if y != 0.0 && y != 1.0 {
            return Err(TrainError::NumericalDomain(format!(
                "label {y} is not in {{0, 1}}"
            )));
        }
    }
    Ok(())
}

/// Mean weighted binary cross-entropy; accumulation in f64.
pub fn weighted_loss(pred: &Tensor, labels: &Tensor, pos_weight: f32) -> Result<f64, TrainError> {
    validate(pred, labels, pos_weight)?;
    let w = pos_weight as f64;
    let mut sum = 0.0f64;
    for (&p, &y) in pred.values().iter().zip(labels.values()) {
        let p = clamp_pred(p) as f64;
        sum += if y == 1.0 { -w * p.ln() } else { -(1.0 - p).ln() };
    }
    Ok(sum / pred.len() as f64)
}

/// Loss plus its gradient with respect to the predictions. The gradient uses
/// the clamped probabilities in the denominators, so the value stays bounded
/// at saturation and, chained through sigmoid, reproduces the numerically
/// stable `p - y` form.
pub fn weighted_loss_and_grad(
    pred: &Tensor,
    labels: &Tensor,
    pos_weight: f32,
) -> Result<(f64, Tensor), TrainError> {
    let loss = weighted_loss(pred, labels, pos_weight)?;
    let count = pred.len() as f32;
    let w = pos_weight;
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &y) in grad
        .values_mut()
        .iter_mut()
        .zip(pred.values())
        .zip(labels.values())
    {
        let p = clamp_pred(p);
        *g = if y == 1.0 { -w / p } else { 1.0 / (1.0 - p) } / count;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: Vec<f32>) -> Tensor {
        Tensor::from_vec(shape, v)
    }

    #[test]
    fn uniform_half_gives_ln_two() {
        let pred = t(&[2, 3], vec![0.5; 6]);
        let labels = t(&[2, 3], vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let loss = weighted_loss(&pred, &labels, 1.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-7, "{loss}");
    }

    #[test]
    fn weighted_positive_term() {
        let pred = t(&[1, 1], vec![0.9]);
        let labels = t(&[1, 1], vec![1.0]);
        let loss = weighted_loss(&pred, &labels, 2.0).unwrap();
        assert!((loss - 0.2107).abs() < 1e-4, "{loss}");
    }

    #[test]
    fn confident_predictions_clamp_to_tiny_loss() {
        let pred = t(&[1, 4], vec![1.0, 1.0, 0.0, 0.0]);
        let labels = t(&[1, 4], vec![1.0, 1.0, 0.0, 0.0]);
        for pw in [1.0f32, 2.0, 8.0] {
            let loss = weighted_loss(&pred, &labels, pw).unwrap();
            assert!(loss <= 2.0 * pw as f64 * 1.7e-6, "pw {pw}: {loss}");
        }
    }

    #[test]
    fn out_of_range_prediction_is_a_domain_error() {
        let pred = t(&[1, 2], vec![0.5, 1.2]);
        let labels = t(&[1, 2], vec![0.0, 1.0]);
        assert!(matches!(
            weighted_loss(&pred, &labels, 1.0),
            Err(TrainError::NumericalDomain(_))
        ));
        let nan = t(&[1, 1], vec![f32::NAN]);
        let l1 = t(&[1, 1], vec![1.0]);
        assert!(weighted_loss(&nan, &l1, 1.0).is_err());
    }

    #[test]
    fn unit_pos_weight_matches_direct_bce_summation() {
        // Independent oracle: direct per-term summation of the plain BCE.
        let preds = [0.1f32, 0.35, 0.5, 0.77, 0.93, 0.02];
        let labels = [1.0f32, 0.0, 1.0, 1.0, 0.0, 0.0];
        let mut oracle = 0.0f64;
        for (&p, &y) in preds.iter().zip(&labels) {
            let p = p as f64;
            oracle += -(y as f64 * p.ln() + (1.0 - y as f64) * (1.0 - p).ln());
        }
        oracle /= preds.len() as f64;
        let loss = weighted_loss(
            &t(&[2, 3], preds.to_vec()),
            &t(&[2, 3], labels.to_vec()),
            1.0,
        )
        .unwrap();
        assert!((loss - oracle).abs() < 1e-6, "{loss} vs {oracle}");
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let preds = vec![0.2f32, 0.6, 0.9, 0.4];
        let labels = vec![0.0f32, 1.0, 1.0, 0.0];
        let a = weighted_loss(&t(&[2, 2], preds.clone()), &t(&[2, 2], labels.clone()), 3.0).unwrap();
        // Swap samples and species order together.
        let preds_p = vec![0.4f32, 0.9, 0.6, 0.2];
        let labels_p = vec![0.0f32, 1.0, 1.0, 0.0];
        let b = weighted_loss(&t(&[2, 2], preds_p), &t(&[2, 2], labels_p), 3.0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences_in_pred_space() {
        let preds = vec![0.3f32, 0.6, 0.85, 0.15];
        let labels = vec![1.0f32, 0.0, 1.0, 0.0];
        let (_, grad) = weighted_loss_and_grad(
            &t(&[1, 4], preds.clone()),
            &t(&[1, 4], labels.clone()),
            2.5,
        )
        .unwrap();
        let eps = 1e-4f64;
        for i in 0..4 {
            let mut up = preds.clone();
            let mut dn = preds.clone();
            up[i] += eps as f32;
            dn[i] -= eps as f32;
            let lu = weighted_loss(&t(&[1, 4], up), &t(&[1, 4], labels.clone()), 2.5).unwrap();
            let ld = weighted_loss(&t(&[1, 4], dn), &t(&[1, 4], labels.clone()), 2.5).unwrap();
            let fd = (lu - ld) / (2.0 * eps);
            let a = grad.values()[i] as f64;
            assert!(
                (a - fd).abs() / a.abs().max(fd.abs()) < 1e-3,
                "coord {i}: {a} vs {fd}"
            );
        }
    }
}

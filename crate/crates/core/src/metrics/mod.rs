//! Evaluation protocol: per-species ROC AUC with median aggregation,
//! site-averaged F1 at a fixed 0.5 threshold, report files, and Δ-comparison
//! between two models.

mod auc;
mod compare;
mod eval;
mod f1;
mod report;

pub use auc::{species_auc, species_auc_pairwise};
pub use compare::{compare, ComparisonSummary};
pub use eval::{evaluate, EvalReport, SiteMetric};
pub use f1::{binarize, site_f1};
pub use report::{read_report_dir, write_report_dir};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mismatched universe: {0}")]
    MismatchedUniverse(String),
    #[error("report format error in {path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Median of the defined values; even counts average the two central values.
/// Returns `None` when no value is defined.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in median input"));
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::median;

    #[test]
    fn median_odd_even_and_empty() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}

//! Per-site species-set overlap (F1) and threshold binarization.

/// F1 overlap between a predicted and an actual species set, both given as
/// sorted index lists: `2|P∩T| / (|P| + |T|)`. Two empty sets score 1.0 — a
/// correct empty prediction is not penalized (flagged in report metadata
/// since the challenge convention is unspecified).
pub fn site_f1(pred: &[u32], truth: &[u32]) -> f64 {
    if pred.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let mut inter = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < pred.len() && j < truth.len() {
        match pred[i].cmp(&truth[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    2.0 * inter as f64 / (pred.len() + truth.len()) as f64
}

/// Species indices with probability strictly above the threshold.
pub fn binarize(pred: &[f32], threshold: f32) -> Vec<u32> {
    pred.iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(i, _)| i as u32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_nonempty_sets_score_one() {
        assert_eq!(site_f1(&[1, 4, 7], &[1, 4, 7]), 1.0);
    }

    #[test]
    fn disjoint_nonempty_sets_score_zero() {
        assert_eq!(site_f1(&[0, 2], &[1, 3]), 0.0);
    }

    #[test]
    fn partial_overlap() {
        // P={A,B}, T={B,C,D} -> 2*1/(2+3) = 0.4
        assert_eq!(site_f1(&[0, 1], &[1, 2, 3]), 0.4);
    }

    #[test]
    fn both_empty_scores_one() {
        assert_eq!(site_f1(&[], &[]), 1.0);
    }

    #[test]
    fn one_empty_scores_zero() {
        assert_eq!(site_f1(&[], &[3]), 0.0);
        assert_eq!(site_f1(&[3], &[]), 0.0);
    }

    #[test]
    fn f1_is_symmetric() {
        let a = [0u32, 3, 5];
        let b = [3u32, 4];
        assert_eq!(site_f1(&a, &b), site_f1(&b, &a));
    }

    #[test]
    fn binarize_is_strict() {
        assert_eq!(binarize(&[0.49, 0.5, 0.51], 0.5), vec![2]);
        assert_eq!(binarize(&[0.0, 0.0], 0.5), Vec::<u32>::new());
        assert_eq!(binarize(&[0.0, 0.1, 0.9], 0.0), vec![1, 2]);
    }
}

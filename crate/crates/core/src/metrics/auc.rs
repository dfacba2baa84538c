//! Rank-based ROC AUC (Mann-Whitney) with average-rank tie handling.

/// AUC of `scores` against binary `labels`: the tie-aware Mann-Whitney
/// statistic `(concordant + 0.5 * tied) / (P * N)` over all positive-negative
/// pairs, computed from ranks in O(M log M).
///
/// Rank sums are held as doubled integers so the result is exactly the
/// brute-force pairwise count divided once at the end; `None` when either
/// class is empty (the AUC is undefined, not zero).
pub fn species_auc(scores: &[f32], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let p = labels.iter().filter(|&&l| l).count() as u64;
    let n = labels.len() as u64 - p;
    if p == 0 || n == 0 {
        return None;
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("NaN score"));

    // Doubled rank sum over positives: tied groups share the average rank
    // (i+1 + j) / 2, kept as the exact integer (i+1 + j).
    let mut rank2_pos_sum: u64 = 0;
    let mut i = 0usize;
    let m = order.len();
    while i < m {
        let mut j = i;
        while j < m && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let rank2 = (i + j + 1) as u64; // (i+1) + j, doubled average rank
        for &idx in &order[i..j] {
            if labels[idx] {
                rank2_pos_sum += rank2;
            }
        }
        i = j;
    }

    // U = R+ - P(P+1)/2, doubled: U2 = 2*R+ - P(P+1) = 2*concordant + ties.
    let u2 = rank2_pos_sum - p * (p + 1);
    Some(u2 as f64 / (2 * p * n) as f64)
}

/// Brute-force O(M^2) pairwise reference, kept in integer arithmetic. This
/// is the verification oracle for `species_auc`; it must stay independent of
/// the rank-based path.
pub fn species_auc_pairwise(scores: &[f32], labels: &[bool]) -> Option<f64> {
    let pos: Vec<f32> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f32> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut twice_count: u64 = 0; // 2*concordant + ties
    for &sp in &pos {
        for &sn in &neg {
            if sp > sn {
                twice_count += 2;
            } else if sp == sn {
                twice_count += 1;
            }
        }
    }
    Some(twice_count as f64 / (2 * pos.len() as u64 * neg.len() as u64) as f64)
}

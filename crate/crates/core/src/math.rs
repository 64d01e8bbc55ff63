//! Log-domain weighting and order statistics shared by the estimators and the harness.

use std::cmp::Ordering;

/// `ln Σ exp(xᵢ)`, stable for large magnitudes. Empty or all-`-inf` input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Turns unnormalized log weights into probabilities summing to one.
///
/// When every entry is `-inf` there is no information to prefer one entry
/// over another and the weights are uniform.
pub fn normalized_weights(log_weights: &[f64]) -> Vec<f64> {
    if log_weights.is_empty() {
        return Vec::new();
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![1.0 / log_weights.len() as f64; log_weights.len()];
    }
    if max == f64::INFINITY {
        let n = log_weights.iter().filter(|v| **v == max).count() as f64;
        return log_weights.iter().map(|v| if *v == max { 1.0 / n } else { 0.0 }).collect();
    }
    // relative to the max, so any exact shift of the input leaves the result unchanged
    let rel: Vec<f64> = log_weights.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = rel.iter().sum();
    rel.iter().map(|r| r / sum).collect()
}

/// Indices of the `k` largest scores, best first.
///
/// Equal scores are ordered by ascending index so the result is fully
/// deterministic. Runs in `O(n + k log k)`.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(scores.len());
    if k == 0 {
        return Vec::new();
    }
    let rank = |a: &usize, b: &usize| -> Ordering { scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)) };
    if k <= 16 {
        // one pass keeping a sorted buffer of the best k
        let mut best: Vec<usize> = Vec::with_capacity(k + 1);
        for i in 0..scores.len() {
            if best.len() == k && rank(&i, &best[k - 1]) != Ordering::Less {
                continue;
            }
            let pos = best.partition_point(|b| rank(b, &i) == Ordering::Less);
            best.insert(pos, i);
            best.truncate(k);
        }
        return best;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, rank);
        idx.truncate(k);
    }
    idx.sort_unstable_by(rank);
    idx
}

/// Linear-interpolation percentile of already sorted data, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Independent seed for sub-stream `stream` of `base` (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Median of unsorted data.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, 0.5)
}

//! Small order statistics used by normalization and the neighbor fence.

/// Quantile of an ascending slice by linear interpolation between closest
/// ranks (position `(n - 1) * q`). Returns `None` for an empty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let q = q.clamp(0.0, 1.0);
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        Some(sorted[lo])
    } else {
        Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
    }
}

/// Index of the largest rank `quantile_sorted` reads for quantile `q` over
/// `n` values.
pub(crate) fn quantile_upper_rank(n: usize, q: f64) -> usize {
    debug_assert!(n > 0);
    ((n - 1) as f64 * q.clamp(0.0, 1.0)).ceil() as usize
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile_sorted(&sorted_copy(values), 0.5)
}

/// `(Q1, Q3)` of the values, interpolated.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64)> {
    let s = sorted_copy(values);
    Some((quantile_sorted(&s, 0.25)?, quantile_sorted(&s, 0.75)?))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Normalized Shannon entropy of a discrete distribution given by counts:
/// `H / ln(max(2, support))`, in `[0, 1]`. Zero for empty or single-symbol
/// input.
pub fn normalized_entropy<I>(counts: I) -> f64
where
    I: IntoIterator<Item = u64>,
{
    let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 || counts.len() < 2 {
        return 0.0;
    }
    let total = total as f64;
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    let norm = (counts.len().max(2) as f64).ln();
    (h / norm).clamp(0.0, 1.0)
}

//! Two-tailed Wilcoxon signed-rank test for paired samples.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest number of nonzero differences handled by the exact null.
pub const EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Nonzero differences entering the test.
    pub n: usize,
    pub w: f64,
    pub p_value: f64,
    pub significant_at_0_05: bool,
}

/// Average ranks (1-based) of `values`, ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// P(W+ <= w) under the null, where each rank joins W+ with probability
/// 1/2. Ranks are doubled so tied half-ranks stay integral.
fn exact_lower_tail(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let limit = (w * 2.0).round() as usize;
    let hits: f64 = counts[..=limit.min(total)].iter().sum();
    hits / 2f64.powi(ranks.len() as i32)
}

fn normal_p(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut ties = std::collections::BTreeMap::new();
    for r in ranks {
        *ties.entry(r.to_bits()).or_insert(0.0) += 1.0;
    }
    let correction: f64 = ties.values().map(|t: &f64| t.powi(3) - t).sum::<f64>() / 48.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - correction;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (w - mean) / var.sqrt();
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * std.cdf(z)
}

/// Zero differences are dropped; W = min(W+, W−); the p-value is exact up
/// to `EXACT_LIMIT` nonzero pairs and tie-corrected normal above.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<ComparisonResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("paired sample".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(Error::DegeneratePairedSample);
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = ranks.iter().sum::<f64>();
    // adding 0.0 turns the -0.0 of an empty sum into 0.0
    let w = w_plus.min(total - w_plus) + 0.0;
    let p = if diffs.len() <= EXACT_LIMIT {
        2.0 * exact_lower_tail(&ranks, w)
    } else {
        normal_p(&ranks, w)
    };
    let p_value = p.min(1.0);
    Ok(ComparisonResult {
        a: a.to_vec(),
        b: b.to_vec(),
        n: diffs.len(),
        w,
        p_value,
        significant_at_0_05: p_value < 0.05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Two-tailed p by enumerating all 2^n sign patterns.
    fn brute_force(diffs: &[f64]) -> f64 {
        let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
        let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
        let total: f64 = ranks.iter().sum();
        let observed_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
        let w = observed_plus.min(total - observed_plus);
        let n = d.len();
        let mut extreme = 0u64;
        for mask in 0u64..(1 << n) {
            let plus: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if plus.min(total - plus) <= w + 1e-9 {
                extreme += 1;
            }
        }
        (extreme as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn constant_shift_six_pairs() {
        let b = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let a: Vec<f64> = b.iter().map(|x| x + 0.5).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.w, 0.0);
        assert_eq!(r.p_value, 0.03125);
        assert!(r.significant_at_0_05);
    }

    #[test]
    fn single_nonzero_difference() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0]).unwrap();
        assert_eq!(r.n, 1);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.significant_at_0_05);
    }

    #[test]
    fn all_zero_differences_are_degenerate() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]);
        assert!(matches!(r, Err(Error::DegeneratePairedSample)));
        assert_eq!(Error::DegeneratePairedSample.to_string(), "degenerate paired sample");
    }

    #[test]
    fn textbook_ten_pairs() {
        let a = [125.0, 115.0, 130.0, 140.0, 140.0, 115.0, 140.0, 125.0, 140.0, 135.0];
        let b = [110.0, 122.0, 125.0, 120.0, 140.0, 124.0, 123.0, 137.0, 135.0, 145.0];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert_eq!(r.n, 9);
        assert_eq!(r.w, 18.0);
        assert!((r.p_value - brute_force(&d)).abs() < 1e-12);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn normal_regime_is_close_to_exact() {
        let d: Vec<f64> = (1..=26).map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 }).collect();
        let zeros = vec![0.0; d.len()];
        let approx = wilcoxon_signed_rank(&d, &zeros).unwrap().p_value;
        let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
        let total: f64 = ranks.iter().sum();
        let plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
        let exact = 2.0 * exact_lower_tail(&ranks, plus.min(total - plus));
        assert!((approx - exact).abs() < 0.01, "{approx} vs {exact}");
    }

    proptest! {
        #[test]
        fn exact_matches_enumeration(pairs in prop::collection::vec((-4i32..=4, -4i32..=4), 1..=12)) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            prop_assume!(d.iter().any(|v| *v != 0.0));
            let r = wilcoxon_signed_rank(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            prop_assert!((r.p_value - brute_force(&d)).abs() < 1e-12);
            let swapped = wilcoxon_signed_rank(&b, &a).unwrap();
            prop_assert_eq!(swapped.p_value, r.p_value);
        }
    }
}

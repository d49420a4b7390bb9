//! Rank tests used to compare replicate errors across scenarios.

use crate::analysis::mid_ranks;
use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn normal_upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// One-sided Wilcoxon rank-sum (Mann–Whitney) p-value for the alternative
/// that `smaller` tends to lie below `larger`. Normal approximation with
/// tie and continuity corrections.
pub fn rank_sum_less(smaller: &[f64], larger: &[f64]) -> Result<f64> {
    let (n1, n2) = (smaller.len(), larger.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::Config("rank-sum test needs two nonempty samples".into()));
    }
    let pooled: Vec<f64> = smaller.iter().chain(larger).copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain { function: "rank_sum_less", value: f64::NAN });
    }
    let ranks = mid_ranks(&pooled);
    let (f1, f2) = (n1 as f64, n2 as f64);
    let w: f64 = ranks[..n1].iter().sum();
    let u = w - f1 * (f1 + 1.0) / 2.0;
    let mean_u = f1 * f2 / 2.0;
    let n = f1 + f2;
    let ties: f64 = tie_groups(&pooled).iter().map(|&t| t * t * t - t).sum();
    let var_u = f1 * f2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var_u <= 0.0 {
        return Ok(1.0);
    }
    let z = (mean_u - u - 0.5) / var_u.sqrt();
    Ok(normal_upper_tail(z))
}

/// One-sided Wilcoxon signed-rank p-value for paired samples, alternative
/// `a < b`. Zero differences are dropped; normal approximation with tie
/// and continuity corrections.
pub fn signed_rank_less(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("paired sample", a.len(), b.len()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain { function: "signed_rank_less", value: f64::NAN });
    }
    if diffs.is_empty() {
        return Ok(1.0);
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = mid_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let n = diffs.len() as f64;
    let ties: f64 = tie_groups(&abs).iter().map(|&t| t * t * t - t).sum();
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    let z = (n * (n + 1.0) / 4.0 - w_plus - 0.5) / var.sqrt();
    Ok(normal_upper_tail(z))
}

fn tie_groups(x: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        if j > i {
            out.push((j - i + 1) as f64);
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_samples_are_significant() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| 100.0 + i as f64).collect();
        assert!(rank_sum_less(&a, &b).unwrap() < 1e-6);
        assert!(rank_sum_less(&b, &a).unwrap() > 0.999);
        assert!(signed_rank_less(&a, &b).unwrap() < 1e-4);
    }

    #[test]
    fn identical_samples_are_not() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let p = rank_sum_less(&a, &a).unwrap();
        assert!(p > 0.4 && p < 0.7, "{p}");
        assert_eq!(signed_rank_less(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn rank_sum_matches_exact_small_case() {
        // U = 0 with n1 = n2 = 4: the exact one-sided p-value is 1/70.
        let p = rank_sum_less(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0, 7.0, 8.0]).unwrap();
        assert!((p - 1.0 / 70.0).abs() < 2e-3, "{p}");
    }

    #[test]
    fn all_tied_gives_one() {
        assert_eq!(rank_sum_less(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
    }
}

//! One-sided significance tests for paired Sharpe comparisons.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Largest sample for which the signed-rank distribution is enumerated exactly.
pub const WILCOXON_EXACT_MAX: usize = 25;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WilcoxonResult {
    /// Nonzero differences used.
    pub n: usize,
    /// Sum of the ranks of positive differences.
    pub w_plus: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Drops zeros and returns `(|d|, is_positive)` with midranks.
fn signed_ranks(diffs: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("paired differences"));
    }
    let mut nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nz.is_empty() {
        return Err(Error::AllZeroDifferences);
    }
    nz.sort_by(|a, b| libm::fabs(*a).total_cmp(&libm::fabs(*b)));
    let n = nz.len();
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && libm::fabs(nz[j + 1]) == libm::fabs(nz[i]) {
            j += 1;
        }
        let mid = (i + j + 2) as f64 / 2.0;
        ranks[i..=j].iter_mut().for_each(|r| *r = mid);
        i = j + 1;
    }
    Ok((ranks, nz.iter().map(|d| *d > 0.0).collect()))
}

/// Exact `P(W+ ≥ observed)` under the null by counting sign assignments
/// over doubled (integer) midranks.
pub fn wilcoxon_exact(diffs: &[f64]) -> Result<WilcoxonResult> {
    let (ranks, pos) = signed_ranks(diffs)?;
    let doubled: Vec<usize> = ranks.iter().map(|r| libm::round(2.0 * r) as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let observed: usize = doubled.iter().zip(&pos).filter(|(_, p)| **p).map(|(r, _)| r).sum();
    let tail: f64 = counts[observed..].iter().sum();
    let n = ranks.len();
    Ok(WilcoxonResult {
        n,
        w_plus: observed as f64 / 2.0,
        p_value: tail / libm::ldexp(1.0, n as i32),
        exact: true,
    })
}

/// Normal approximation with continuity and tie corrections.
pub fn wilcoxon_normal(diffs: &[f64]) -> Result<WilcoxonResult> {
    let (ranks, pos) = signed_ranks(diffs)?;
    let n = ranks.len() as f64;
    let w_plus: f64 = ranks.iter().zip(&pos).filter(|(_, p)| **p).map(|(r, _)| r).sum();
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < ranks.len() {
        let j = ranks[i..].iter().take_while(|r| **r == ranks[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let mean = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let z = (w_plus - mean - 0.5) / libm::sqrt(var);
    Ok(WilcoxonResult { n: ranks.len(), w_plus, p_value: normal_cdf(-z), exact: false })
}

/// One-sided signed-rank test of median difference > 0; exact up to
/// [`WILCOXON_EXACT_MAX`] nonzero differences.
pub fn wilcoxon_one_sided(diffs: &[f64]) -> Result<WilcoxonResult> {
    let n = diffs.iter().filter(|d| **d != 0.0).count();
    if n <= WILCOXON_EXACT_MAX {
        wilcoxon_exact(diffs)
    } else {
        wilcoxon_normal(diffs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn sorted(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("sample"));
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `sup_x (F_a(x) − F_b(x))`, never below 0.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.min(*q),
            (Some(p), None) => *p,
            (None, Some(q)) => *q,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max(i as f64 / na - j as f64 / nb);
    }
    Ok(d)
}

/// Tests whether the CDF of `macd` lies above that of `nmm`, i.e. NMM values
/// tend to be larger. Asymptotic p-value `exp(−2nmD²/(n+m))`.
pub fn ks_one_sided(macd: &[f64], nmm: &[f64]) -> Result<KsResult> {
    let d = ks_statistic(macd, nmm)?;
    let (n, m) = (macd.len() as f64, nmm.len() as f64);
    Ok(KsResult { statistic: d, p_value: libm::exp(-2.0 * n * m * d * d / (n + m)).min(1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_abs_diff_eq!(normal_cdf(1.959963984540054), 0.975, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(-1.0), 0.15865525393145707, epsilon = 1e-14);
    }

    #[test]
    fn wilcoxon_all_positive_five() {
        let r = wilcoxon_one_sided(&[0.3, 1.2, 0.5, 2.0, 0.1]).unwrap();
        assert!(r.exact);
        assert_eq!(r.p_value, 0.03125);
        assert_eq!(r.w_plus, 15.0);
    }

    #[test]
    fn wilcoxon_symmetric() {
        assert!(wilcoxon_one_sided(&[1.0, -1.0]).unwrap().p_value >= 0.5);
        assert_eq!(wilcoxon_one_sided(&[1.0, -1.0, 0.0]).unwrap().n, 2);
        assert!(matches!(wilcoxon_one_sided(&[0.0, 0.0]), Err(Error::AllZeroDifferences)));
    }

    #[test]
    fn wilcoxon_midranks() {
        let (ranks, pos) = signed_ranks(&[2.0, -1.0, 1.0, 3.0, 0.0]).unwrap();
        assert_eq!(ranks, vec![1.5, 1.5, 3.0, 4.0]);
        assert_eq!(pos.iter().filter(|p| **p).count(), 3);
    }

    #[test]
    fn wilcoxon_branch_selection() {
        let d: Vec<f64> = (1..=30).map(|i| i as f64 * if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        assert!(!wilcoxon_one_sided(&d).unwrap().exact);
        assert!(wilcoxon_one_sided(&d[..25]).unwrap().exact);
    }

    #[test]
    fn ks_examples() {
        let a = [0.1, 0.4, 0.2];
        let r = ks_one_sided(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let sep = ks_one_sided(&[0.0, 0.1, 0.2], &[1.0, 1.1]).unwrap();
        assert_eq!(sep.statistic, 1.0);
        assert_abs_diff_eq!(sep.p_value, (-2.0f64 * 6.0 / 5.0).exp(), epsilon = 1e-15);
        assert_eq!(ks_one_sided(&[1.0, 1.1], &[0.0, 0.1]).unwrap().statistic, 0.0);
    }
}

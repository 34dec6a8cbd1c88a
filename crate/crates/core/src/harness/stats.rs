//! Non-parametric comparisons: Wilcoxon rank-sum and signed-rank tests and
//! the Vargha-Delaney A12 effect size.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Combined sample sizes up to this use the exact null distribution.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    /// Rank sum of the first sample (rank-sum) or W+ (signed-rank).
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
    /// Every observation tied: no ordering information, `p_value` is 1.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonVariant {
    /// Independent samples.
    RankSum,
    /// Matched pairs.
    SignedRank,
}

impl WilcoxonVariant {
    pub fn name(self) -> &'static str {
        match self {
            WilcoxonVariant::RankSum => "rank_sum",
            WilcoxonVariant::SignedRank => "signed_rank",
        }
    }

    pub fn run(self, a: &[f64], b: &[f64]) -> Result<TestResult> {
        match self {
            WilcoxonVariant::RankSum => wilcoxon_rank_sum(a, b),
            WilcoxonVariant::SignedRank => wilcoxon_signed_rank(a, b),
        }
    }
}

impl FromStr for WilcoxonVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank_sum" => Ok(WilcoxonVariant::RankSum),
            "signed_rank" => Ok(WilcoxonVariant::SignedRank),
            other => Err(Error::InvalidArgument(format!("unknown Wilcoxon variant `{other}`"))),
        }
    }
}

fn check_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Ranks starting at 1; tied values share the mean of their ranks.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Sizes of the groups of equal values.
fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut start = 0;
    while start < v.len() {
        let mut end = start + 1;
        while end < v.len() && v[end] == v[start] {
            end += 1;
        }
        out.push(end - start);
        start = end;
    }
    out
}

fn two_sided_normal(deviation: f64, sd: f64) -> f64 {
    let z = (deviation.abs() - 0.5).max(0.0) / sd;
    let normal = Normal::standard();
    (2.0 * normal.cdf(-z)).min(1.0)
}

/// Two-sided Wilcoxon rank-sum test with mid-ranks for ties. Exact
/// (permutation distribution of the mid-ranks) for combined size up to
/// [`EXACT_MAX_N`], tie-corrected normal approximation with continuity
/// correction above.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 3 || b.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "rank-sum test needs at least 3 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    check_finite(a, "rank-sum sample")?;
    check_finite(b, "rank-sum sample")?;
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let w: f64 = ranks[..na].iter().sum();
    if pooled.iter().all(|&v| v == pooled[0]) {
        return Ok(TestResult { statistic: w, p_value: 1.0, exact: n <= EXACT_MAX_N, degenerate: true });
    }
    if n <= EXACT_MAX_N {
        // Doubled mid-ranks are integers.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        // counts[k][s]: subsets of size k with doubled rank sum s.
        let mut counts = vec![vec![0f64; total + 1]; na + 1];
        counts[0][0] = 1.0;
        for &r in &doubled {
            for k in (1..=na).rev() {
                for s in (r..=total).rev() {
                    counts[k][s] += counts[k - 1][s - r];
                }
            }
        }
        let center = (na * (n + 1)) as i64;
        let observed = (doubled[..na].iter().sum::<usize>() as i64 - center).abs();
        let (mut extreme, mut all) = (0.0, 0.0);
        for (s, &c) in counts[na].iter().enumerate() {
            all += c;
            if (s as i64 - center).abs() >= observed {
                extreme += c;
            }
        }
        return Ok(TestResult { statistic: w, p_value: (extreme / all).min(1.0), exact: true, degenerate: false });
    }
    let ties: f64 = tie_groups(&pooled).iter().map(|&t| (t * t * t - t) as f64).sum();
    let nf = n as f64;
    let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    let mean = na as f64 * (nf + 1.0) / 2.0;
    Ok(TestResult { statistic: w, p_value: two_sided_normal(w - mean, var.sqrt()), exact: false, degenerate: false })
}

/// Two-sided Wilcoxon signed-rank test on matched pairs `(a[i], b[i])`.
/// Zero differences are dropped; ties among the rest get mid-ranks.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), got: b.len() });
    }
    if a.len() < 3 {
        return Err(Error::InvalidArgument(format!("signed-rank test needs at least 3 pairs, got {}", a.len())));
    }
    check_finite(a, "signed-rank sample")?;
    check_finite(b, "signed-rank sample")?;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Ok(TestResult { statistic: 0.0, p_value: 1.0, exact: true, degenerate: true });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let n = diffs.len();
    if n <= EXACT_MAX_N {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0f64; total + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let observed = ((2.0 * 2.0 * w_plus).round() as i64 - total as i64).abs();
        let (mut extreme, mut all) = (0.0, 0.0);
        for (s, &c) in counts.iter().enumerate() {
            all += c;
            if (2 * s as i64 - total as i64).abs() >= observed {
                extreme += c;
            }
        }
        return Ok(TestResult { statistic: w_plus, p_value: (extreme / all).min(1.0), exact: true, degenerate: false });
    }
    let nf = n as f64;
    let ties: f64 = tie_groups(&abs).iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    let mean = nf * (nf + 1.0) / 4.0;
    Ok(TestResult { statistic: w_plus, p_value: two_sided_normal(w_plus - mean, var.sqrt()), exact: false, degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    /// Band of `|a12 - 0.5|`: below 0.06, 0.14 and 0.21 respectively.
    pub fn of(a12: f64) -> Self {
        let d = (a12 - 0.5).abs();
        if d < 0.06 {
            Magnitude::Negligible
        } else if d < 0.14 {
            Magnitude::Small
        } else if d < 0.21 {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Magnitude {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negligible" => Ok(Magnitude::Negligible),
            "small" => Ok(Magnitude::Small),
            "medium" => Ok(Magnitude::Medium),
            "large" => Ok(Magnitude::Large),
            other => Err(Error::InvalidArgument(format!("unknown magnitude `{other}`"))),
        }
    }
}

/// Probability that a value from `a` exceeds one from `b`, ties counting
/// half, computed from the mid-rank sum of `a` in the pooled sample.
pub fn vargha_delaney_a12(a: &[f64], b: &[f64]) -> Result<(f64, Magnitude)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("A12 needs two non-empty samples".into()));
    }
    check_finite(a, "A12 sample")?;
    check_finite(b, "A12 sample")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let r: f64 = midranks(&pooled)[..a.len()].iter().sum();
    let a12 = ((r / na - (na + 1.0) / 2.0) / nb).clamp(0.0, 1.0);
    Ok((a12, Magnitude::of(a12)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Every size-`k` subset of `0..n`.
    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                go(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        go(0, n, k, &mut Vec::new(), &mut out);
        out
    }

    /// Two-sided p-value by enumerating every assignment of the pooled
    /// mid-ranks to the first group.
    fn brute_rank_sum_p(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let ranks = midranks(&pooled);
        let n = pooled.len();
        let mean = a.len() as f64 * (n + 1) as f64 / 2.0;
        let w: f64 = ranks[..a.len()].iter().sum();
        let all = subsets(n, a.len());
        let extreme = all
            .iter()
            .filter(|s| (s.iter().map(|&i| ranks[i]).sum::<f64>() - mean).abs() >= (w - mean).abs() - 1e-9)
            .count();
        extreme as f64 / all.len() as f64
    }

    fn brute_signed_rank_p(a: &[f64], b: &[f64]) -> f64 {
        let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
        let ranks = midranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
        let total: f64 = ranks.iter().sum();
        let w: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
        let n = diffs.len();
        let extreme = (0u32..1 << n)
            .filter(|mask| {
                let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
                (s - total / 2.0).abs() >= (w - total / 2.0).abs() - 1e-9
            })
            .count();
        extreme as f64 / (1u64 << n) as f64
    }

    fn brute_a12(a: &[f64], b: &[f64]) -> f64 {
        let mut score = 0.0;
        for x in a {
            for y in b {
                if x > y {
                    score += 1.0;
                } else if x == y {
                    score += 0.5;
                }
            }
        }
        score / (a.len() * b.len()) as f64
    }

    #[test]
    fn midrank_examples() {
        assert_eq!(midranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(midranks(&[5.0, 5.0, 1.0, 5.0]), vec![3.0, 3.0, 1.0, 3.0]);
    }

    #[test]
    fn rank_sum_examples() {
        let t = wilcoxon_rank_sum(&[1.0, 2.0, 3.0, 4.0], &[10.0, 11.0, 12.0, 13.0]).unwrap();
        assert!(t.exact);
        assert_eq!(t.statistic, 10.0);
        // Only the two extreme assignments out of C(8, 4) = 70.
        assert!((t.p_value - 2.0 / 70.0).abs() < 1e-15);
        assert_eq!(t.p_value, brute_rank_sum_p(&[1.0, 2.0, 3.0, 4.0], &[10.0, 11.0, 12.0, 13.0]));
        let same = [4.0, 1.0, 3.0, 3.0];
        assert_eq!(wilcoxon_rank_sum(&same, &[3.0, 4.0, 1.0, 3.0]).unwrap().p_value, 1.0);
        assert!(wilcoxon_rank_sum(&[1.0, 2.0], &[3.0, 4.0, 5.0]).is_err());
        assert!(wilcoxon_rank_sum(&[1.0, 2.0, f64::NAN], &[3.0, 4.0, 5.0]).is_err());
        let flat = wilcoxon_rank_sum(&[2.0; 4], &[2.0; 5]).unwrap();
        assert!(flat.degenerate && flat.p_value == 1.0);
    }

    #[test]
    fn normal_approximation_above_twenty() {
        // 11 + 11: a shift of one standard block; compare against the
        // tie-free closed form computed by hand.
        let a: Vec<f64> = (0..11).map(f64::from).collect();
        let b: Vec<f64> = (0..11).map(|i| f64::from(i) + 5.5).collect();
        let t = wilcoxon_rank_sum(&a, &b).unwrap();
        assert!(!t.exact);
        let na = 11.0;
        let mean = na * 23.0 / 2.0;
        let sd = (na * na * 23.0 / 12.0f64).sqrt();
        let z = ((t.statistic - mean).abs() - 0.5) / sd;
        let expected = 2.0 * Normal::standard().cdf(-z);
        assert!((t.p_value - expected).abs() < 1e-12);
        assert!(t.p_value > 0.0 && t.p_value < 0.05);
        // Approximation and exact agree loosely at the boundary size.
        let exact = wilcoxon_rank_sum(&a[..10], &b[..10]).unwrap();
        let approx = wilcoxon_rank_sum(&a[..11], &b[..11]).unwrap();
        assert!((exact.p_value - approx.p_value).abs() < 0.05);
    }

    #[test]
    fn rank_sum_matches_enumeration_for_small_sizes() {
        let mut rng = crate::seed::rng(3);
        use rand::Rng;
        for na in 3..=9 {
            for nb in 3..=(12 - na) {
                for _ in 0..4 {
                    // A coarse grid forces ties often.
                    let a: Vec<f64> = (0..na).map(|_| f64::from(rng.gen_range(0..6))).collect();
                    let b: Vec<f64> = (0..nb).map(|_| f64::from(rng.gen_range(0..6))).collect();
                    let t = wilcoxon_rank_sum(&a, &b).unwrap();
                    if t.degenerate {
                        continue;
                    }
                    let brute = brute_rank_sum_p(&a, &b);
                    assert!((t.p_value - brute).abs() < 1e-12, "{a:?} {b:?}: {} vs {brute}", t.p_value);
                }
            }
        }
    }

    #[test]
    fn signed_rank_matches_enumeration() {
        let mut rng = crate::seed::rng(4);
        use rand::Rng;
        for n in 3..=12 {
            for _ in 0..5 {
                let a: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..5))).collect();
                let b: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..5))).collect();
                let t = wilcoxon_signed_rank(&a, &b).unwrap();
                if t.degenerate {
                    continue;
                }
                assert!((t.p_value - brute_signed_rank_p(&a, &b)).abs() < 1e-12);
            }
        }
        assert!(wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
        assert!(wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().degenerate);
        let big: Vec<f64> = (0..30).map(f64::from).collect();
        let shifted: Vec<f64> = big.iter().map(|v| v - 1.0 - (v * 0.37).sin()).collect();
        let t = WilcoxonVariant::SignedRank.run(&big, &shifted).unwrap();
        assert!(!t.exact && t.p_value < 1e-3);
    }

    #[test]
    fn a12_examples() {
        assert_eq!(vargha_delaney_a12(&[1.0, 2.0], &[1.0, 3.0]).unwrap().0, 0.375);
        assert_eq!(vargha_delaney_a12(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), (1.0, Magnitude::Large));
        assert_eq!(vargha_delaney_a12(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), (0.5, Magnitude::Negligible));
        assert!(vargha_delaney_a12(&[], &[1.0]).is_err());
        assert_eq!(Magnitude::of(0.55), Magnitude::Negligible);
        assert_eq!(Magnitude::of(0.57), Magnitude::Small);
        assert_eq!(Magnitude::of(0.36), Magnitude::Medium);
        assert_eq!(Magnitude::of(0.72), Magnitude::Large);
        for m in [Magnitude::Negligible, Magnitude::Small, Magnitude::Medium, Magnitude::Large] {
            assert_eq!(m.name().parse::<Magnitude>().unwrap(), m);
        }
    }

    proptest! {
        #[test]
        fn a12_matches_pair_count(
            a in prop::collection::vec(-5i32..5, 1..12),
            b in prop::collection::vec(-5i32..5, 1..12),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let (x, _) = vargha_delaney_a12(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert!((x - brute_a12(&a, &b)).abs() < 1e-12);
            let (y, _) = vargha_delaney_a12(&b, &a).unwrap();
            prop_assert!((x + y - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rank_sum_is_symmetric_and_bounded(
            a in prop::collection::vec(-1e3f64..1e3, 3..15),
            b in prop::collection::vec(-1e3f64..1e3, 3..15),
        ) {
            let x = wilcoxon_rank_sum(&a, &b).unwrap();
            let y = wilcoxon_rank_sum(&b, &a).unwrap();
            prop_assert!(x.p_value > 0.0 && x.p_value <= 1.0);
            prop_assert!((x.p_value - y.p_value).abs() < 1e-12);
        }
    }
}

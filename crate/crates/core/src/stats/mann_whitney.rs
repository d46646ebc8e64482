use alloc::vec;
use alloc::vec::Vec;

use super::special::normal_sf;
use super::{average_ranks, check_finite, clamp_p, tie_groups, Alternative, Method, StatsError, TestResult};

/// Samples with `n1 * n2` up to this size and no ties use the exact null
/// distribution.
pub const EXACT_LIMIT: usize = 400;

/// Two-sided Mann–Whitney U test.
///
/// `statistic` is U for `x`: the number of pairs with `x_i > y_j`, plus half
/// the number of tied pairs.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(x)?;
    check_finite(y)?;
    let (n1, n2) = (x.len(), y.len());

    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = average_ranks(&pooled);
    let rank_sum_x: f64 = ranks[..n1].iter().sum();
    let u = rank_sum_x - (n1 * (n1 + 1)) as f64 / 2.0;

    let ties = tie_groups(&pooled);
    let has_ties = ties.iter().any(|&t| t > 1);

    let (p, method) = if !has_ties && n1 * n2 <= EXACT_LIMIT {
        (exact_two_sided(u as usize, n1, n2), Method::Exact)
    } else {
        (normal_two_sided(u, n1, n2, &ties), Method::NormalApproximation)
    };

    Ok(TestResult {
        statistic: u,
        p_value: clamp_p(p),
        method,
        alternative: Alternative::TwoSided,
        n1,
        n2,
    })
}

/// Counts of each U value over all `C(n1+n2, n1)` arrangements.
///
/// Splits on whether the largest pooled value is an x (beating all `n`
/// y values) or a y.
fn u_distribution(n1: usize, n2: usize) -> Vec<u64> {
    // table[j] holds the distribution for (i, j) while sweeping i upward
    let mut table: Vec<Vec<u64>> = (0..=n2).map(|_| vec![1u64]).collect();
    for i in 1..=n1 {
        let mut next: Vec<Vec<u64>> = Vec::with_capacity(n2 + 1);
        next.push(vec![1u64]);
        for j in 1..=n2 {
            let mut counts = vec![0u64; i * j + 1];
            // largest is x: U shifts by j
            for (u, &c) in table[j].iter().enumerate() {
                counts[u + j] += c;
            }
            // largest is y
            for (u, &c) in next[j - 1].iter().enumerate() {
                counts[u] += c;
            }
            next.push(counts);
        }
        table = next;
    }
    table.pop().expect("n2 + 1 entries")
}

fn exact_two_sided(u: usize, n1: usize, n2: usize) -> f64 {
    let counts = u_distribution(n1, n2);
    let total: u64 = counts.iter().sum();
    let lower: u64 = counts[..=u].iter().sum();
    let upper: u64 = counts[u..].iter().sum();
    let tail = lower.min(upper) as f64 / total as f64;
    (2.0 * tail).min(1.0)
}

fn normal_two_sided(u: f64, n1: usize, n2: usize, ties: &[usize]) -> f64 {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let n = n1f + n2f;
    let mean = n1f * n2f / 2.0;
    let tie_term: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let variance = n1f * n2f / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        return 1.0;
    }
    let z = ((u - mean).abs() - 0.5) / libm::sqrt(variance);
    (2.0 * normal_sf(z)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[0.0, -1.0]).unwrap();
        assert_eq!(r.statistic, 6.0);
        assert_eq!(r.method, Method::Exact);
        assert!((r.p_value - 0.2).abs() < 1e-15);

        let r = mann_whitney_u(&[5.0], &[1.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn identical_samples_sit_at_the_centre() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let r = mann_whitney_u(&x, &x).unwrap();
        assert_eq!(r.statistic, 8.0);
        assert_eq!(r.method, Method::NormalApproximation);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn tied_normal_approximation_matches_scipy() {
        // scipy.stats.mannwhitneyu(x, y, method="asymptotic")
        let x = [1.5, 2.5, 2.5, 4.0, 7.0, 8.5];
        let y = [2.5, 3.0, 3.0, 6.0, 9.0, 9.0, 10.0, 11.0];
        let r = mann_whitney_u(&x, &y).unwrap();
        assert_eq!(r.statistic, 12.0);
        assert!((r.p_value - 0.13503705165209334).abs() < 1e-12);
    }

    #[test]
    fn above_exact_limit_uses_normal() {
        let x: Vec<f64> = (0..21).map(|i| i as f64 * 1.01).collect();
        let y: Vec<f64> = (0..20).map(|i| i as f64 + 0.55).collect();
        let r = mann_whitney_u(&x, &y).unwrap();
        assert_eq!(r.method, Method::NormalApproximation);
    }

    #[test]
    fn all_values_equal() {
        let r = mann_whitney_u(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(r.statistic, 3.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(mann_whitney_u(&[], &[1.0]), Err(StatsError::EmptySample));
        assert_eq!(mann_whitney_u(&[1.0], &[]), Err(StatsError::EmptySample));
        assert_eq!(mann_whitney_u(&[f64::NAN], &[1.0]), Err(StatsError::NonFinite));
    }

    #[test]
    fn distribution_sums_to_binomial() {
        let d = u_distribution(3, 2);
        assert_eq!(d, [1, 1, 2, 2, 2, 1, 1]);
        assert_eq!(u_distribution(20, 20).iter().sum::<u64>(), 137_846_528_820);
    }
}

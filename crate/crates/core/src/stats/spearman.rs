use super::special::student_t_two_sided;
use super::{average_ranks, check_finite, clamp_p, Alternative, Method, StatsError, TestResult};

/// Spearman rank correlation with a two-sided t-approximation p-value.
///
/// Ties receive average ranks; ρ is the Pearson correlation of the ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::InsufficientData("rank correlation needs at least 3 pairs"));
    }
    check_finite(x)?;
    check_finite(y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Degenerate);
    }
    let rho = (sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0);
    let df = n - 2.0;
    let p = if rho.abs() == 1.0 {
        0.0
    } else {
        let t = rho * libm::sqrt(df / ((1.0 - rho) * (1.0 + rho)));
        student_t_two_sided(t, df)
    };
    Ok(TestResult {
        statistic: rho,
        p_value: clamp_p(p),
        method: Method::TApproximation,
        alternative: Alternative::TwoSided,
        n1: x.len(),
        n2: y.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_point_example() {
        let r = spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.statistic - 0.8).abs() < 1e-12);
        assert!((r.p_value - 0.2).abs() < 1e-10);
    }

    #[test]
    fn monotone() {
        let x = [1.0, 2.0, 5.0, 9.0, 10.0];
        let up = [0.1, 0.2, 0.3, 0.8, 4.0];
        let down = [4.0, 0.8, 0.3, 0.2, 0.1];
        assert_eq!(spearman_rho(&x, &up).unwrap().statistic, 1.0);
        assert_eq!(spearman_rho(&x, &down).unwrap().statistic, -1.0);
        let p = spearman_rho(&x, &up).unwrap().p_value;
        assert!(p > 0.0 && p < 1e-300);
    }

    #[test]
    fn matches_scipy() {
        // scipy.stats.spearmanr
        let r = spearman_rho(
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
            &[2.0, 1.0, 4.0, 3.0, 7.0, 5.0, 6.0],
        )
        .unwrap();
        assert!((r.statistic - 0.8214285714285715).abs() < 1e-12);
        assert!((r.p_value - 0.023448808345691505).abs() < 1e-10);

        let r = spearman_rho(&[1.0, 2.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 2.0, 5.0]).unwrap();
        assert!((r.statistic - 0.7631578947368421).abs() < 1e-12);
        assert!((r.p_value - 0.1333391195318063).abs() < 1e-10);
    }

    #[test]
    fn errors() {
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(StatsError::LengthMismatch(3, 2)));
        assert!(matches!(spearman_rho(&[1.0, 2.0], &[1.0, 2.0]), Err(StatsError::InsufficientData(_))));
        assert_eq!(spearman_rho(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(StatsError::Degenerate));
    }
}

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{check_finite, StatsError};

/// Grid extends this many bandwidths past the sample extremes.
const GRID_PAD_BANDWIDTHS: f64 = 4.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityCurve {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
            .sum()
    }
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    libm::sqrt(ss / (n - 1.0))
}

/// Scott's rule, `σ̂ · n^(−1/5)` with the `n − 1` standard deviation.
pub fn scott_bandwidth(values: &[f64]) -> Result<f64, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::InsufficientData("density estimate needs at least 2 values"));
    }
    check_finite(values)?;
    let sd = sample_std(values);
    if sd == 0.0 {
        return Err(StatsError::InsufficientData("sample standard deviation is zero"));
    }
    Ok(sd * libm::pow(values.len() as f64, -0.2))
}

/// Gaussian kernel density estimate on `grid_size` evenly spaced points
/// spanning `[min − 4h, max + 4h]`.
pub fn kde_scott(values: &[f64], grid_size: usize) -> Result<DensityCurve, StatsError> {
    let h = scott_bandwidth(values)?;
    if grid_size < 2 {
        return Err(StatsError::InsufficientData("grid needs at least 2 points"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - GRID_PAD_BANDWIDTHS * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + GRID_PAD_BANDWIDTHS * h;
    let step = (hi - lo) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|i| lo + step * i as f64).collect();
    let norm = INV_SQRT_2PI / (values.len() as f64 * h);
    let density = grid
        .iter()
        .map(|&x| {
            let s: f64 = values
                .iter()
                .map(|&v| {
                    let z = (x - v) / h;
                    libm::exp(-0.5 * z * z)
                })
                .sum();
            s * norm
        })
        .collect();
    Ok(DensityCurve {
        grid,
        density,
        bandwidth: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn bandwidth_for_n100_sd2() {
        // a sample with exactly n = 100 and n−1 standard deviation 2
        let mut values = vec![0.0; 100];
        for (i, v) in values.iter_mut().enumerate() {
            *v = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let sd = sample_std(&values);
        for v in &mut values {
            *v *= 2.0 / sd;
        }
        let h = scott_bandwidth(&values).unwrap();
        assert!((h - 0.7962143411069944).abs() < 1e-12, "{h}");
    }

    #[test]
    fn integrates_to_one() {
        let values = [-1.3, 0.2, 0.25, 2.0, 3.7, 4.1];
        let curve = kde_scott(&values, 512).unwrap();
        assert!((curve.integral() - 1.0).abs() < 1e-3);
        assert!(curve.density.iter().all(|&d| d >= 0.0));
        assert_eq!(curve.grid.len(), 512);
        assert!((curve.grid[0] - (-1.3 - 4.0 * curve.bandwidth)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(kde_scott(&[0.0], 100), Err(StatsError::InsufficientData(_))));
        assert!(matches!(kde_scott(&[3.0, 3.0, 3.0], 100), Err(StatsError::InsufficientData(_))));
        assert!(matches!(kde_scott(&[1.0, 2.0], 1), Err(StatsError::InsufficientData(_))));
    }
}

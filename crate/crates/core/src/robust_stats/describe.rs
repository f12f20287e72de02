use serde::Serialize;

use super::{check_finite, mean_and_ss, StatsError};

/// Two-sided 95% normal quantile used for the mean confidence interval.
pub const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub std_err_mean: f64,
    pub ci95_lower: f64,
    pub ci95_upper: f64,
    pub n: usize,
}

/// Mean, sample SD (n - 1), standard error and a normal-quantile 95% CI.
pub fn describe(values: &[f64]) -> Result<DistributionSummary, StatsError> {
    let n = values.len();
    if n < 2 {
        return Err(StatsError::InsufficientData { needed: 2, got: n });
    }
    check_finite(values)?;
    let (mean, ss) = mean_and_ss(values);
    let std_dev = (ss / (n - 1) as f64).sqrt();
    let std_err_mean = std_dev / (n as f64).sqrt();
    Ok(DistributionSummary {
        mean,
        std_dev,
        std_err_mean,
        ci95_lower: mean - Z_975 * std_err_mean,
        ci95_upper: mean + Z_975 * std_err_mean,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample() {
        let d = describe(&[5.0; 4]).unwrap();
        assert_eq!(d.mean, 5.0);
        assert_eq!(d.std_dev, 0.0);
        assert_eq!(d.ci95_lower, 5.0);
    }

    #[test]
    fn zero_one_two() {
        let d = describe(&[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(d.mean, 1.0);
        assert_eq!(d.std_dev, 1.0);
        assert!((d.std_err_mean - 0.577_350_269_189_625_8).abs() < 1e-15);
        assert_eq!(d.n, 3);
    }

    #[test]
    fn too_small_or_non_finite() {
        assert_eq!(describe(&[1.0]), Err(StatsError::InsufficientData { needed: 2, got: 1 }));
        assert_eq!(describe(&[1.0, f64::NAN]), Err(StatsError::NonFinite));
    }

    #[test]
    fn affine_equivariance() {
        let x = [0.3, -1.2, 2.5, 0.0, 7.1];
        let (a, b) = (-2.5, 10.0);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let (dx, dy) = (describe(&x).unwrap(), describe(&y).unwrap());
        assert!((dy.mean - (a * dx.mean + b)).abs() < 1e-12);
        assert!((dy.std_dev - a.abs() * dx.std_dev).abs() < 1e-12);
    }
}

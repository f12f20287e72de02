//! Kolmogorov-Smirnov test of normality with estimated mean and SD
//! (Lilliefors), with the null distribution of `D` simulated per sample size.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{check_finite, mean_and_ss, MonteCarlo, StatsError};
use crate::par::{map_indexed, rng_for, Stream};
use crate::special::normal_cdf;

pub const MIN_TEST_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityResult {
    pub method: &'static str,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub mc_samples: usize,
}

/// `D = sup |F_n(x) - Φ((x - mean) / sd)|` with the sample SD (n - 1).
///
/// Accepts any sample of at least two distinct values; the test itself
/// requires [`MIN_TEST_SIZE`].
pub fn lilliefors_statistic(values: &[f64]) -> Result<f64, StatsError> {
    let n = values.len();
    if n < 2 {
        return Err(StatsError::InsufficientData { needed: 2, got: n });
    }
    check_finite(values)?;
    let (mean, ss) = mean_and_ss(values);
    let sd = (ss / (n - 1) as f64).sqrt();
    if !(sd > 0.0) {
        return Err(StatsError::DegenerateSample);
    }
    let mut z: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    Ok(ks_sorted(&z))
}

fn ks_sorted(z: &[f64]) -> f64 {
    let nf = z.len() as f64;
    z.iter().enumerate().fold(0.0f64, |d, (i, &zi)| {
        let f = normal_cdf(zi);
        let above = (i + 1) as f64 / nf - f;
        let below = f - i as f64 / nf;
        d.max(above).max(below)
    })
}

/// Simulated distribution of `D` under normality for one sample size.
#[derive(Debug, Clone)]
pub struct LillieforsNull {
    n: usize,
    sorted: Vec<f64>,
}

impl LillieforsNull {
    pub fn new(n: usize, mc: &MonteCarlo) -> Result<Self, StatsError> {
        if n < MIN_TEST_SIZE {
            return Err(StatsError::InsufficientData { needed: MIN_TEST_SIZE, got: n });
        }
        if mc.samples == 0 {
            return Err(StatsError::NoMonteCarloSamples);
        }
        let mut sorted = map_indexed(mc.execution, mc.samples, |t| {
            let mut rng = rng_for(mc.seed, Stream::Lilliefors, n as u64, t as u64);
            let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            lilliefors_statistic(&x).expect("continuous sample")
        });
        sorted.sort_by(f64::total_cmp);
        Ok(Self { n, sorted })
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    /// `(1 + #{D_sim >= d}) / (N + 1)`.
    pub fn p_value(&self, d: f64) -> f64 {
        let below = self.sorted.partition_point(|&s| s < d);
        let at_least = self.sorted.len() - below;
        (1 + at_least) as f64 / (self.sorted.len() + 1) as f64
    }

    /// Run the test on a sample of the calibrated size.
    pub fn test(&self, values: &[f64]) -> Result<NormalityResult, StatsError> {
        if values.len() != self.n {
            return Err(StatsError::InsufficientData { needed: self.n, got: values.len() });
        }
        let statistic = lilliefors_statistic(values)?;
        Ok(NormalityResult {
            method: "lilliefors-monte-carlo",
            statistic,
            p_value: self.p_value(statistic),
            n: self.n,
            mc_samples: self.sorted.len(),
        })
    }
}

pub fn lilliefors_test(values: &[f64], mc: &MonteCarlo) -> Result<NormalityResult, StatsError> {
    if values.len() < MIN_TEST_SIZE {
        return Err(StatsError::InsufficientData { needed: MIN_TEST_SIZE, got: values.len() });
    }
    // reject degenerate input before paying for the simulation
    lilliefors_statistic(values)?;
    LillieforsNull::new(values.len(), mc)?.test(values)
}

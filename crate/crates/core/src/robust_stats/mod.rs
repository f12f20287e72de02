//! Descriptive summaries, jackknife-distance outlier screening and the
//! Lilliefors normality test.

mod describe;
mod jackknife;
mod lilliefors;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Execution;

pub use describe::{describe, DistributionSummary, Z_975};
pub use jackknife::{
    detect_outliers, jackknife_distances, Grouping, JackknifeNull, OutlierConfig, OutlierReport, SkippedGroup,
    ThresholdRule,
};
pub use lilliefors::{lilliefors_statistic, lilliefors_test, LillieforsNull, NormalityResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("sample has zero variance")]
    DegenerateSample,
    #[error("sample contains non-finite values")]
    NonFinite,
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("Monte Carlo sample count must be positive")]
    NoMonteCarloSamples,
}

/// Monte Carlo settings shared by every simulated null distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl MonteCarlo {
    pub const DEFAULT_SAMPLES: usize = 10_000;

    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed, execution: Execution::default() }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Two-pass mean and sum of squared deviations.
fn mean_and_ss(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, ss)
}

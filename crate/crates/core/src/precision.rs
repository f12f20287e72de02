//! Repeatability and reproducibility of buffer measurements, their limits,
//! and the critical difference of a multi-operator mean to the reference.
//!
//! Variance components come from a one-way operator analysis inside every
//! parcel, pooled over parcels:
//!
//! * `θ_r²` is the within-cell (parcel × operator) variance pooled by
//!   degrees of freedom;
//! * `θ_L² = max(0, (MS_between − θ_r²) / n̄)` where `MS_between` pools the
//!   between-operator sums of squares of all parcels and
//!   `n̄ = Σ_p (N_p − Σ n_pi² / N_p) / Σ_p (k_p − 1)` is the unbalanced
//!   average replicate count;
//! * `θ_R² = θ_r² + θ_L²`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{partition_by_image, BufferRecord};
use crate::special::normal_quantile;

/// Multiplier of the ISO 5725 rule of thumb `R = 2.8 σ_R`.
pub const RULE_OF_THUMB: f64 = 2.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecisionError {
    #[error("probability {0} outside (0, 1)")]
    Probability(f64),
    #[error("need at least 2 results to compare, got {0}")]
    TooFewResults(usize),
    #[error("standard deviation must be finite and non-negative, got {0}")]
    NegativeSd(f64),
    #[error("need at least {needed} operators, got {got}")]
    TooFewOperators { needed: usize, got: usize },
    #[error("{p} operators but {got} replicate counts")]
    CountMismatch { p: usize, got: usize },
    #[error("replicate counts must be at least 1")]
    BadReplicateCount,
    #[error("every parcel × operator cell has a single result; repeatability is undefined")]
    RepeatabilityUndefined,
    #[error(
        "negative radicand in critical difference: reproducibility term {reproducibility_term} < repeatability term {repeatability_term}"
    )]
    NegativeRadicand { reproducibility_term: f64, repeatability_term: f64 },
    #[error("no retained records for image {0:?}")]
    Empty(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMode {
    /// `f · θ · √n` with `f` the two-sided normal quantile.
    Exact,
    /// `2.8 · θ`.
    #[default]
    RuleOfThumb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub mode: LimitMode,
    pub probability: f64,
    /// Number of results compared by a limit.
    pub compared_results: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self { mode: LimitMode::RuleOfThumb, probability: 0.95, compared_results: 2 }
    }
}

/// Multiplier applied to a standard deviation to get a limit.
pub fn limit_factor(prob: f64, n: usize, mode: LimitMode) -> Result<f64, PrecisionError> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(PrecisionError::Probability(prob));
    }
    if n < 2 {
        return Err(PrecisionError::TooFewResults(n));
    }
    Ok(match mode {
        LimitMode::Exact => normal_quantile(0.5 + prob / 2.0) * (n as f64).sqrt(),
        LimitMode::RuleOfThumb => RULE_OF_THUMB,
    })
}

fn check_sd(sd: f64) -> Result<(), PrecisionError> {
    if sd >= 0.0 && sd.is_finite() {
        Ok(())
    } else {
        Err(PrecisionError::NegativeSd(sd))
    }
}

pub fn reproducibility_limit(sd_reproducibility: f64, prob: f64, n: usize, mode: LimitMode) -> Result<f64, PrecisionError> {
    check_sd(sd_reproducibility)?;
    Ok(limit_factor(prob, n, mode)? * sd_reproducibility)
}

pub fn repeatability_limit(sd_repeatability: f64, prob: f64, n: usize, mode: LimitMode) -> Result<f64, PrecisionError> {
    check_sd(sd_repeatability)?;
    Ok(limit_factor(prob, n, mode)? * sd_repeatability)
}

/// `CD = √((2.8 θ_R)² − (2.8 θ_r)² (1 − Σ(1/n_i) / p)) / √(2p)` for the mean
/// of `p` operators with `n_i` results each.
pub fn critical_difference(
    sd_reproducibility: f64,
    sd_repeatability: f64,
    p: usize,
    n_i: &[f64],
) -> Result<f64, PrecisionError> {
    check_sd(sd_reproducibility)?;
    check_sd(sd_repeatability)?;
    if p < 1 {
        return Err(PrecisionError::TooFewOperators { needed: 1, got: p });
    }
    if n_i.len() != p {
        return Err(PrecisionError::CountMismatch { p, got: n_i.len() });
    }
    if n_i.iter().any(|&n| !(n >= 1.0)) {
        return Err(PrecisionError::BadReplicateCount);
    }
    let pf = p as f64;
    let inv_sum: f64 = n_i.iter().map(|n| 1.0 / n).sum();
    let reproducibility_term = (RULE_OF_THUMB * sd_reproducibility).powi(2);
    let repeatability_term = (RULE_OF_THUMB * sd_repeatability).powi(2) * (1.0 - inv_sum / pf);
    let radicand = reproducibility_term - repeatability_term;
    if radicand < 0.0 {
        return Err(PrecisionError::NegativeRadicand { reproducibility_term, repeatability_term });
    }
    Ok(radicand.sqrt() / (2.0 * pf).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceComponents {
    pub repeatability_var: f64,
    pub between_operator_var: f64,
    pub reproducibility_var: f64,
    pub sd_repeatability: f64,
    pub sd_between_operator: f64,
    pub sd_reproducibility: f64,
    pub df_within: usize,
    pub df_between: usize,
    pub ms_between: f64,
    pub n_bar: f64,
    pub parcels: usize,
    pub operators: usize,
}

/// Pooled one-way variance components of the non-outlier records of one
/// image.
pub fn variance_components(records: &[BufferRecord]) -> Result<VarianceComponents, PrecisionError> {
    let mut by_parcel: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    let kept = || records.iter().filter(|r| !r.outlier);
    // shift by one value so identical inputs give exact zeros
    let shift = kept().next().map_or(0.0, |r| r.buffer);
    for r in kept() {
        by_parcel.entry(&r.parcel_id).or_default().entry(&r.operator_id).or_default().push(r.buffer - shift);
    }
    let operators: std::collections::BTreeSet<&str> = by_parcel.values().flat_map(|c| c.keys().copied()).collect();
    if operators.len() < 2 {
        return Err(PrecisionError::TooFewOperators { needed: 2, got: operators.len() });
    }

    let (mut ss_within, mut df_within) = (0.0, 0usize);
    let (mut ss_between, mut df_between, mut n_weight) = (0.0, 0usize, 0.0);
    for cells in by_parcel.values() {
        let n_total: usize = cells.values().map(Vec::len).sum();
        let grand = cells.values().flatten().sum::<f64>() / n_total as f64;
        for values in cells.values() {
            let m = values.iter().sum::<f64>() / values.len() as f64;
            ss_within += values.iter().map(|v| (v - m).powi(2)).sum::<f64>();
            df_within += values.len() - 1;
            ss_between += values.len() as f64 * (m - grand).powi(2);
        }
        df_between += cells.len() - 1;
        let nt = n_total as f64;
        n_weight += nt - cells.values().map(|v| (v.len() as f64).powi(2)).sum::<f64>() / nt;
    }
    if df_within == 0 {
        return Err(PrecisionError::RepeatabilityUndefined);
    }
    if df_between == 0 {
        // no parcel measured by two operators
        return Err(PrecisionError::TooFewOperators { needed: 2, got: 1 });
    }

    let repeatability_var = ss_within / df_within as f64;
    let ms_between = ss_between / df_between as f64;
    let n_bar = n_weight / df_between as f64;
    let between_operator_var = ((ms_between - repeatability_var) / n_bar).max(0.0);
    let reproducibility_var = repeatability_var + between_operator_var;
    Ok(VarianceComponents {
        repeatability_var,
        between_operator_var,
        reproducibility_var,
        sd_repeatability: repeatability_var.sqrt(),
        sd_between_operator: between_operator_var.sqrt(),
        sd_reproducibility: reproducibility_var.sqrt(),
        df_within,
        df_between,
        ms_between,
        n_bar,
        parcels: by_parcel.len(),
        operators: operators.len(),
    })
}

/// One row of the tolerance table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecisionSummary {
    pub image_id: String,
    /// Mean retained buffer.
    pub bias: f64,
    pub sd_repeatability: f64,
    pub repeatability_limit: f64,
    pub sd_reproducibility: f64,
    pub reproducibility_limit: f64,
    pub critical_difference: f64,
    pub limit_mode: LimitMode,
    pub limit_factor: f64,
    /// Operator count `p`.
    pub operators: usize,
    /// `n_i` per operator: harmonic mean of its retained replicates per
    /// parcel.
    pub replicates: BTreeMap<String, f64>,
    pub records: usize,
    pub components: VarianceComponents,
}

/// Per image (sorted by id), using only records not flagged as outliers.
pub fn precision_report(records: &[BufferRecord], config: &ToleranceConfig) -> Result<Vec<PrecisionSummary>, PrecisionError> {
    partition_by_image(records).into_iter().map(|(image, recs)| image_summary(&image, &recs, config)).collect()
}

pub fn image_summary(
    image_id: &str,
    records: &[BufferRecord],
    config: &ToleranceConfig,
) -> Result<PrecisionSummary, PrecisionError> {
    let kept: Vec<&BufferRecord> = records.iter().filter(|r| !r.outlier).collect();
    if kept.is_empty() {
        return Err(PrecisionError::Empty(image_id.to_string()));
    }
    let bias = kept.iter().map(|r| r.buffer).sum::<f64>() / kept.len() as f64;
    let vc = variance_components(records)?;
    let factor = limit_factor(config.probability, config.compared_results, config.mode)?;

    let mut cells: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for r in &kept {
        *cells.entry(&r.operator_id).or_default().entry(&r.parcel_id).or_default() += 1;
    }
    let replicates: BTreeMap<String, f64> = cells
        .iter()
        .map(|(op, per_parcel)| {
            let inv_mean = per_parcel.values().map(|&c| 1.0 / c as f64).sum::<f64>() / per_parcel.len() as f64;
            (op.to_string(), 1.0 / inv_mean)
        })
        .collect();
    let n_i: Vec<f64> = replicates.values().copied().collect();
    let cd = critical_difference(vc.sd_reproducibility, vc.sd_repeatability, n_i.len(), &n_i)?;

    Ok(PrecisionSummary {
        image_id: image_id.to_string(),
        bias,
        sd_repeatability: vc.sd_repeatability,
        repeatability_limit: factor * vc.sd_repeatability,
        sd_reproducibility: vc.sd_reproducibility,
        reproducibility_limit: factor * vc.sd_reproducibility,
        critical_difference: cd,
        limit_mode: config.mode,
        limit_factor: factor,
        operators: n_i.len(),
        replicates,
        records: kept.len(),
        components: vc,
    })
}

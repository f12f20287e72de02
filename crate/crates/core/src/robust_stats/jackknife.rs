//! Leave-one-out ("jackknife") distance screening of buffer groups.
//!
//! The distance of `x_i` is `|x_i - mean_{-i}| / sd_{-i}` with the mean and
//! SD computed without `x_i`. Cutoffs come from a Monte Carlo null
//! distribution of standard normal samples of the same group size, so the
//! test needs no tables and is reproducible from the seed.
//!
//! Under the default family-wise rule a group is screened by a backward
//! search: the most distant point is removed repeatedly and every point up
//! to the last step whose maximum exceeds its cutoff is flagged. The
//! per-step level is calibrated so that a normal group is flagged with
//! probability `alpha`.

use std::collections::{BTreeMap, BTreeSet};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_finite, mean_and_ss, MonteCarlo, StatsError};
use crate::campaign::BufferRecord;
use crate::par::{map_indexed, rng_for, Stream};

/// Minimum group size for screening.
pub const MIN_GROUP: usize = 3;

/// Leave-one-out distances. A point whose complement has zero spread gets
/// `+inf`, or `0` if it also equals that common value.
pub fn jackknife_distances(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    let n = values.len();
    if n < MIN_GROUP {
        return Err(StatsError::InsufficientData { needed: MIN_GROUP, got: n });
    }
    check_finite(values)?;

    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return Ok(vec![0.0; n]);
    }
    // With exactly two distinct values, one of which occurs once, removing
    // that singleton leaves a constant complement.
    let n_lo = values.iter().filter(|&&v| v == lo).count();
    let n_hi = values.iter().filter(|&&v| v == hi).count();
    let singleton = if n_lo + n_hi == n {
        match (n_lo, n_hi) {
            (1, _) => Some(lo),
            (_, 1) => Some(hi),
            _ => None,
        }
    } else {
        None
    };

    let nf = n as f64;
    let (mean, ss) = mean_and_ss(values);
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if singleton == Some(x) {
                return f64::INFINITY;
            }
            let e = x - mean;
            let shift = nf / (nf - 1.0) * e;
            let mut ss_rest = ss - shift * e;
            // cancellation when x dominates the spread: recompute directly
            if ss_rest <= 1e-8 * ss {
                let m = (values.iter().sum::<f64>() - x) / (nf - 1.0);
                ss_rest = values
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, v)| (v - m).powi(2))
                    .sum();
            }
            shift.abs() / (ss_rest / (nf - 2.0)).sqrt()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// All operators and replicates of one parcel on one image.
    #[default]
    ParcelImage,
    /// Replicates of one operator on one parcel and image.
    ParcelImageOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `1 - alpha` quantile of the largest distance in a normal group,
    /// applied as a step-down search over the most extreme points.
    #[default]
    FamilyWise,
    /// `1 - alpha` quantile of a single point's distance.
    PerPoint,
    /// `1 - alpha / n` quantile of a single point's distance.
    Bonferroni,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierConfig {
    pub alpha: f64,
    pub grouping: Grouping,
    pub rule: ThresholdRule,
    /// Re-screen the remaining points after removing flagged ones, until a
    /// round flags nothing.
    pub iterate: bool,
    pub monte_carlo: MonteCarlo,
}

impl OutlierConfig {
    pub fn new(alpha: f64, monte_carlo: MonteCarlo) -> Self {
        Self { alpha, grouping: Grouping::default(), rule: ThresholdRule::default(), iterate: true, monte_carlo }
    }
}

/// Simulated null distribution of jackknife distances, by group size.
#[derive(Debug, Clone)]
pub struct JackknifeNull {
    alpha: f64,
    rule: ThresholdRule,
    mc: MonteCarlo,
    /// Sorted null statistics: the group maximum for the family-wise rule,
    /// every distance otherwise.
    stats: BTreeMap<usize, Vec<f64>>,
    /// Per-step tail probability of the search for a group of a given size.
    step_levels: BTreeMap<usize, f64>,
    thresholds: BTreeMap<usize, f64>,
}

impl JackknifeNull {
    pub fn new(alpha: f64, rule: ThresholdRule, mc: MonteCarlo) -> Result<Self, StatsError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(StatsError::InvalidProbability(alpha));
        }
        if mc.samples == 0 {
            return Err(StatsError::NoMonteCarloSamples);
        }
        Ok(Self { alpha, rule, mc, stats: BTreeMap::new(), step_levels: BTreeMap::new(), thresholds: BTreeMap::new() })
    }

    /// Cutoff applied to a group of `n` points (the first step of the
    /// search under the family-wise rule), simulating it on first use.
    pub fn threshold(&mut self, n: usize) -> f64 {
        self.ensure(std::iter::once(n));
        self.thresholds[&n]
    }

    /// Cutoffs used so far, by group size.
    pub fn thresholds(&self) -> &BTreeMap<usize, f64> {
        &self.thresholds
    }

    /// Simulate every missing size in `sizes`, together with the smaller
    /// sizes the step-down search reaches.
    pub fn ensure(&mut self, sizes: impl IntoIterator<Item = usize>) {
        let sizes: BTreeSet<usize> =
            sizes.into_iter().filter(|n| *n >= MIN_GROUP && !self.thresholds.contains_key(n)).collect();
        for n in sizes {
            for m in (n + 1 - self.depth(n))..=n {
                if !self.stats.contains_key(&m) {
                    let s = simulate_null(m, self.rule, &self.mc);
                    self.stats.insert(m, s);
                }
            }
            if self.rule == ThresholdRule::FamilyWise {
                let level = self.calibrate_search(n);
                self.step_levels.insert(n, level);
            }
            let cut = self.cutoff(n, n);
            self.thresholds.insert(n, cut);
        }
    }

    /// Steps of the backward search for a group of `n`.
    fn depth(&self, n: usize) -> usize {
        match self.rule {
            ThresholdRule::FamilyWise => max_removals(n),
            ThresholdRule::PerPoint | ThresholdRule::Bonferroni => 1,
        }
    }

    /// Per-step tail probability that makes the whole search on a normal
    /// group of `n` flag anything with probability `alpha`.
    fn calibrate_search(&self, n: usize) -> f64 {
        let depth = self.depth(n);
        if depth == 1 {
            return self.alpha;
        }
        let stats = &self.stats;
        // largest null CDF value reached by any step of the search
        let mut peaks = map_indexed(self.mc.execution, self.mc.samples, |t| {
            let mut rng = rng_for(self.mc.seed, Stream::JackknifeSearch, n as u64, t as u64);
            let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut peak = 0.0f64;
            for _ in 0..depth {
                let d = jackknife_distances(&x).expect("normal sample of size >= 3");
                let (k, &dmax) = d.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
                let null = &stats[&x.len()];
                let below = null.partition_point(|&v| v < dmax);
                peak = peak.max(below as f64 / null.len() as f64);
                x.remove(k);
            }
            peak
        });
        peaks.sort_by(f64::total_cmp);
        1.0 - empirical_quantile(&peaks, 1.0 - self.alpha)
    }

    /// Cutoff at size `m` within the search of a group that started at `n`.
    fn cutoff(&self, m: usize, n: usize) -> f64 {
        let q = match self.rule {
            ThresholdRule::FamilyWise => 1.0 - self.step_levels[&n],
            ThresholdRule::PerPoint => 1.0 - self.alpha,
            ThresholdRule::Bonferroni => 1.0 - self.alpha / m as f64,
        };
        empirical_quantile(&self.stats[&m], q)
    }
}

fn simulate_null(n: usize, rule: ThresholdRule, mc: &MonteCarlo) -> Vec<f64> {
    let per_trial = map_indexed(mc.execution, mc.samples, |t| {
        let mut rng = rng_for(mc.seed, Stream::JackknifeNull, n as u64, t as u64);
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = jackknife_distances(&x).expect("normal sample of size >= 3");
        match rule {
            ThresholdRule::FamilyWise => vec![d.into_iter().fold(0.0, f64::max)],
            // every point is a draw from the same marginal
            ThresholdRule::PerPoint | ThresholdRule::Bonferroni => d,
        }
    });
    let mut stats: Vec<f64> = per_trial.into_iter().flatten().collect();
    stats.sort_by(f64::total_cmp);
    stats
}

/// Smallest order statistic with empirical CDF at least `q`.
fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedGroup {
    pub parcel_id: String,
    pub image_id: String,
    pub operator_id: Option<String>,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierReport {
    pub alpha: f64,
    pub grouping: Grouping,
    pub rule: ThresholdRule,
    pub iterate: bool,
    /// Indices into the screened record slice.
    pub flagged: Vec<usize>,
    /// Distance of each record in the last round it took part in; `null` in
    /// JSON for infinite distances and records in skipped groups.
    pub distances: Vec<Option<f64>>,
    /// Cutoff per group size that was used.
    pub thresholds: BTreeMap<usize, f64>,
    pub groups_screened: usize,
    pub skipped: Vec<SkippedGroup>,
}

impl OutlierReport {
    /// Sets `outlier` on every flagged record.
    pub fn apply(&self, records: &mut [BufferRecord]) {
        for r in records.iter_mut() {
            r.outlier = false;
        }
        for &i in &self.flagged {
            records[i].outlier = true;
        }
    }

    pub fn flag_fraction(&self) -> f64 {
        if self.distances.is_empty() {
            0.0
        } else {
            self.flagged.len() as f64 / self.distances.len() as f64
        }
    }
}

type GroupKey<'a> = (&'a str, &'a str, Option<&'a str>);

/// Screens every parcel × image (or parcel × image × operator) group.
pub fn detect_outliers(records: &[BufferRecord], config: &OutlierConfig) -> Result<OutlierReport, StatsError> {
    let mut null = JackknifeNull::new(config.alpha, config.rule, config.monte_carlo)?;
    let values: Vec<f64> = records.iter().map(|r| r.buffer).collect();
    check_finite(&values)?;

    let mut groups: BTreeMap<GroupKey<'_>, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let op = match config.grouping {
            Grouping::ParcelImage => None,
            Grouping::ParcelImageOperator => Some(r.operator_id.as_str()),
        };
        groups.entry((&r.parcel_id, &r.image_id, op)).or_default().push(i);
    }

    let mut skipped = Vec::new();
    let mut active: Vec<Vec<usize>> = Vec::new();
    for ((parcel, image, op), members) in groups {
        if members.len() < MIN_GROUP {
            skipped.push(SkippedGroup {
                parcel_id: parcel.to_string(),
                image_id: image.to_string(),
                operator_id: op.map(str::to_string),
                size: members.len(),
            });
        } else {
            active.push(members);
        }
    }
    let groups_screened = active.len();

    let mut distances: Vec<Option<f64>> = vec![None; records.len()];
    let mut flagged = vec![false; records.len()];
    while !active.is_empty() {
        null.ensure(active.iter().map(Vec::len));
        let mut next = Vec::new();
        for members in active {
            let x: Vec<f64> = members.iter().map(|&i| values[i]).collect();
            let d = jackknife_distances(&x)?;
            for (&i, &di) in members.iter().zip(&d) {
                distances[i] = di.is_finite().then_some(di);
            }
            let hit: Vec<bool> = match config.rule {
                ThresholdRule::FamilyWise => step_down(&x, |m| null.cutoff(m, x.len()))?,
                ThresholdRule::PerPoint | ThresholdRule::Bonferroni => {
                    let cut = null.thresholds()[&members.len()];
                    d.iter().map(|&di| di > cut).collect()
                }
            };
            let mut remaining = Vec::with_capacity(members.len());
            for (&i, &h) in members.iter().zip(&hit) {
                if h {
                    flagged[i] = true;
                } else {
                    remaining.push(i);
                }
            }
            let changed = remaining.len() < members.len();
            if config.iterate && changed && remaining.len() >= MIN_GROUP {
                next.push(remaining);
            }
        }
        active = next;
    }

    Ok(OutlierReport {
        alpha: config.alpha,
        grouping: config.grouping,
        rule: config.rule,
        iterate: config.iterate,
        flagged: flagged.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i).collect(),
        distances,
        thresholds: null.thresholds,
        groups_screened,
        skipped,
    })
}

/// Deepest step of the backward search for a group of `n`.
fn max_removals(n: usize) -> usize {
    (n / 3).clamp(1, n + 1 - MIN_GROUP)
}

/// Removes the most distant point one at a time and flags every point up to
/// the last step whose maximum distance exceeds the cutoff for its size.
/// Two similar gross errors inflate each other's leave-one-out spread, so a
/// single comparison at full size can miss both.
fn step_down(x: &[f64], cut: impl Fn(usize) -> f64) -> Result<Vec<bool>, StatsError> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    let mut order = Vec::new();
    let mut last_exceeding = 0;
    for step in 1..=max_removals(x.len()) {
        let sub: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let d = jackknife_distances(&sub)?;
        let (k, &dmax) = d.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty group");
        if dmax > cut(sub.len()) {
            last_exceeding = step;
        }
        order.push(idx.remove(k));
    }
    let mut hit = vec![false; x.len()];
    for &i in &order[..last_exceeding] {
        hit[i] = true;
    }
    Ok(hit)
}

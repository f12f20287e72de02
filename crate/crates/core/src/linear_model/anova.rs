use serde::{Deserialize, Serialize};

use super::design::effects_code;
use super::{encode_design, Dataset, Design, ModelError, ModelSpec};
use crate::linalg::{least_squares, LeastSquares, Matrix};
use crate::special::f_sf;

/// Sums of squares smaller than this fraction of `Σy²` are treated as zero.
const SS_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsType {
    /// Each term tested after every other term (drop-one refits).
    #[default]
    Marginal,
    /// Each term tested after the terms listed before it.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FTest {
    pub f: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub n: usize,
    pub rank: usize,
    pub residual_ss: f64,
    pub residual_df: usize,
    /// Total SS about the mean.
    pub total_ss: f64,
    pub r_squared: f64,
    pub overall: Option<FTest>,
    #[serde(skip)]
    pub spec: ModelSpec,
    #[serde(skip)]
    pub design: Design,
    #[serde(skip)]
    pub response: Vec<f64>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaRow {
    pub term: String,
    pub ss: f64,
    pub df: usize,
    /// `None` when the term is aliased (no testable degrees of freedom) or
    /// there is no residual error to test against.
    pub f: Option<f64>,
    pub p_value: Option<f64>,
    pub testable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaTable {
    pub ss_type: SsType,
    pub rows: Vec<AnovaRow>,
    pub residual_ss: f64,
    pub residual_df: usize,
    pub r_squared: f64,
    pub overall: Option<FTest>,
}

/// Least-squares solve with the rank reported.
pub fn fit_least_squares(x: &Matrix, y: &[f64]) -> Result<LeastSquares, ModelError> {
    Ok(least_squares(x, y)?)
}

pub fn fit_model(data: &Dataset, spec: &ModelSpec) -> Result<FitResult, ModelError> {
    let design = encode_design(data, spec)?;
    let y = &data.response;
    let ls = fit_least_squares(&design.matrix, y)?;
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let total_ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let floor = ss_floor(y);
    let residual_df = n - ls.rank;
    let r_squared = if total_ss > floor { (1.0 - ls.rss / total_ss).clamp(0.0, 1.0) } else { 0.0 };
    let overall = f_test((total_ss - ls.rss).max(0.0), ls.rank.saturating_sub(1), ls.rss, residual_df, floor);
    Ok(FitResult {
        columns: design.columns.clone(),
        coefficients: ls.coefficients,
        n,
        rank: ls.rank,
        residual_ss: ls.rss,
        residual_df,
        total_ss,
        r_squared,
        overall,
        spec: spec.clone(),
        design,
        response: y.clone(),
        residuals: ls.residuals,
    })
}

fn ss_floor(y: &[f64]) -> f64 {
    SS_FLOOR * y.iter().map(|v| v * v).sum::<f64>()
}

fn f_test(ss: f64, df: usize, rss: f64, df_res: usize, floor: f64) -> Option<FTest> {
    if df == 0 || df_res == 0 {
        return None;
    }
    let (f, p_value) = if ss <= floor {
        (0.0, 1.0)
    } else if rss <= floor {
        (f64::INFINITY, 0.0)
    } else {
        let f = (ss / df as f64) / (rss / df_res as f64);
        (f, f_sf(f, df as f64, df_res as f64))
    };
    Some(FTest { f, df_num: df, df_den: df_res, p_value })
}

/// Per-term F tests. Marginal SS drop the term's columns from the full
/// model; sequential SS add terms in spec order.
pub fn anova_table(fit: &FitResult, ss_type: SsType) -> Result<AnovaTable, ModelError> {
    let d = &fit.design;
    let y = &fit.response;
    let floor = ss_floor(y);
    let total_cols = d.matrix.cols();
    let refit = |cols: &[usize]| -> Result<LeastSquares, ModelError> {
        fit_least_squares(&d.matrix.select_columns(cols), y)
    };

    let mut rows = Vec::with_capacity(d.term_columns.len());
    match ss_type {
        SsType::Marginal => {
            for (name, range) in &d.term_columns {
                let keep: Vec<usize> = (0..total_cols).filter(|c| !range.contains(c)).collect();
                let reduced = refit(&keep)?;
                let df = fit.rank - reduced.rank;
                let ss = (reduced.rss - fit.residual_ss).max(0.0);
                rows.push(row(name, ss, df, fit, floor));
            }
        }
        SsType::Sequential => {
            let mut prev = refit(&[0])?;
            for (name, range) in &d.term_columns {
                let upto: Vec<usize> = (0..range.end).collect();
                let cur = refit(&upto)?;
                let ss = (prev.rss - cur.rss).max(0.0);
                rows.push(row(name, ss, cur.rank - prev.rank, fit, floor));
                prev = cur;
            }
        }
    }
    Ok(AnovaTable {
        ss_type,
        rows,
        residual_ss: fit.residual_ss,
        residual_df: fit.residual_df,
        r_squared: fit.r_squared,
        overall: fit.overall,
    })
}

fn row(name: &str, ss: f64, df: usize, fit: &FitResult, floor: f64) -> AnovaRow {
    let test = f_test(ss, df, fit.residual_ss, fit.residual_df, floor);
    AnovaRow {
        term: name.to_string(),
        ss,
        df,
        f: test.map(|t| t.f),
        p_value: test.map(|t| t.p_value),
        testable: test.is_some(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LsMean {
    pub level: String,
    /// Model prediction with every other factor at its balanced average.
    pub ls_mean: f64,
    pub raw_mean: f64,
    /// Observed SD of the level; `None` for a single observation.
    pub raw_sd: Option<f64>,
    pub n: usize,
}

/// Least-squares means of `factor`. A factor present in the data but absent
/// from the model gets the intercept for every level.
pub fn ls_means(fit: &FitResult, data: &Dataset, factor: &str) -> Result<Vec<LsMean>, ModelError> {
    let labels = data.factors.get(factor).ok_or_else(|| ModelError::UnknownFactor(factor.to_string()))?;
    let mut levels: Vec<&String> = labels.iter().collect();
    levels.sort();
    levels.dedup();

    let main = fit.design.term_columns.iter().find(|(name, _)| name == factor).map(|(_, r)| r.clone());
    let beta0 = fit.coefficients.first().copied().unwrap_or(0.0);

    Ok(levels
        .iter()
        .enumerate()
        .map(|(l, level)| {
            let ls_mean = match &main {
                Some(range) => {
                    let code = effects_code(l, levels.len());
                    beta0 + code.iter().zip(&fit.coefficients[range.clone()]).map(|(c, b)| c * b).sum::<f64>()
                }
                None => beta0,
            };
            let obs: Vec<f64> =
                labels.iter().zip(&data.response).filter(|(lab, _)| lab == level).map(|(_, y)| *y).collect();
            let n = obs.len();
            let raw_mean = obs.iter().sum::<f64>() / n as f64;
            let raw_sd = (n > 1)
                .then(|| (obs.iter().map(|v| (v - raw_mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
            LsMean { level: level.to_string(), ls_mean, raw_mean, raw_sd, n }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_way() -> Dataset {
        Dataset::new(vec![0.0, 1.0, 2.0, 3.0]).with_factor("g", ["a", "a", "b", "b"])
    }

    #[test]
    fn one_way_by_hand() {
        let data = one_way();
        let fit = fit_model(&data, &ModelSpec::parse(&["g"]).unwrap()).unwrap();
        let t = anova_table(&fit, SsType::Marginal).unwrap();
        let r = &t.rows[0];
        assert!((r.ss - 4.0).abs() < 1e-12);
        assert!((t.residual_ss - 1.0).abs() < 1e-12);
        assert_eq!((r.df, t.residual_df), (1, 2));
        assert!((r.f.unwrap() - 8.0).abs() < 1e-10);
        // F(1, 2) upper tail at 8: 1 - sqrt(8 / 10)
        assert!((r.p_value.unwrap() - (1.0 - (0.8f64).sqrt())).abs() < 1e-12);
        assert!((fit.r_squared - 0.8).abs() < 1e-12);
    }

    #[test]
    fn constant_response() {
        let data = Dataset::new(vec![3.5; 6]).with_factor("g", ["a", "a", "b", "b", "c", "c"]);
        let fit = fit_model(&data, &ModelSpec::parse(&["g"]).unwrap()).unwrap();
        let t = anova_table(&fit, SsType::Marginal).unwrap();
        assert_eq!(t.rows[0].f, Some(0.0));
        assert_eq!(t.rows[0].p_value, Some(1.0));
        assert_eq!(fit.r_squared, 0.0);
    }

    #[test]
    fn aliased_term_not_testable() {
        // b duplicates a
        let data = Dataset::new(vec![0.1, 0.4, 2.0, 2.3, 1.1, 0.9])
            .with_factor("a", ["x", "x", "y", "y", "x", "y"])
            .with_factor("b", ["p", "p", "q", "q", "p", "q"]);
        let fit = fit_model(&data, &ModelSpec::parse(&["a", "b"]).unwrap()).unwrap();
        assert_eq!(fit.rank, 2);
        let t = anova_table(&fit, SsType::Marginal).unwrap();
        assert!(t.rows.iter().all(|r| !r.testable && r.df == 0));
    }

    #[test]
    fn ls_means_one_factor_are_group_means() {
        let data = one_way();
        let fit = fit_model(&data, &ModelSpec::parse(&["g"]).unwrap()).unwrap();
        let m = ls_means(&fit, &data, "g").unwrap();
        assert!((m[0].ls_mean - 0.5).abs() < 1e-12 && (m[1].ls_mean - 2.5).abs() < 1e-12);
        assert_eq!(m[0].raw_mean, 0.5);
        assert_eq!(m[0].n, 2);
    }

    #[test]
    fn ls_means_intercept_only() {
        let data = one_way();
        let fit = fit_model(&data, &ModelSpec::intercept_only()).unwrap();
        for m in ls_means(&fit, &data, "g").unwrap() {
            assert!((m.ls_mean - 1.5).abs() < 1e-12);
        }
        assert!(matches!(ls_means(&fit, &data, "nope"), Err(ModelError::UnknownFactor(_))));
    }

    #[test]
    fn sequential_matches_marginal_when_balanced() {
        let data = Dataset::new(vec![1.0, 2.5, 0.3, 4.1, 2.2, 3.9, 0.8, 5.0])
            .with_factor("a", ["p", "p", "q", "q", "p", "p", "q", "q"])
            .with_factor("b", ["u", "v", "u", "v", "u", "v", "u", "v"]);
        let fit = fit_model(&data, &ModelSpec::parse(&["a", "b", "a*b"]).unwrap()).unwrap();
        let m = anova_table(&fit, SsType::Marginal).unwrap();
        let s = anova_table(&fit, SsType::Sequential).unwrap();
        for (x, y) in m.rows.iter().zip(&s.rows) {
            assert!((x.ss - y.ss).abs() <= 1e-9 * x.ss.max(1e-300));
        }
    }
}

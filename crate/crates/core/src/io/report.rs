use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use crate::linear_model::{AnovaTable, LsMean};
use crate::precision::PrecisionSummary;
use crate::robust_stats::{DistributionSummary, Grouping, NormalityResult, ThresholdRule};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub monte_carlo_samples: usize,
    /// SHA-256 of every input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignCounts {
    pub parcels: usize,
    pub operators: usize,
    pub images: usize,
    pub observations: usize,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedRecord {
    pub observation: usize,
    pub parcel_id: String,
    pub operator_id: String,
    pub image_id: String,
    pub replicate: u32,
    pub buffer: f64,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierSummary {
    pub alpha: f64,
    pub grouping: Grouping,
    pub rule: ThresholdRule,
    pub iterate: bool,
    pub groups_screened: usize,
    pub groups_skipped: usize,
    pub flagged_count: usize,
    pub flagged_fraction: f64,
    /// Critical jackknife distance by group size.
    pub thresholds: BTreeMap<usize, f64>,
    pub flagged: Vec<FlaggedRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub terms: Vec<String>,
    pub dropped_terms: Vec<String>,
    pub n: usize,
    pub rank: usize,
    pub anova: AnovaTable,
    pub ls_means: BTreeMap<String, Vec<LsMean>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageReport {
    pub image_id: String,
    pub summary: DistributionSummary,
    pub normality: NormalityResult,
    pub model: ModelReport,
    pub precision: PrecisionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub schema_version: &'static str,
    pub provenance: Provenance,
    pub campaign: CampaignCounts,
    pub warnings: Vec<String>,
    pub outliers: OutlierSummary,
    pub images: Vec<ImageReport>,
    pub pooled_model: ModelReport,
}

impl AnalysisReport {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report is serializable");
        out.push(b'\n');
        out
    }
}

fn num(v: f64, decimals: usize) -> String {
    if v.is_finite() {
        format!("{v:.decimals$}")
    } else {
        v.to_string()
    }
}

fn pval(p: Option<f64>) -> String {
    match p {
        Some(p) if p < 1e-4 => "<0.0001".into(),
        Some(p) => format!("{p:.4}"),
        None => "-".into(),
    }
}

/// Left-aligned first column, right-aligned others.
fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let width: Vec<usize> = (0..cols)
        .map(|j| rows.iter().map(|r| r[j].chars().count()).chain([header[j].chars().count()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        let mut line = String::new();
        for (j, cell) in row.iter().enumerate() {
            if j == 0 {
                let _ = write!(line, "{cell:<w$}", w = width[0]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = width[j]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn anova_block(title: &str, m: &ModelReport) -> String {
    let header: Vec<String> = ["Source", "DF", "Sum of squares", "F ratio", "Prob > F"].map(String::from).to_vec();
    let mut rows: Vec<Vec<String>> = m
        .anova
        .rows
        .iter()
        .map(|r| {
            vec![
                r.term.clone(),
                r.df.to_string(),
                num(r.ss, 4),
                r.f.map_or("-".into(), |f| num(f, 3)),
                pval(r.p_value),
            ]
        })
        .collect();
    rows.push(vec!["Error".into(), m.anova.residual_df.to_string(), num(m.anova.residual_ss, 4), String::new(), String::new()]);
    let mut s = format!("{title} ({:?} SS, n = {}, R² = {:.4})\n", m.anova.ss_type, m.n, m.anova.r_squared);
    s.push_str(&table(&header, &rows));
    if !m.dropped_terms.is_empty() {
        let _ = writeln!(s, "Dropped terms: {}", m.dropped_terms.join(", "));
    }
    s
}

/// Plain-text tables: distribution parameters and precision per image,
/// outlier screening, and the ANOVA tables.
pub fn render_text(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Buffer width analysis (schema {}, {} {})", r.schema_version, r.provenance.tool, r.provenance.tool_version);
    let _ = writeln!(
        s,
        "Campaign: {} parcels, {} operators, {} images, {} observations ({} retained)\n",
        r.campaign.parcels, r.campaign.operators, r.campaign.images, r.campaign.observations, r.campaign.retained
    );

    let mut header = vec!["Image".to_string()];
    header.extend(r.images.iter().map(|i| i.image_id.clone()));
    let row = |label: &str, f: &dyn Fn(&ImageReport) -> String| -> Vec<String> {
        std::iter::once(label.to_string()).chain(r.images.iter().map(f)).collect()
    };

    s.push_str("Distribution parameters for each image [m]\n");
    s.push_str(&table(
        &header,
        &[
            row("Mean", &|i| num(i.summary.mean, 3)),
            row("Std Dev", &|i| num(i.summary.std_dev, 3)),
            row("Std Err Mean", &|i| num(i.summary.std_err_mean, 3)),
            row("Upper 95% Mean", &|i| num(i.summary.ci95_upper, 3)),
            row("Lower 95% Mean", &|i| num(i.summary.ci95_lower, 3)),
            row("Number of observations", &|i| i.summary.n.to_string()),
            row("Lilliefors D", &|i| num(i.normality.statistic, 4)),
            row("Lilliefors p-value", &|i| pval(Some(i.normality.p_value))),
        ],
    ));

    s.push_str("\nPrecision for each image [m]\n");
    s.push_str(&table(
        &header,
        &[
            row("Mean value = bias", &|i| num(i.precision.bias, 2)),
            row("St. Dev. Repeatability", &|i| num(i.precision.sd_repeatability, 2)),
            row("Repeatability limit", &|i| num(i.precision.repeatability_limit, 2)),
            row("St. Dev. Reproducibility", &|i| num(i.precision.sd_reproducibility, 2)),
            row("Reproducibility limit", &|i| num(i.precision.reproducibility_limit, 2)),
            row("Critical difference to reference", &|i| num(i.precision.critical_difference, 2)),
            row("Operators (p)", &|i| i.precision.operators.to_string()),
        ],
    ));
    if let Some(first) = r.images.first() {
        let _ = writeln!(s, "Limits use factor {:.4} ({:?})", first.precision.limit_factor, first.precision.limit_mode);
    }

    let o = &r.outliers;
    let _ = writeln!(
        s,
        "\nOutliers: {} of {} flagged ({:.2}%), alpha = {}, rule = {:?}, grouping = {:?}, iterate = {}",
        o.flagged_count,
        r.campaign.observations,
        100.0 * o.flagged_fraction,
        o.alpha,
        o.rule,
        o.grouping,
        o.iterate
    );
    let _ = writeln!(s, "Groups screened: {}, skipped (too small): {}", o.groups_screened, o.groups_skipped);

    for i in &r.images {
        s.push('\n');
        s.push_str(&anova_block(&format!("ANOVA, image {}", i.image_id), &i.model));
    }
    s.push('\n');
    s.push_str(&anova_block("ANOVA, all images", &r.pooled_model));

    if !r.warnings.is_empty() {
        s.push_str("\nWarnings\n");
        for w in &r.warnings {
            let _ = writeln!(s, "- {w}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_alignment() {
        let t = table(&["a".into(), "bb".into()], &[vec!["long".into(), "1".into()]]);
        assert_eq!(t, "a     bb\nlong   1\n");
    }

    #[test]
    fn p_value_format() {
        assert_eq!(pval(Some(0.00001)), "<0.0001");
        assert_eq!(pval(Some(0.25)), "0.2500");
        assert_eq!(pval(None), "-");
    }
}

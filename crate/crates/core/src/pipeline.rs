//! End-to-end runs: `analyze`, `simulate` and `validate`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::campaign::{BufferRecord, Campaign, CampaignError, ImageSource, Operator};
use crate::geometry::SizeThresholds;
use crate::io::{
    self, parcels_to_geojson, render_text, roster_from_campaign, write_atomic, write_buffers_csv, write_observations,
    AnalysisReport, CampaignCounts, Config, FlaggedRecord, ImageReport, InputError, InputSection, ModelReport,
    OutlierSummary, Provenance, SCHEMA_VERSION,
};
use crate::linear_model::{anova_table, fit_model, ls_means, Dataset, ModelSpec};
use crate::par::map_indexed;
use crate::precision::image_summary;
use crate::robust_stats::{describe, detect_outliers, lilliefors_test, OutlierReport};
use crate::simulator::generate_campaign;

/// Factor names a model term may use.
pub const MODEL_FACTORS: [&str; 7] = ["image", "operator", "skill", "size", "shape", "land_cover", "visibility"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Buffer,
    Outliers,
    Describe,
    Normality,
    Model,
    Precision,
    Simulate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Buffer => "buffer",
            Stage::Outliers => "outliers",
            Stage::Describe => "describe",
            Stage::Normality => "normality",
            Stage::Model => "model",
            Stage::Precision => "precision",
            Stage::Simulate => "simulate",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("load: {0}")]
    Input(#[from] InputError),
    #[error("validation: {0}")]
    Validation(#[from] CampaignError),
    #[error("{stage}: {message}")]
    Computation { stage: Stage, message: String },
    #[error("output: {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    fn at(stage: Stage, e: impl fmt::Display) -> Self {
        PipelineError::Computation { stage, message: e.to_string() }
    }

    /// 2 usage or configuration, 3 invalid input data, 4 computation, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Input(InputError::Io { .. }) => 5,
            PipelineError::Input(_) | PipelineError::Validation(_) => 3,
            PipelineError::Computation { .. } => 4,
            PipelineError::Output { .. } => 5,
        }
    }
}

/// Campaign plus the SHA-256 of every file it was read from.
pub struct LoadedCampaign {
    pub campaign: Campaign,
    pub input_hashes: BTreeMap<String, String>,
}

fn hash_file(path: &Path) -> Result<String, InputError> {
    std::fs::read(path).map(|b| io::sha256_hex(&b)).map_err(|e| InputError::io(path, e))
}

/// Reads observations, parcels and the optional roster. Without a roster,
/// operators and images are taken from the observation table in order of
/// first appearance, with unknown skill and resolution.
pub fn load_campaign(input: &InputSection) -> Result<LoadedCampaign, PipelineError> {
    let mut input_hashes = BTreeMap::new();
    input_hashes.insert("observations".to_string(), hash_file(&input.observations)?);
    input_hashes.insert("parcels".to_string(), hash_file(&input.parcels)?);
    let observations = io::parse_observations_csv(&input.observations)?;
    let parcels = io::parse_parcels_geojson(&input.parcels)?;
    let mut campaign = Campaign { parcels, observations, ..Default::default() };
    match &input.roster {
        Some(path) => {
            input_hashes.insert("roster".to_string(), hash_file(path)?);
            let roster = io::read_roster(path)?;
            campaign.metadata = roster.metadata;
            campaign.operators = roster.operators;
            campaign.images = roster.images;
        }
        None => {
            for o in &campaign.observations {
                if !campaign.operators.iter().any(|x| x.id == o.operator_id) {
                    campaign.operators.push(Operator { id: o.operator_id.clone(), skill: None });
                }
                if !campaign.images.iter().any(|x| x.id == o.image_id) {
                    campaign.images.push(ImageSource { id: o.image_id.clone(), kind: o.image_id.clone(), gsd: None });
                }
            }
        }
    }
    Ok(LoadedCampaign { campaign, input_hashes })
}

fn input_section(cfg: &Config) -> Result<&InputSection, PipelineError> {
    cfg.input.as_ref().ok_or_else(|| PipelineError::Config("missing [input] section".into()))
}

fn check_model_factors(spec: &ModelSpec) -> Result<(), PipelineError> {
    for t in spec.terms() {
        for f in t.factors() {
            if !MODEL_FACTORS.contains(&f.as_str()) {
                return Err(PipelineError::Config(format!(
                    "model factor {f:?} unknown; available: {}",
                    MODEL_FACTORS.join(", ")
                )));
            }
        }
    }
    Ok(())
}

/// Model data for `records`, one label column per available factor.
fn dataset(records: &[&BufferRecord], campaign: &Campaign, sizes: &SizeThresholds) -> Result<Dataset, PipelineError> {
    let parcels: BTreeMap<&str, _> = campaign.parcels.iter().map(|p| (p.id.as_str(), p)).collect();
    let skills: BTreeMap<&str, _> = campaign.operators.iter().map(|o| (o.id.as_str(), o.skill)).collect();
    let mut cols: BTreeMap<&str, Vec<String>> = MODEL_FACTORS.iter().map(|&f| (f, Vec::new())).collect();
    let mut skill_known = true;
    for r in records {
        let p = parcels[r.parcel_id.as_str()];
        let push = |cols: &mut BTreeMap<&str, Vec<String>>, k: &str, v: &str| cols.get_mut(k).unwrap().push(v.to_string());
        push(&mut cols, "image", &r.image_id);
        push(&mut cols, "operator", &r.operator_id);
        let size = sizes.classify(p.a_ref).map_err(|e| PipelineError::at(Stage::Model, format!("parcel {}: {e}", p.id)))?;
        push(&mut cols, "size", size.as_str());
        push(&mut cols, "shape", p.labels.shape.as_str());
        push(&mut cols, "land_cover", p.labels.land_cover.as_str());
        push(&mut cols, "visibility", p.labels.visibility.as_str());
        match skills.get(r.operator_id.as_str()).copied().flatten() {
            Some(s) => push(&mut cols, "skill", s.as_str()),
            None => skill_known = false,
        }
    }
    let mut data = Dataset::new(records.iter().map(|r| r.buffer).collect());
    for (name, labels) in cols {
        if name != "skill" || skill_known {
            data = data.with_factor(name, labels);
        }
    }
    Ok(data)
}

/// Fit `spec` on `records`, dropping terms of factors with a single observed
/// level (and every `image` term when `per_image`).
fn model_report(
    records: &[&BufferRecord],
    campaign: &Campaign,
    spec: &ModelSpec,
    cfg: &Config,
    scope: &str,
    per_image: bool,
    warnings: &mut Vec<String>,
) -> Result<ModelReport, PipelineError> {
    let data = dataset(records, campaign, &cfg.size_classes)?;
    let mut used = spec.clone();
    if per_image {
        used = used.without_factor("image");
    }
    let mains: Vec<String> = used.main_effects().map(str::to_string).collect();
    for f in &mains {
        match data.level_count(f) {
            None if f == "skill" => {
                return Err(PipelineError::Config("factor \"skill\" needs a roster with operator skills".into()))
            }
            None => return Err(PipelineError::at(Stage::Model, format!("unknown factor {f:?}"))),
            Some(n) if n < 2 => {
                warnings.push(format!("{scope}: factor {f} has a single level; its terms are excluded from the ANOVA"));
                used = used.without_factor(f);
            }
            Some(_) => {}
        }
    }
    let dropped_terms = spec
        .terms()
        .iter()
        .filter(|t| !used.terms().contains(t))
        .map(ToString::to_string)
        .collect();
    let fit = fit_model(&data, &used).map_err(|e| PipelineError::at(Stage::Model, format!("{scope}: {e}")))?;
    let anova = anova_table(&fit, cfg.model.ss_type).map_err(|e| PipelineError::at(Stage::Model, format!("{scope}: {e}")))?;
    let mut means = BTreeMap::new();
    for f in used.main_effects() {
        let m = ls_means(&fit, &data, f).map_err(|e| PipelineError::at(Stage::Model, format!("{scope}: {e}")))?;
        means.insert(f.to_string(), m);
    }
    Ok(ModelReport {
        terms: used.terms().iter().map(ToString::to_string).collect(),
        dropped_terms,
        n: fit.n,
        rank: fit.rank,
        anova,
        ls_means: means,
    })
}

fn image_report(
    image_id: &str,
    records: &[BufferRecord],
    campaign: &Campaign,
    spec: &ModelSpec,
    cfg: &Config,
) -> Result<(ImageReport, Vec<String>), PipelineError> {
    let scope = format!("image {image_id}");
    let kept: Vec<&BufferRecord> = records.iter().filter(|r| !r.outlier).collect();
    let values: Vec<f64> = kept.iter().map(|r| r.buffer).collect();
    let summary = describe(&values).map_err(|e| PipelineError::at(Stage::Describe, format!("{scope}: {e}")))?;
    let normality = lilliefors_test(&values, &cfg.monte_carlo())
        .map_err(|e| PipelineError::at(Stage::Normality, format!("{scope}: {e}")))?;
    let mut warnings = Vec::new();
    let model = model_report(&kept, campaign, spec, cfg, &scope, true, &mut warnings)?;
    let precision = image_summary(image_id, records, &cfg.tolerance)
        .map_err(|e| PipelineError::at(Stage::Precision, format!("{scope}: {e}")))?;
    Ok((ImageReport { image_id: image_id.to_string(), summary, normality, model, precision }, warnings))
}

fn outlier_summary(report: &OutlierReport, records: &[BufferRecord]) -> OutlierSummary {
    OutlierSummary {
        alpha: report.alpha,
        grouping: report.grouping,
        rule: report.rule,
        iterate: report.iterate,
        groups_screened: report.groups_screened,
        groups_skipped: report.skipped.len(),
        flagged_count: report.flagged.len(),
        flagged_fraction: report.flag_fraction(),
        thresholds: report.thresholds.clone(),
        flagged: report
            .flagged
            .iter()
            .map(|&i| {
                let r = &records[i];
                FlaggedRecord {
                    observation: r.observation,
                    parcel_id: r.parcel_id.clone(),
                    operator_id: r.operator_id.clone(),
                    image_id: r.image_id.clone(),
                    replicate: r.replicate,
                    buffer: r.buffer,
                    distance: report.distances[i],
                }
            })
            .collect(),
    }
}

/// Everything `analyze` produces, before it is written.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: AnalysisReport,
    pub buffers: Vec<BufferRecord>,
    pub distances: Vec<Option<f64>>,
}

/// buffer → outliers → per image (describe, normality, model, precision)
/// → model over all images.
pub fn analyze_campaign(
    campaign: &Campaign,
    cfg: &Config,
    input_hashes: BTreeMap<String, String>,
) -> Result<Analysis, PipelineError> {
    let spec = cfg.model_spec().map_err(|e| PipelineError::Config(e.to_string()))?;
    check_model_factors(&spec)?;
    let mut warnings: Vec<String> = campaign.validate()?.iter().map(ToString::to_string).collect();

    let mut buffers = campaign.build_buffer_table()?;
    if buffers.is_empty() {
        return Err(PipelineError::at(Stage::Buffer, "no observations"));
    }
    let outliers = detect_outliers(&buffers, &cfg.outlier_config()).map_err(|e| PipelineError::at(Stage::Outliers, e))?;
    outliers.apply(&mut buffers);

    let by_image = crate::campaign::partition_by_image(&buffers);
    let images: Vec<&str> = campaign.images.iter().map(|i| i.id.as_str()).filter(|id| by_image.contains_key(*id)).collect();
    for i in &campaign.images {
        if !by_image.contains_key(&i.id) {
            warnings.push(format!("image {} has no observations", i.id));
        }
    }
    let per_image = map_indexed(cfg.monte_carlo.execution, images.len(), |k| {
        image_report(images[k], &by_image[images[k]], campaign, &spec, cfg)
    });
    let mut image_reports = Vec::with_capacity(images.len());
    for r in per_image {
        let (rep, w) = r?;
        image_reports.push(rep);
        warnings.extend(w);
    }

    let kept: Vec<&BufferRecord> = buffers.iter().filter(|r| !r.outlier).collect();
    let pooled_model = model_report(&kept, campaign, &spec, cfg, "all images", false, &mut warnings)?;

    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME"),
            tool_version: env!("CARGO_PKG_VERSION"),
            config_sha256: cfg.config_sha256.clone(),
            seed: cfg.monte_carlo.seed,
            monte_carlo_samples: cfg.monte_carlo.samples,
            inputs: input_hashes,
        },
        campaign: CampaignCounts {
            parcels: campaign.parcels.len(),
            operators: campaign.operators.len(),
            images: campaign.images.len(),
            observations: buffers.len(),
            retained: kept.len(),
        },
        warnings,
        outliers: outlier_summary(&outliers, &buffers),
        images: image_reports,
        pooled_model,
    };
    Ok(Analysis { report, buffers, distances: outliers.distances })
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, PipelineError> {
    let path = dir.join(name);
    write_atomic(&path, bytes).map_err(|source| PipelineError::Output { path: path.clone(), source })?;
    Ok(path)
}

/// Loads the configured inputs, analyzes them and writes `buffers.csv` plus
/// `report.json` and/or `report.txt` into the output directory.
pub fn run_analyze(cfg: &Config) -> Result<(Analysis, Vec<PathBuf>), PipelineError> {
    let loaded = load_campaign(input_section(cfg)?)?;
    let analysis = analyze_campaign(&loaded.campaign, cfg, loaded.input_hashes)?;
    let dir = &cfg.output.dir;
    let mut files = vec![write(dir, "buffers.csv", &write_buffers_csv(&analysis.buffers, &analysis.distances))?];
    if cfg.output.format.json() {
        files.push(write(dir, "report.json", &analysis.report.to_json())?);
    }
    if cfg.output.format.text() {
        files.push(write(dir, "report.txt", render_text(&analysis.report).as_bytes())?);
    }
    Ok((analysis, files))
}

/// Generates the configured campaign and writes `observations.csv`,
/// `parcels.geojson`, `roster.json` and an `analyze.toml` that reads them.
pub fn run_simulate(cfg: &Config) -> Result<Vec<PathBuf>, PipelineError> {
    let plan = cfg.simulation.as_ref().ok_or_else(|| PipelineError::Config("missing [simulation] section".into()))?;
    let sim = generate_campaign(plan).map_err(|e| PipelineError::at(Stage::Simulate, e))?;
    let c = &sim.campaign;
    let dir = &cfg.output.dir;
    let roster = serde_json::to_vec_pretty(&roster_from_campaign(c)).expect("roster is serializable");

    let mut analyze_cfg = cfg.clone();
    analyze_cfg.simulation = None;
    analyze_cfg.input = Some(InputSection {
        observations: "observations.csv".into(),
        parcels: "parcels.geojson".into(),
        roster: Some("roster.json".into()),
    });
    analyze_cfg.output.dir = "analysis".into();
    let toml = toml::to_string(&analyze_cfg).map_err(|e| PipelineError::at(Stage::Simulate, e))?;

    Ok(vec![
        write(dir, "observations.csv", &write_observations(&c.observations))?,
        write(dir, "parcels.geojson", &parcels_to_geojson(&c.parcels))?,
        write(dir, "roster.json", &[roster, b"\n".to_vec()].concat())?,
        write(dir, "analyze.toml", toml.as_bytes())?,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSummary {
    pub parcels: usize,
    pub operators: usize,
    pub images: usize,
    pub observations: usize,
    pub warnings: Vec<String>,
}

/// Schema, geometry and referential checks without any statistics.
pub fn run_validate(cfg: &Config) -> Result<ValidationSummary, PipelineError> {
    let spec = cfg.model_spec().map_err(|e| PipelineError::Config(e.to_string()))?;
    check_model_factors(&spec)?;
    let c = load_campaign(input_section(cfg)?)?.campaign;
    let warnings = c.validate()?.iter().map(ToString::to_string).collect();
    c.build_buffer_table()?;
    Ok(ValidationSummary {
        parcels: c.parcels.len(),
        operators: c.operators.len(),
        images: c.images.len(),
        observations: c.observations.len(),
        warnings,
    })
}

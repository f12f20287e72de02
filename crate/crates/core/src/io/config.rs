use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{sha256_hex, InputError};
use crate::geometry::SizeThresholds;
use crate::linear_model::{ModelSpec, SsType};
use crate::par::Execution;
use crate::precision::ToleranceConfig;
use crate::robust_stats::{Grouping, MonteCarlo, OutlierConfig, ThresholdRule};
use crate::simulator::SimulationPlan;

/// Factors available to the model: `image`, `operator`, `skill`, `size`,
/// `shape`, `land_cover`, `visibility`.
pub const DEFAULT_MODEL_TERMS: [&str; 6] = ["image", "operator", "size", "shape", "land_cover", "visibility"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub observations: PathBuf,
    pub parcels: PathBuf,
    #[serde(default)]
    pub roster: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierSection {
    pub alpha: f64,
    pub grouping: Grouping,
    pub rule: ThresholdRule,
    pub iterate: bool,
}

impl Default for OutlierSection {
    fn default() -> Self {
        Self { alpha: 0.05, grouping: Grouping::default(), rule: ThresholdRule::default(), iterate: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub execution: Execution,
}

fn default_samples() -> usize {
    MonteCarlo::DEFAULT_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub terms: Vec<String>,
    pub ss_type: SsType,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { terms: DEFAULT_MODEL_TERMS.iter().map(|t| t.to_string()).collect(), ss_type: SsType::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Text,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }

    pub fn text(self) -> bool {
        matches!(self, OutputFormat::Text | OutputFormat::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), format: OutputFormat::Both }
    }
}

/// Run configuration. Relative paths are resolved against the directory of
/// the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub input: Option<InputSection>,
    #[serde(default)]
    pub outliers: OutlierSection,
    pub monte_carlo: MonteCarloSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub tolerance: ToleranceConfig,
    /// Area bounds of the `size` model factor.
    #[serde(default)]
    pub size_classes: SizeThresholds,
    #[serde(default)]
    pub output: OutputSection,
    /// `seed` defaults to the Monte Carlo seed.
    #[serde(default)]
    pub simulation: Option<SimulationPlan>,
    #[serde(skip)]
    pub config_sha256: String,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, InputError> {
        let text = std::fs::read_to_string(path).map_err(|e| InputError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base).map_err(|m| InputError::format(path, m))
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, String> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        let seed = table
            .get("monte_carlo")
            .and_then(|m| m.get("seed"))
            .cloned()
            .ok_or("[monte_carlo] seed is mandatory")?;
        if let Some(toml::Value::Table(sim)) = table.get_mut("simulation") {
            sim.entry("seed").or_insert(seed);
        }
        let mut cfg: Config = table.try_into().map_err(|e: toml::de::Error| e.to_string())?;
        cfg.config_sha256 = sha256_hex(text.as_bytes());
        if let Some(input) = &mut cfg.input {
            input.observations = base_dir.join(&input.observations);
            input.parcels = base_dir.join(&input.parcels);
            input.roster = input.roster.as_ref().map(|r| base_dir.join(r));
        }
        cfg.output.dir = base_dir.join(&cfg.output.dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let a = self.outliers.alpha;
        if !(a > 0.0 && a < 1.0) {
            return Err(format!("[outliers] alpha {a} outside (0, 1)"));
        }
        if self.monte_carlo.samples == 0 {
            return Err("[monte_carlo] samples must be positive".into());
        }
        let p = self.tolerance.probability;
        if !(p > 0.0 && p < 1.0) {
            return Err(format!("[tolerance] probability {p} outside (0, 1)"));
        }
        if self.tolerance.compared_results < 2 {
            return Err("[tolerance] compared_results must be at least 2".into());
        }
        let t = self.size_classes;
        if !(t.small_below > 0.0 && t.small_below <= t.large_above && t.large_above.is_finite()) {
            return Err(format!("[size_classes] need 0 < small_below <= large_above, got {} and {}", t.small_below, t.large_above));
        }
        self.model_spec().map_err(|e| format!("[model] {e}"))?;
        if let Some(plan) = &self.simulation {
            plan.validate().map_err(|e| format!("[simulation] {e}"))?;
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec, crate::linear_model::ModelError> {
        ModelSpec::parse(&self.model.terms)
    }

    pub fn monte_carlo(&self) -> MonteCarlo {
        MonteCarlo::new(self.monte_carlo.samples, self.monte_carlo.seed).with_execution(self.monte_carlo.execution)
    }

    pub fn outlier_config(&self) -> OutlierConfig {
        OutlierConfig {
            alpha: self.outliers.alpha,
            grouping: self.outliers.grouping,
            rule: self.outliers.rule,
            iterate: self.outliers.iterate,
            monte_carlo: self.monte_carlo(),
        }
    }

    /// Replace the Monte Carlo seed and the simulation seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.monte_carlo.seed = seed;
        if let Some(plan) = &mut self.simulation {
            plan.seed = seed;
        }
    }
}

//! File formats: observation CSV, parcel GeoJSON, roster JSON, TOML
//! configuration and report emission.

mod config;
mod geojson;
mod observations;
mod report;
mod roster;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{
    Config, InputSection, ModelSection, MonteCarloSection, OutlierSection, OutputFormat, OutputSection,
    DEFAULT_MODEL_TERMS,
};
pub use geojson::{parcels_to_geojson, parse_parcels_geojson, read_parcels_geojson, REQUIRED_PROPERTIES};
pub use observations::{
    parse_observations_csv, read_observations, write_buffers_csv, write_observations, OBSERVATION_COLUMNS,
};
pub use report::{
    render_text, AnalysisReport, CampaignCounts, FlaggedRecord, ImageReport, ModelReport, OutlierSummary,
    Provenance, SCHEMA_VERSION,
};
pub use roster::{read_roster, roster_from_campaign, Roster};

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: missing column {column:?}")]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("{path}, row {row}: {message}")]
    Row { path: PathBuf, row: u64, message: String },
    #[error("{path}: rows {first_row} and {second_row} repeat parcel/operator/image/replicate {key}")]
    DuplicateRow { path: PathBuf, first_row: u64, second_row: u64, key: String },
    #[error("{path}, feature {feature}: {message}")]
    Feature { path: PathBuf, feature: String, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl InputError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        InputError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn format(path: &Path, message: impl ToString) -> Self {
        InputError::Format { path: path.to_path_buf(), message: message.to_string() }
    }
}

/// Write `bytes` to a temporary sibling of `path`, then rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::InputError;
use crate::campaign::{Campaign, CampaignMetadata, ImageSource, Operator};

/// Operator and image descriptions that the observation table cannot carry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roster {
    #[serde(default)]
    pub metadata: CampaignMetadata,
    #[serde(default)]
    pub operators: Vec<Operator>,
    #[serde(default)]
    pub images: Vec<ImageSource>,
}

pub fn read_roster(path: &Path) -> Result<Roster, InputError> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| InputError::format(path, e))
}

pub fn roster_from_campaign(c: &Campaign) -> Roster {
    Roster { metadata: c.metadata.clone(), operators: c.operators.clone(), images: c.images.clone() }
}

//! Measurement campaign data model and the buffer-width transform.
//!
//! A buffer width converts an area error into meters of uniform boundary
//! offset: `B = (a_measured - a_ref) / p_ref`. Negative buffers mean the
//! parcel was under-measured.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Polygon, SizeClass, SizeThresholds};

/// Maximum tolerated difference between a supplied measured area and the area
/// of the supplied measured polygon before a warning is raised.
pub const AREA_MISMATCH_WARN_M2: f64 = 0.01;

/// Relative tolerance between stored reference measures and the geometry.
pub const REFERENCE_REL_TOL: f64 = 1e-6;

/// Implements `as_str`, `ALL`, `FromStr` (with the allowed list in the error)
/// and `Display` for a factor modality enum.
macro_rules! modality {
    ($name:ident, $label:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = UnknownModality;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(UnknownModality {
                        factor: $label,
                        value: s.to_string(),
                        allowed: Self::ALL.iter().map(|m| m.as_str()).collect(),
                    }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {factor} modality {value:?}; allowed values: {}", allowed.join(", "))]
pub struct UnknownModality {
    pub factor: &'static str,
    pub value: String,
    pub allowed: Vec<&'static str>,
}

modality!(Shape, "shape_class", {
    Simple => "simple",
    Medium => "medium",
    Complex => "complex",
});

modality!(LandCover, "land_cover", {
    BareSoil => "bare_soil",
    GreenCover => "green_cover",
    Marsh => "marsh",
    OliveTrees => "olive_trees",
    Orchard => "orchard",
    Pasture => "pasture",
    Vineyard => "vineyard",
});

modality!(Visibility, "visibility", {
    GoodAll => "good_all",
    GoodOrthoPoorCarto => "good_ortho_poor_carto",
    PoorOrthoGoodCarto => "poor_ortho_good_carto",
    PoorAll => "poor_all",
});

modality!(Skill, "skill", {
    Skilled => "skilled",
    Unskilled => "unskilled",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorLabels {
    pub shape: Shape,
    pub land_cover: LandCover,
    pub visibility: Visibility,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceParcel {
    pub id: String,
    pub polygon: Option<Polygon>,
    pub a_ref: f64,
    pub p_ref: f64,
    pub size_class: SizeClass,
    pub labels: FactorLabels,
}

impl ReferenceParcel {
    pub fn from_polygon(id: impl Into<String>, polygon: Polygon, labels: FactorLabels) -> Result<Self, GeometryError> {
        Self::from_polygon_with(id, polygon, labels, &SizeThresholds::default())
    }

    pub fn from_polygon_with(
        id: impl Into<String>,
        polygon: Polygon,
        labels: FactorLabels,
        thresholds: &SizeThresholds,
    ) -> Result<Self, GeometryError> {
        let a_ref = polygon.area();
        let p_ref = polygon.perimeter();
        let size_class = thresholds.classify(a_ref)?;
        Ok(Self { id: id.into(), polygon: Some(polygon), a_ref, p_ref, size_class, labels })
    }

    /// Reference parcel known only by its area and perimeter.
    pub fn from_measures(
        id: impl Into<String>,
        a_ref: f64,
        p_ref: f64,
        labels: FactorLabels,
    ) -> Result<Self, CampaignError> {
        let id = id.into();
        if !(p_ref > 0.0 && p_ref.is_finite()) {
            return Err(CampaignError::NonPositivePerimeter { parcel: id, p_ref });
        }
        let size_class = SizeThresholds::default()
            .classify(a_ref)
            .map_err(|source| CampaignError::Geometry { parcel: id.clone(), source })?;
        Ok(Self { id, polygon: None, a_ref, p_ref, size_class, labels })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operator {
    pub id: String,
    /// Unknown when the campaign was loaded without a roster.
    pub skill: Option<Skill>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSource {
    pub id: String,
    /// Free label such as "orthophoto" or "cartosat-fore".
    pub kind: String,
    /// Ground sampling distance in m; unknown without a roster.
    pub gsd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub parcel_id: String,
    pub operator_id: String,
    pub image_id: String,
    pub replicate: u32,
    /// Measured area in m² as reported.
    pub measured_area: Option<f64>,
    /// Digitized outline; its area wins over `measured_area`.
    pub polygon: Option<Polygon>,
}

impl Observation {
    pub fn with_area(
        parcel_id: impl Into<String>,
        operator_id: impl Into<String>,
        image_id: impl Into<String>,
        replicate: u32,
        area: f64,
    ) -> Self {
        Self {
            parcel_id: parcel_id.into(),
            operator_id: operator_id.into(),
            image_id: image_id.into(),
            replicate,
            measured_area: Some(area),
            polygon: None,
        }
    }

    /// The area `a_i` used by all statistics.
    pub fn area(&self) -> Option<f64> {
        self.polygon.as_ref().map(Polygon::area).or(self.measured_area)
    }

    fn key(&self) -> (&str, &str, &str, u32) {
        (&self.parcel_id, &self.operator_id, &self.image_id, self.replicate)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignMetadata {
    #[serde(default)]
    pub site: String,
    #[serde(default)]
    pub date: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Campaign {
    pub metadata: CampaignMetadata,
    pub parcels: Vec<ReferenceParcel>,
    pub operators: Vec<Operator>,
    pub images: Vec<ImageSource>,
    pub observations: Vec<Observation>,
}

/// One buffer width, keyed back to its observation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BufferRecord {
    /// Index into `Campaign::observations`.
    pub observation: usize,
    pub parcel_id: String,
    pub operator_id: String,
    pub image_id: String,
    pub replicate: u32,
    pub measured_area: f64,
    pub a_ref: f64,
    pub p_ref: f64,
    pub buffer: f64,
    pub outlier: bool,
}

/// A single broken campaign invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Issue {
    DuplicateId { entity: &'static str, id: String },
    UnknownParcel { observation: usize, id: String },
    UnknownOperator { observation: usize, id: String },
    UnknownImage { observation: usize, id: String },
    DuplicateObservation { first: usize, second: usize },
    MissingArea { observation: usize },
    NonPositiveArea { observation: usize, area: f64 },
    ZeroReplicate { observation: usize },
    BadReference { parcel: String, detail: String },
    BadImage { image: String, detail: String },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::DuplicateId { entity, id } => write!(f, "duplicate {entity} id {id:?}"),
            Issue::UnknownParcel { observation, id } => {
                write!(f, "observation {observation}: unknown parcel {id:?}")
            }
            Issue::UnknownOperator { observation, id } => {
                write!(f, "observation {observation}: unknown operator {id:?}")
            }
            Issue::UnknownImage { observation, id } => {
                write!(f, "observation {observation}: unknown image {id:?}")
            }
            Issue::DuplicateObservation { first, second } => {
                write!(f, "observations {first} and {second} share parcel/operator/image/replicate")
            }
            Issue::MissingArea { observation } => write!(f, "observation {observation}: no area and no polygon"),
            Issue::NonPositiveArea { observation, area } => {
                write!(f, "observation {observation}: measured area {area} is not positive")
            }
            Issue::ZeroReplicate { observation } => write!(f, "observation {observation}: replicate must be >= 1"),
            Issue::BadReference { parcel, detail } => write!(f, "parcel {parcel:?}: {detail}"),
            Issue::BadImage { image, detail } => write!(f, "image {image:?}: {detail}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    AreaMismatch { observation: usize, supplied: f64, from_polygon: f64 },
    UnmeasuredPair { parcel: String, image: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::AreaMismatch { observation, supplied, from_polygon } => write!(
                f,
                "observation {observation}: supplied area {supplied} differs from polygon area {from_polygon}"
            ),
            Warning::UnmeasuredPair { parcel, image } => {
                write!(f, "parcel {parcel:?} has no observation on image {image:?}")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CampaignError {
    #[error("campaign validation failed: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Issue>),
    #[error("parcel {parcel:?}: reference perimeter must be positive, got {p_ref}")]
    NonPositivePerimeter { parcel: String, p_ref: f64 },
    #[error("parcel {parcel:?}: {source}")]
    Geometry { parcel: String, source: GeometryError },
}

/// `(a_i - a_ref) / p_ref` in meters.
pub fn compute_buffer(measured_area: f64, parcel: &ReferenceParcel) -> Result<f64, CampaignError> {
    if !(parcel.p_ref > 0.0) {
        return Err(CampaignError::NonPositivePerimeter { parcel: parcel.id.clone(), p_ref: parcel.p_ref });
    }
    Ok((measured_area - parcel.a_ref) / parcel.p_ref)
}

impl Campaign {
    /// Checks every invariant; returns non-fatal warnings on success.
    pub fn validate(&self) -> Result<Vec<Warning>, CampaignError> {
        let mut issues = Vec::new();
        let mut warnings = Vec::new();

        let parcels = index_ids("parcel", self.parcels.iter().map(|p| p.id.as_str()), &mut issues);
        let operators = index_ids("operator", self.operators.iter().map(|o| o.id.as_str()), &mut issues);
        let images = index_ids("image", self.images.iter().map(|i| i.id.as_str()), &mut issues);

        for p in &self.parcels {
            check_reference(p, &mut issues);
        }
        for img in &self.images {
            if let Some(gsd) = img.gsd {
                if !(gsd > 0.0 && gsd.is_finite()) {
                    issues.push(Issue::BadImage { image: img.id.clone(), detail: format!("gsd {gsd} must be positive") });
                }
            }
        }

        let mut seen: HashMap<(&str, &str, &str, u32), usize> = HashMap::new();
        let mut measured_pairs: HashSet<(&str, &str)> = HashSet::new();
        for (i, obs) in self.observations.iter().enumerate() {
            if !parcels.contains_key(obs.parcel_id.as_str()) {
                issues.push(Issue::UnknownParcel { observation: i, id: obs.parcel_id.clone() });
            }
            if !operators.contains_key(obs.operator_id.as_str()) {
                issues.push(Issue::UnknownOperator { observation: i, id: obs.operator_id.clone() });
            }
            if !images.contains_key(obs.image_id.as_str()) {
                issues.push(Issue::UnknownImage { observation: i, id: obs.image_id.clone() });
            }
            if obs.replicate == 0 {
                issues.push(Issue::ZeroReplicate { observation: i });
            }
            if let Some(first) = seen.insert(obs.key(), i) {
                issues.push(Issue::DuplicateObservation { first, second: i });
            }
            match obs.area() {
                None => issues.push(Issue::MissingArea { observation: i }),
                Some(a) if !(a > 0.0 && a.is_finite()) => {
                    issues.push(Issue::NonPositiveArea { observation: i, area: a })
                }
                Some(_) => {}
            }
            if let (Some(poly), Some(supplied)) = (&obs.polygon, obs.measured_area) {
                let from_polygon = poly.area();
                if (from_polygon - supplied).abs() > AREA_MISMATCH_WARN_M2 {
                    warnings.push(Warning::AreaMismatch { observation: i, supplied, from_polygon });
                }
            }
            measured_pairs.insert((&obs.parcel_id, &obs.image_id));
        }

        if !issues.is_empty() {
            return Err(CampaignError::Invalid(issues));
        }
        if !self.observations.is_empty() {
            for p in &self.parcels {
                for img in &self.images {
                    if !measured_pairs.contains(&(p.id.as_str(), img.id.as_str())) {
                        warnings.push(Warning::UnmeasuredPair { parcel: p.id.clone(), image: img.id.clone() });
                    }
                }
            }
        }
        Ok(warnings)
    }

    /// One buffer record per observation, ordered by parcel, image, operator
    /// (each in campaign declaration order) and replicate.
    pub fn build_buffer_table(&self) -> Result<Vec<BufferRecord>, CampaignError> {
        let mut issues = Vec::new();
        let parcels = index_ids("parcel", self.parcels.iter().map(|p| p.id.as_str()), &mut issues);
        let operators = index_ids("operator", self.operators.iter().map(|o| o.id.as_str()), &mut issues);
        let images = index_ids("image", self.images.iter().map(|i| i.id.as_str()), &mut issues);

        let mut keyed = Vec::with_capacity(self.observations.len());
        for (i, obs) in self.observations.iter().enumerate() {
            let p = parcels.get(obs.parcel_id.as_str()).copied();
            let o = operators.get(obs.operator_id.as_str()).copied();
            let m = images.get(obs.image_id.as_str()).copied();
            if p.is_none() {
                issues.push(Issue::UnknownParcel { observation: i, id: obs.parcel_id.clone() });
            }
            if o.is_none() {
                issues.push(Issue::UnknownOperator { observation: i, id: obs.operator_id.clone() });
            }
            if m.is_none() {
                issues.push(Issue::UnknownImage { observation: i, id: obs.image_id.clone() });
            }
            let area = obs.area();
            if area.is_none() {
                issues.push(Issue::MissingArea { observation: i });
            }
            if let (Some(p), Some(o), Some(m), Some(area)) = (p, o, m, area) {
                keyed.push(((p, m, o, obs.replicate, i), area));
            }
        }
        if !issues.is_empty() {
            return Err(CampaignError::Invalid(issues));
        }
        keyed.sort_by_key(|(k, _)| *k);

        keyed
            .into_iter()
            .map(|((p, _, _, replicate, i), area)| {
                let parcel = &self.parcels[p];
                let obs = &self.observations[i];
                Ok(BufferRecord {
                    observation: i,
                    parcel_id: obs.parcel_id.clone(),
                    operator_id: obs.operator_id.clone(),
                    image_id: obs.image_id.clone(),
                    replicate,
                    measured_area: area,
                    a_ref: parcel.a_ref,
                    p_ref: parcel.p_ref,
                    buffer: compute_buffer(area, parcel)?,
                    outlier: false,
                })
            })
            .collect()
    }

    pub fn parcel(&self, id: &str) -> Option<&ReferenceParcel> {
        self.parcels.iter().find(|p| p.id == id)
    }

    pub fn operator(&self, id: &str) -> Option<&Operator> {
        self.operators.iter().find(|o| o.id == id)
    }
}

fn index_ids<'a>(
    entity: &'static str,
    ids: impl Iterator<Item = &'a str>,
    issues: &mut Vec<Issue>,
) -> HashMap<&'a str, usize> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if map.insert(id, i).is_some() {
            issues.push(Issue::DuplicateId { entity, id: id.to_string() });
        }
    }
    map
}

fn check_reference(p: &ReferenceParcel, issues: &mut Vec<Issue>) {
    let mut bad = |detail: String| issues.push(Issue::BadReference { parcel: p.id.clone(), detail });
    if !(p.a_ref > 0.0 && p.a_ref.is_finite()) {
        bad(format!("reference area {} must be positive", p.a_ref));
    }
    if !(p.p_ref > 0.0 && p.p_ref.is_finite()) {
        bad(format!("reference perimeter {} must be positive", p.p_ref));
    }
    if let Some(poly) = &p.polygon {
        let (a, l) = (poly.area(), poly.perimeter());
        if (a - p.a_ref).abs() > REFERENCE_REL_TOL * a {
            bad(format!("reference area {} disagrees with polygon area {a}", p.a_ref));
        }
        if (l - p.p_ref).abs() > REFERENCE_REL_TOL * l {
            bad(format!("reference perimeter {} disagrees with polygon perimeter {l}", p.p_ref));
        }
    }
}

/// Groups records by image id; each group keeps the input order.
pub fn partition_by_image(records: &[BufferRecord]) -> BTreeMap<String, Vec<BufferRecord>> {
    let mut out: BTreeMap<String, Vec<BufferRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.image_id.clone()).or_default().push(r.clone());
    }
    out
}

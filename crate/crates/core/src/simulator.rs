//! Synthetic campaigns with a known error structure.
//!
//! Errors are injected on the buffer scale: each result draws
//! `B ~ N(bias_o, (sd_o · m_image)²)` and reports `a_ref + B · p_ref`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{
    Campaign, CampaignMetadata, FactorLabels, ImageSource, LandCover, Observation, Operator, ReferenceParcel, Shape,
    Skill, Visibility,
};
use crate::geometry::{Point, Polygon, SizeClass, SizeThresholds};
use crate::par::{map_indexed, rng_for, Execution, Stream};

/// Attempts allowed for polygon generation and positive-area draws.
pub const MAX_ATTEMPTS: usize = 1000;

const GRID_ORIGIN: (f64, f64) = (640_000.0, 4_840_000.0);
const GRID_SPACING_M: f64 = 2_000.0;
const GRID_COLUMNS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("{name} mix weights must be non-negative and sum to 1 (sum {sum})")]
    BadMix { name: &'static str, sum: f64 },
    #[error("operator {0:?}: sd must be finite and non-negative")]
    BadOperator(String),
    #[error("image {0:?}: noise multiplier must be finite and non-negative")]
    BadImage(String),
    #[error("plan needs at least one parcel, operator and image")]
    Empty,
    #[error("replicates must be at least 1")]
    Replicates,
    #[error("dropout probability {0} outside [0, 1)")]
    Dropout(f64),
    #[error("contamination needs rate in [0, 1] and 0 <= min <= max magnitude")]
    Contamination,
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("parcel {index}: no valid polygon after {MAX_ATTEMPTS} attempts")]
    Generation { index: usize },
    #[error("parcel {parcel:?}: no positive area after {MAX_ATTEMPTS} draws")]
    NonPositiveArea { parcel: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorErrorModel {
    pub id: String,
    #[serde(default = "default_skill")]
    pub skill: Skill,
    /// Systematic buffer offset in m.
    #[serde(default)]
    pub bias: f64,
    /// Replicate noise on the buffer in m.
    pub sd: f64,
}

fn default_skill() -> Skill {
    Skill::Skilled
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageModel {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub gsd: Option<f64>,
    #[serde(default = "one")]
    pub noise_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

/// Gross errors added to a fraction of results, with random sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    pub rate: f64,
    pub min_magnitude: f64,
    pub max_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationPlan {
    pub parcels: usize,
    pub size_mix: BTreeMap<SizeClass, f64>,
    pub shape_mix: BTreeMap<Shape, f64>,
    pub land_cover_mix: BTreeMap<LandCover, f64>,
    pub visibility_mix: BTreeMap<Visibility, f64>,
    pub operators: Vec<OperatorErrorModel>,
    pub images: Vec<ImageModel>,
    pub replicates: u32,
    /// Probability that a single result is missing.
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub contamination: Option<Contamination>,
    pub seed: u64,
}

fn uniform<K: Ord + Copy>(keys: &[K]) -> BTreeMap<K, f64> {
    keys.iter().map(|&k| (k, 1.0 / keys.len() as f64)).collect()
}

impl Default for SimulationPlan {
    /// 185 parcels, five unbiased operators with unit replicate noise, one
    /// orthophoto and two noisier satellite views, three replicates.
    fn default() -> Self {
        Self {
            parcels: 185,
            size_mix: uniform(&SizeClass::ALL),
            shape_mix: uniform(Shape::ALL),
            land_cover_mix: uniform(LandCover::ALL),
            visibility_mix: uniform(Visibility::ALL),
            operators: (1..=5)
                .map(|i| OperatorErrorModel { id: format!("op{i}"), skill: Skill::Skilled, bias: 0.0, sd: 1.0 })
                .collect(),
            images: vec![
                ImageModel { id: "ortho".into(), kind: "orthophoto".into(), gsd: Some(0.5), noise_multiplier: 1.0 },
                ImageModel { id: "fore".into(), kind: "satellite".into(), gsd: Some(2.5), noise_multiplier: 1.8 },
                ImageModel { id: "aft".into(), kind: "satellite".into(), gsd: Some(2.5), noise_multiplier: 2.2 },
            ],
            replicates: 3,
            dropout: 0.0,
            contamination: None,
            seed: 0,
        }
    }
}

fn check_mix<K>(name: &'static str, mix: &BTreeMap<K, f64>) -> Result<(), SimulationError> {
    let sum: f64 = mix.values().sum();
    if mix.values().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(SimulationError::BadMix { name, sum });
    }
    Ok(())
}

fn check_unique<'a>(kind: &'static str, ids: impl Iterator<Item = &'a str>) -> Result<(), SimulationError> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(SimulationError::DuplicateId { kind, id: id.to_string() });
        }
    }
    Ok(())
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<(), SimulationError> {
        check_mix("size", &self.size_mix)?;
        check_mix("shape", &self.shape_mix)?;
        check_mix("land cover", &self.land_cover_mix)?;
        check_mix("visibility", &self.visibility_mix)?;
        if self.parcels == 0 || self.operators.is_empty() || self.images.is_empty() {
            return Err(SimulationError::Empty);
        }
        if self.replicates == 0 {
            return Err(SimulationError::Replicates);
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(SimulationError::Dropout(self.dropout));
        }
        for o in &self.operators {
            if !(o.sd >= 0.0 && o.sd.is_finite() && o.bias.is_finite()) {
                return Err(SimulationError::BadOperator(o.id.clone()));
            }
        }
        for i in &self.images {
            if !(i.noise_multiplier >= 0.0 && i.noise_multiplier.is_finite()) {
                return Err(SimulationError::BadImage(i.id.clone()));
            }
        }
        if let Some(c) = self.contamination {
            let ok = (0.0..=1.0).contains(&c.rate) && c.min_magnitude >= 0.0 && c.min_magnitude <= c.max_magnitude;
            if !ok || !c.max_magnitude.is_finite() {
                return Err(SimulationError::Contamination);
            }
        }
        check_unique("operator", self.operators.iter().map(|o| o.id.as_str()))?;
        check_unique("image", self.images.iter().map(|i| i.id.as_str()))?;
        Ok(())
    }
}

fn draw<K: Copy>(mix: &BTreeMap<K, f64>, rng: &mut ChaCha8Rng) -> K {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (&k, &w) in mix {
        if w > 0.0 {
            acc += w;
            last = Some(k);
            if u < acc {
                return k;
            }
        }
    }
    last.expect("validated mix has positive weight")
}

/// Target area range in m² for a class, kept clear of the thresholds.
fn area_range(class: SizeClass, t: &SizeThresholds) -> (f64, f64) {
    match class {
        SizeClass::Small => (0.1 * t.small_below, 0.95 * t.small_below),
        SizeClass::Medium => (1.05 * t.small_below, 0.95 * t.large_above),
        SizeClass::Large => (1.05 * t.large_above, 3.0 * t.large_above),
    }
}

fn rectangle(aspect: f64) -> Vec<(f64, f64)> {
    let (w, h) = (aspect.sqrt(), 1.0 / aspect.sqrt());
    vec![(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
}

/// Unit-scale outline for a shape class, before scaling and placement.
fn raw_outline(shape: Shape, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    match shape {
        Shape::Simple => rectangle(rng.random_range(1.0..4.0)),
        Shape::Medium => {
            let rect = rectangle(rng.random_range(1.0..3.0));
            let short = rect[2].1.min(rect[2].0);
            let k = rng.random_range(1..=3);
            let mut edges = [0, 1, 2, 3];
            for i in 0..k {
                let j = rng.random_range(i..4);
                edges.swap(i, j);
            }
            let bent = &edges[..k];
            let mut out = Vec::with_capacity(4 + k);
            for e in 0..4 {
                let (a, b) = (rect[e], rect[(e + 1) % 4]);
                out.push(a);
                if bent.contains(&e) {
                    let t = rng.random_range(0.25..0.75);
                    let depth = rng.random_range(0.05..0.3) * short * if rng.random::<bool>() { 1.0 } else { -1.0 };
                    // outward normal of a counter-clockwise ring
                    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                    let len = dx.hypot(dy);
                    out.push((a.0 + t * dx + depth * dy / len, a.1 + t * dy - depth * dx / len));
                }
            }
            out
        }
        Shape::Complex => {
            let n = rng.random_range(8..=20);
            let step = std::f64::consts::TAU / n as f64;
            (0..n)
                .map(|i| {
                    let angle = (i as f64 + rng.random_range(-0.35..0.35)) * step;
                    let r = rng.random_range(0.5..1.0);
                    (r * angle.cos(), r * angle.sin())
                })
                .collect()
        }
    }
}

fn shoelace(v: &[(f64, f64)]) -> f64 {
    let n = v.len();
    (0..n).map(|i| v[i].0 * v[(i + 1) % n].1 - v[(i + 1) % n].0 * v[i].1).sum::<f64>().abs() / 2.0
}

/// Reference parcel `index` of the plan. Labels and geometry come from the
/// parcel's own seed stream, so parcels can be generated in any order.
pub fn generate_parcel(plan: &SimulationPlan, index: usize) -> Result<ReferenceParcel, SimulationError> {
    let mut rng = rng_for(plan.seed, Stream::Parcel, 0, index as u64);
    let size = draw(&plan.size_mix, &mut rng);
    let shape = draw(&plan.shape_mix, &mut rng);
    let labels = FactorLabels {
        shape,
        land_cover: draw(&plan.land_cover_mix, &mut rng),
        visibility: draw(&plan.visibility_mix, &mut rng),
    };
    let thresholds = SizeThresholds::default();
    let (lo, hi) = area_range(size, &thresholds);
    let target = (rng.random_range(lo.ln()..hi.ln())).exp();
    let centre = (
        GRID_ORIGIN.0 + (index % GRID_COLUMNS) as f64 * GRID_SPACING_M,
        GRID_ORIGIN.1 + (index / GRID_COLUMNS) as f64 * GRID_SPACING_M,
    );
    let id = format!("P{:04}", index + 1);

    for _ in 0..MAX_ATTEMPTS {
        let raw = raw_outline(shape, &mut rng);
        let scale = (target / shoelace(&raw)).sqrt();
        let (cx, cy) = raw.iter().fold((0.0, 0.0), |(x, y), p| (x + p.0, y + p.1));
        let (cx, cy) = (cx / raw.len() as f64, cy / raw.len() as f64);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let (s, c) = theta.sin_cos();
        let vertices: Vec<Point> = raw
            .iter()
            .map(|&(x, y)| {
                let (x, y) = ((x - cx) * scale, (y - cy) * scale);
                Point::new(centre.0 + c * x - s * y, centre.1 + s * x + c * y)
            })
            .collect();
        let Ok(polygon) = Polygon::new(vertices) else { continue };
        if let Ok(parcel) = ReferenceParcel::from_polygon_with(id.clone(), polygon, labels, &thresholds) {
            if parcel.size_class == size {
                return Ok(parcel);
            }
        }
    }
    Err(SimulationError::Generation { index })
}

/// One simulated result. `gross` is added on top of the normal draw; when
/// a negative gross error would make the area non-positive its sign flips.
pub fn simulate_observation(
    parcel: &ReferenceParcel,
    operator: &OperatorErrorModel,
    image: &ImageModel,
    replicate: u32,
    gross: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Observation, SimulationError> {
    let sd = operator.sd * image.noise_multiplier;
    let normal = Normal::new(operator.bias, sd).map_err(|_| SimulationError::BadOperator(operator.id.clone()))?;
    for _ in 0..MAX_ATTEMPTS {
        let b = normal.sample(rng);
        let mut area = parcel.a_ref + (b + gross) * parcel.p_ref;
        if area <= 0.0 && gross < 0.0 {
            area = parcel.a_ref + (b - gross) * parcel.p_ref;
        }
        if area > 0.0 {
            return Ok(Observation::with_area(&parcel.id, &operator.id, &image.id, replicate, area));
        }
    }
    Err(SimulationError::NonPositiveArea { parcel: parcel.id.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCampaign {
    pub campaign: Campaign,
    /// Per observation: whether a gross error was injected.
    pub contaminated: Vec<bool>,
}

pub fn generate_campaign(plan: &SimulationPlan) -> Result<SimulatedCampaign, SimulationError> {
    generate_campaign_with(plan, Execution::default())
}

/// Observations are ordered by parcel, image, operator, replicate.
pub fn generate_campaign_with(plan: &SimulationPlan, exec: Execution) -> Result<SimulatedCampaign, SimulationError> {
    plan.validate()?;
    let per_parcel = map_indexed(exec, plan.parcels, |i| -> Result<_, SimulationError> {
        let parcel = generate_parcel(plan, i)?;
        let mut rng = rng_for(plan.seed, Stream::Observation, 0, i as u64);
        let mut obs = Vec::new();
        let mut flags = Vec::new();
        for image in &plan.images {
            for op in &plan.operators {
                for rep in 1..=plan.replicates {
                    let dropped = rng.random::<f64>() < plan.dropout;
                    let gross = match plan.contamination {
                        Some(c) if rng.random::<f64>() < c.rate => {
                            let m = rng.random_range(c.min_magnitude..=c.max_magnitude);
                            if rng.random::<bool>() { m } else { -m }
                        }
                        _ => 0.0,
                    };
                    let o = simulate_observation(&parcel, op, image, rep, gross, &mut rng)?;
                    if !dropped {
                        obs.push(o);
                        flags.push(gross != 0.0);
                    }
                }
            }
        }
        Ok((parcel, obs, flags))
    });

    let mut campaign = Campaign {
        metadata: CampaignMetadata { site: "simulated".into(), date: String::new() },
        operators: plan.operators.iter().map(|o| Operator { id: o.id.clone(), skill: Some(o.skill) }).collect(),
        images: plan
            .images
            .iter()
            .map(|i| ImageSource { id: i.id.clone(), kind: i.kind.clone(), gsd: i.gsd })
            .collect(),
        ..Default::default()
    };
    let mut contaminated = Vec::new();
    for r in per_parcel {
        let (parcel, obs, flags) = r?;
        campaign.parcels.push(parcel);
        campaign.observations.extend(obs);
        contaminated.extend(flags);
    }
    Ok(SimulatedCampaign { campaign, contaminated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn square_parcel() -> ReferenceParcel {
        let sq = Polygon::new([(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0)].map(Point::from).to_vec()).unwrap();
        let labels = FactorLabels { shape: Shape::Simple, land_cover: LandCover::Pasture, visibility: Visibility::GoodAll };
        ReferenceParcel::from_polygon("sq", sq, labels).unwrap()
    }

    fn model(bias: f64, sd: f64) -> OperatorErrorModel {
        OperatorErrorModel { id: "o".into(), skill: Skill::Skilled, bias, sd }
    }

    fn image() -> ImageModel {
        ImageModel { id: "i".into(), kind: "orthophoto".into(), gsd: None, noise_multiplier: 1.0 }
    }

    #[test]
    fn noiseless_observation_inverts_buffer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = square_parcel();
        let o = simulate_observation(&p, &model(0.0, 0.0), &image(), 1, 0.0, &mut rng).unwrap();
        assert_eq!(o.measured_area, Some(10_000.0));
        let o = simulate_observation(&p, &model(1.0, 0.0), &image(), 1, 0.0, &mut rng).unwrap();
        assert_eq!(o.measured_area, Some(10_400.0));
    }

    #[test]
    fn gross_error_keeps_area_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let o = simulate_observation(&square_parcel(), &model(0.0, 0.0), &image(), 1, -40.0, &mut rng).unwrap();
        assert_eq!(o.measured_area, Some(26_000.0));
    }

    #[test]
    fn simple_small_parcels() {
        let plan = SimulationPlan {
            size_mix: [(SizeClass::Small, 1.0)].into(),
            shape_mix: [(Shape::Simple, 1.0)].into(),
            ..Default::default()
        };
        for i in 0..50 {
            let p = generate_parcel(&plan, i).unwrap();
            assert!(p.a_ref < 20_000.0);
            assert_eq!(p.polygon.as_ref().unwrap().vertices().len(), 4);
            assert_eq!(p, generate_parcel(&plan, i).unwrap());
        }
    }

    #[test]
    fn every_shape_and_class_generates() {
        for &shape in Shape::ALL {
            for class in SizeClass::ALL {
                let plan =
                    SimulationPlan { size_mix: [(class, 1.0)].into(), shape_mix: [(shape, 1.0)].into(), ..Default::default() };
                for i in 0..30 {
                    let p = generate_parcel(&plan, i).unwrap();
                    assert_eq!((p.size_class, p.labels.shape), (class, shape));
                }
            }
        }
    }

    #[test]
    fn full_factorial_cardinality() {
        let plan = SimulationPlan { parcels: 185, ..Default::default() };
        let sim = generate_campaign(&plan).unwrap();
        assert_eq!(sim.campaign.observations.len(), 185 * 5 * 3 * 3);
        assert!(sim.campaign.validate().is_ok());
    }

    #[test]
    fn execution_mode_does_not_change_output() {
        let plan = SimulationPlan { parcels: 20, dropout: 0.2, seed: 9, ..Default::default() };
        let a = generate_campaign_with(&plan, Execution::Sequential).unwrap();
        let b = generate_campaign_with(&plan, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_plans() {
        let bad_mix = SimulationPlan { size_mix: [(SizeClass::Small, 0.5)].into(), ..Default::default() };
        assert!(matches!(bad_mix.validate(), Err(SimulationError::BadMix { .. })));
        let no_reps = SimulationPlan { replicates: 0, ..Default::default() };
        assert_eq!(no_reps.validate(), Err(SimulationError::Replicates));
        let mut neg = SimulationPlan::default();
        neg.operators[0].sd = -1.0;
        assert!(matches!(neg.validate(), Err(SimulationError::BadOperator(_))));
    }
}

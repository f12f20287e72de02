//! Planar polygon validity, area, perimeter and size classification.
//!
//! Coordinates are projected meters (e.g. UTM). Rings are stored open: the
//! first vertex is not repeated at the end.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two consecutive vertices closer than this (per axis) count as duplicates.
pub const DUPLICATE_TOLERANCE_M: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// One broken polygon invariant, with the vertex indices involved.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TooFewVertices { count: usize },
    NonFiniteVertex { index: usize },
    DuplicateVertex { first: usize, second: usize },
    /// Edges are identified by their starting vertex; edge `i` runs from
    /// vertex `i` to vertex `i + 1` (wrapping).
    SelfIntersection { edge_a: usize, edge_b: usize },
    ZeroArea,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewVertices { count } => {
                write!(f, "too few vertices ({count}, need at least 3)")
            }
            Violation::NonFiniteVertex { index } => write!(f, "vertex {index} is not finite"),
            Violation::DuplicateVertex { first, second } => {
                write!(f, "vertices {first} and {second} coincide")
            }
            Violation::SelfIntersection { edge_a, edge_b } => {
                write!(f, "self-intersection between edges {edge_a} and {edge_b}")
            }
            Violation::ZeroArea => write!(f, "ring encloses zero area"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid polygon: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("area must be positive, got {0} m²")]
    NonPositiveArea(f64),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A simple (non self-intersecting) ring without holes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let violations = validate_polygon(&vertices);
        if violations.is_empty() {
            Ok(Self { vertices })
        } else {
            Err(GeometryError::Invalid(violations))
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Shoelace area in m², independent of orientation.
    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    /// Sum of edge lengths including the closing edge, in m.
    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                (b.x - a.x).hypot(b.y - a.y)
            })
            .sum()
    }

    /// Positive for counter-clockwise rings.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }
}

/// Shoelace sum over coordinates taken relative to the first vertex, which
/// keeps precision with large projected offsets.
fn signed_area(vertices: &[Point]) -> f64 {
    let Some(&origin) = vertices.first() else {
        return 0.0;
    };
    let n = vertices.len();
    let mut twice = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let (ax, ay) = (a.x - origin.x, a.y - origin.y);
        let (bx, by) = (b.x - origin.x, b.y - origin.y);
        twice += ax * by - bx * ay;
    }
    twice / 2.0
}

/// Lists every broken polygon invariant; empty means the ring is valid.
pub fn validate_polygon(vertices: &[Point]) -> Vec<Violation> {
    let n = vertices.len();
    if n < 3 {
        return vec![Violation::TooFewVertices { count: n }];
    }
    let mut out: Vec<Violation> = vertices
        .iter()
        .enumerate()
        .filter(|(_, p)| !(p.x.is_finite() && p.y.is_finite()))
        .map(|(index, _)| Violation::NonFiniteVertex { index })
        .collect();
    if !out.is_empty() {
        return out;
    }

    let mut degenerate_edge = vec![false; n];
    for i in 0..n {
        let j = (i + 1) % n;
        let (a, b) = (vertices[i], vertices[j]);
        if (a.x - b.x).abs() <= DUPLICATE_TOLERANCE_M && (a.y - b.y).abs() <= DUPLICATE_TOLERANCE_M {
            degenerate_edge[i] = true;
            out.push(Violation::DuplicateVertex { first: i, second: j });
        }
    }

    // edges between distinct consecutive vertices, by original start index
    let edges: Vec<usize> = (0..n).filter(|&i| !degenerate_edge[i]).collect();
    let m = edges.len();
    if m < 3 {
        if out.is_empty() {
            out.push(Violation::ZeroArea);
        }
        return out;
    }
    let origin = vertices[0];
    let local = |i: usize| (vertices[i].x - origin.x, vertices[i].y - origin.y);
    for a in 0..m {
        for b in (a + 1)..m {
            let (p1, p2) = (local(edges[a]), local(edges[(a + 1) % m]));
            let (q1, q2) = (local(edges[b]), local(edges[(b + 1) % m]));
            let hit = if b == a + 1 {
                // shared vertex p2 == q1: only a fold back along the same line counts
                folds_back(p1, p2, q2)
            } else if a == 0 && b == m - 1 {
                // shared vertex p1 == q2
                folds_back(p2, p1, q1)
            } else {
                segments_intersect(p1, p2, q1, q2)
            };
            if hit {
                out.push(Violation::SelfIntersection { edge_a: edges[a], edge_b: edges[b] });
            }
        }
    }

    if out.is_empty() && signed_area(vertices) == 0.0 {
        out.push(Violation::ZeroArea);
    }
    out
}

type Xy = (f64, f64);

fn orient(a: Xy, b: Xy, c: Xy) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: Xy, b: Xy, p: Xy) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_intersect(p1: Xy, p2: Xy, q1: Xy, q2: Xy) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Edges `a -> shared` and `shared -> c` overlap beyond their common vertex.
fn folds_back(a: Xy, shared: Xy, c: Xy) -> bool {
    if orient(a, shared, c) != 0.0 {
        return false;
    }
    let u = (a.0 - shared.0, a.1 - shared.1);
    let v = (c.0 - shared.0, c.1 - shared.1);
    u.0 * v.0 + u.1 * v.1 > 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }
}

/// Area thresholds in m². Both bounds belong to `Medium`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizeThresholds {
    pub small_below: f64,
    pub large_above: f64,
}

impl Default for SizeThresholds {
    fn default() -> Self {
        // 2 ha and 8 ha
        Self { small_below: 20_000.0, large_above: 80_000.0 }
    }
}

impl SizeThresholds {
    pub fn classify(&self, area: f64) -> Result<SizeClass, GeometryError> {
        if !(area > 0.0) || !area.is_finite() {
            return Err(GeometryError::NonPositiveArea(area));
        }
        Ok(if area < self.small_below {
            SizeClass::Small
        } else if area <= self.large_above {
            SizeClass::Medium
        } else {
            SizeClass::Large
        })
    }
}

/// Size class under the default 2 ha / 8 ha thresholds.
pub fn classify_size(area: f64) -> Result<SizeClass, GeometryError> {
    SizeThresholds::default().classify(area)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(pts: &[(f64, f64)]) -> Result<Polygon, GeometryError> {
        Polygon::new(pts.iter().copied().map(Point::from).collect())
    }

    const SQUARE: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    const TRIANGLE: [(f64, f64); 3] = [(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)];

    #[test]
    fn unit_square() {
        let p = poly(&SQUARE).unwrap();
        assert_eq!(p.area(), 1.0);
        assert_eq!(p.perimeter(), 4.0);
        let mut rev = SQUARE;
        rev.reverse();
        assert_eq!(poly(&rev).unwrap().area(), 1.0);
        assert!(p.signed_area() > 0.0);
    }

    #[test]
    fn triangle_345() {
        let p = poly(&TRIANGLE).unwrap();
        assert_eq!(p.area(), 6.0);
        assert_eq!(p.perimeter(), 12.0);
    }

    #[test]
    fn large_offsets_keep_precision() {
        let shifted: Vec<_> = SQUARE.iter().map(|&(x, y)| (x + 640_000.0, y + 4_840_000.0)).collect();
        assert_eq!(poly(&shifted).unwrap().area(), 1.0);
    }

    #[test]
    fn two_vertices_rejected() {
        let err = poly(&[(0.0, 0.0), (1.0, 0.0)]).unwrap_err();
        assert_eq!(err, GeometryError::Invalid(vec![Violation::TooFewVertices { count: 2 }]));
    }

    #[test]
    fn bow_tie_reports_crossing() {
        let v: Vec<Point> = [(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)].map(Point::from).to_vec();
        assert_eq!(validate_polygon(&v), vec![Violation::SelfIntersection { edge_a: 0, edge_b: 2 }]);
    }

    #[test]
    fn valid_square_has_no_violations() {
        assert!(validate_polygon(&SQUARE.map(Point::from)).is_empty());
    }

    #[test]
    fn duplicate_and_closing_vertex() {
        let closed: Vec<Point> = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)].map(Point::from).to_vec();
        assert_eq!(validate_polygon(&closed), vec![Violation::DuplicateVertex { first: 4, second: 0 }]);
    }

    #[test]
    fn spike_is_self_intersection() {
        // edge 1 -> 2 runs back over edge 0 -> 1
        let v: Vec<Point> = [(0.0, 0.0), (2.0, 0.0), (1.0, 0.0), (1.0, 1.0)].map(Point::from).to_vec();
        assert!(validate_polygon(&v).iter().any(|x| matches!(x, Violation::SelfIntersection { .. })));
    }

    #[test]
    fn collinear_ring_has_zero_area() {
        let v: Vec<Point> = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)].map(Point::from).to_vec();
        let found = validate_polygon(&v);
        assert!(!found.is_empty());
    }

    #[test]
    fn touching_vertex_on_edge() {
        // vertex 4 lies on edge 0 -> 1
        let v: Vec<Point> =
            [(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (2.0, 1.0), (2.0, 0.0), (0.0, 4.0)].map(Point::from).to_vec();
        assert!(validate_polygon(&v).iter().any(|x| matches!(x, Violation::SelfIntersection { .. })));
    }

    #[test]
    fn non_finite_vertex() {
        let v: Vec<Point> = [(0.0, 0.0), (f64::NAN, 0.0), (1.0, 1.0)].map(Point::from).to_vec();
        assert_eq!(validate_polygon(&v), vec![Violation::NonFiniteVertex { index: 1 }]);
    }

    #[test]
    fn size_classes() {
        assert_eq!(classify_size(19_000.0).unwrap(), SizeClass::Small);
        assert_eq!(classify_size(50_000.0).unwrap(), SizeClass::Medium);
        assert_eq!(classify_size(90_000.0).unwrap(), SizeClass::Large);
        assert_eq!(classify_size(20_000.0).unwrap(), SizeClass::Medium);
        assert_eq!(classify_size(80_000.0).unwrap(), SizeClass::Medium);
        assert!(classify_size(0.0).is_err());
        assert!(classify_size(-5.0).is_err());
        assert!(classify_size(f64::NAN).is_err());
    }
}

use std::path::Path;

use serde_json::{json, Map, Value};

use super::InputError;
use crate::campaign::{FactorLabels, ReferenceParcel};
use crate::geometry::{Point, Polygon};

pub const REQUIRED_PROPERTIES: [&str; 4] = ["id", "shape_class", "land_cover", "visibility"];

pub fn parse_parcels_geojson(path: &Path) -> Result<Vec<ReferenceParcel>, InputError> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError::io(path, e))?;
    read_parcels_geojson(&text, path)
}

/// Parcels from a FeatureCollection of Polygon features without holes.
pub fn read_parcels_geojson(text: &str, path: &Path) -> Result<Vec<ReferenceParcel>, InputError> {
    let root: Value = serde_json::from_str(text).map_err(|e| InputError::format(path, format!("invalid JSON: {e}")))?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(InputError::format(path, "top-level object must be a FeatureCollection"));
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| InputError::format(path, "FeatureCollection has no features array"))?;
    features.iter().enumerate().map(|(i, f)| parse_feature(f, i, path)).collect()
}

fn parse_feature(feature: &Value, index: usize, path: &Path) -> Result<ReferenceParcel, InputError> {
    let props = feature.get("properties").and_then(Value::as_object);
    let id = props.and_then(|p| p.get("id")).and_then(|v| match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    });
    let name = id.clone().unwrap_or_else(|| format!("#{index}"));
    let err = |message: String| InputError::Feature { path: path.to_path_buf(), feature: name.clone(), message };

    let props = props.ok_or_else(|| err("missing properties object".into()))?;
    let id = id.ok_or_else(|| err("missing property \"id\"".into()))?;
    let text = |key: &str| -> Result<&str, InputError> {
        props.get(key).and_then(Value::as_str).ok_or_else(|| err(format!("missing string property {key:?}")))
    };
    let labels = FactorLabels {
        shape: text("shape_class")?.parse().map_err(|e| err(format!("{e}")))?,
        land_cover: text("land_cover")?.parse().map_err(|e| err(format!("{e}")))?,
        visibility: text("visibility")?.parse().map_err(|e| err(format!("{e}")))?,
    };

    let geometry = feature.get("geometry").filter(|g| !g.is_null()).ok_or_else(|| err("missing geometry".into()))?;
    match geometry.get("type").and_then(Value::as_str) {
        Some("Polygon") => {}
        Some(other) => return Err(err(format!("geometry type {other} is not supported; only Polygon"))),
        None => return Err(err("geometry has no type".into())),
    }
    let rings = geometry
        .get("coordinates")
        .and_then(Value::as_array)
        .ok_or_else(|| err("Polygon has no coordinates".into()))?;
    match rings.len() {
        0 => return Err(err("Polygon has no rings".into())),
        1 => {}
        n => return Err(err(format!("Polygon has {} hole(s); holes are not supported", n - 1))),
    }
    let ring = rings[0].as_array().ok_or_else(|| err("ring is not an array".into()))?;
    let mut vertices = ring
        .iter()
        .enumerate()
        .map(|(k, pos)| {
            let c = pos.as_array().filter(|c| c.len() >= 2);
            let xy = c.and_then(|c| Some((c[0].as_f64()?, c[1].as_f64()?)));
            xy.map(Point::from).ok_or_else(|| err(format!("position {k} is not a coordinate pair")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if vertices.len() > 1 && vertices.first() == vertices.last() {
        vertices.pop();
    }
    let polygon = Polygon::new(vertices).map_err(|e| err(e.to_string()))?;
    ReferenceParcel::from_polygon(id, polygon, labels).map_err(|e| err(e.to_string()))
}

/// FeatureCollection of the parcels with closed rings. Area, perimeter and
/// size class are written for reference; the reader recomputes them.
pub fn parcels_to_geojson(parcels: &[ReferenceParcel]) -> Vec<u8> {
    let features: Vec<Value> = parcels
        .iter()
        .map(|p| {
            let mut props = Map::new();
            props.insert("id".into(), json!(p.id));
            props.insert("shape_class".into(), json!(p.labels.shape.as_str()));
            props.insert("land_cover".into(), json!(p.labels.land_cover.as_str()));
            props.insert("visibility".into(), json!(p.labels.visibility.as_str()));
            props.insert("area_m2".into(), json!(p.a_ref));
            props.insert("perimeter_m".into(), json!(p.p_ref));
            props.insert("size_class".into(), json!(p.size_class.as_str()));
            let geometry = p.polygon.as_ref().map(|poly| {
                let mut ring: Vec<[f64; 2]> = poly.vertices().iter().map(|v| [v.x, v.y]).collect();
                ring.push(ring[0]);
                json!({ "type": "Polygon", "coordinates": [ring] })
            });
            json!({ "type": "Feature", "properties": props, "geometry": geometry })
        })
        .collect();
    let mut out = serde_json::to_vec_pretty(&json!({ "type": "FeatureCollection", "features": features }))
        .expect("serializable");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature(props: &str, geometry: &str) -> String {
        format!(r#"{{"type":"FeatureCollection","features":[{{"type":"Feature","properties":{props},"geometry":{geometry}}}]}}"#)
    }

    const PROPS: &str = r#"{"id":"A1","shape_class":"simple","land_cover":"pasture","visibility":"good_all"}"#;
    const SQUARE: &str = r#"{"type":"Polygon","coordinates":[[[0,0],[100,0],[100,100],[0,100],[0,0]]]}"#;

    fn read(text: &str) -> Result<Vec<ReferenceParcel>, InputError> {
        read_parcels_geojson(text, Path::new("parcels.geojson"))
    }

    #[test]
    fn square_feature() {
        let p = read(&feature(PROPS, SQUARE)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].a_ref, 10_000.0);
        assert_eq!(p[0].p_ref, 400.0);
        assert_eq!(p[0].polygon.as_ref().unwrap().vertices().len(), 4);
    }

    #[test]
    fn hole_is_rejected() {
        let g = r#"{"type":"Polygon","coordinates":[[[0,0],[100,0],[100,100],[0,100],[0,0]],[[10,10],[20,10],[20,20],[10,10]]]}"#;
        let e = read(&feature(PROPS, g)).unwrap_err();
        assert!(e.to_string().contains("hole"), "{e}");
        assert!(e.to_string().contains("A1"));
    }

    #[test]
    fn multipolygon_is_rejected() {
        let g = r#"{"type":"MultiPolygon","coordinates":[[[[0,0],[1,0],[1,1],[0,0]]]]}"#;
        assert!(read(&feature(PROPS, g)).unwrap_err().to_string().contains("MultiPolygon"));
    }

    #[test]
    fn unknown_land_cover_lists_allowed_values() {
        let props = PROPS.replace("pasture", "Wheat");
        let msg = read(&feature(&props, SQUARE)).unwrap_err().to_string();
        for lc in crate::campaign::LandCover::ALL {
            assert!(msg.contains(lc.as_str()), "{msg}");
        }
        assert!(msg.contains("Wheat"));
    }

    #[test]
    fn invalid_geometry_names_feature() {
        let g = r#"{"type":"Polygon","coordinates":[[[0,0],[1,1],[1,0],[0,1],[0,0]]]}"#;
        let e = read(&feature(PROPS, g)).unwrap_err();
        assert!(matches!(&e, InputError::Feature { feature, .. } if feature == "A1"));
        assert!(e.to_string().contains("self-intersection"));
    }

    #[test]
    fn missing_property() {
        let props = r#"{"id":"A1","land_cover":"pasture","visibility":"good_all"}"#;
        assert!(read(&feature(props, SQUARE)).unwrap_err().to_string().contains("shape_class"));
    }

    #[test]
    fn round_trip() {
        let parcels = read(&feature(PROPS, SQUARE)).unwrap();
        let text = String::from_utf8(parcels_to_geojson(&parcels)).unwrap();
        assert_eq!(read(&text).unwrap(), parcels);
    }
}

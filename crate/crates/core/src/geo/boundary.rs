use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// `[lon, lat]` in degrees.
pub type Coord = [f64; 2];

/// Closed ring: first vertex repeated as the last one.
pub type Ring = Vec<Coord>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub outer: Ring,
    pub holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(outer: Ring, holes: Vec<Ring>) -> Self {
        Polygon { outer, holes }
    }

    /// Axis-aligned rectangle, closed, counter-clockwise.
    pub fn rect(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Self {
        Polygon {
            outer: vec![
                [min_lon, min_lat],
                [max_lon, min_lat],
                [max_lon, max_lat],
                [min_lon, max_lat],
                [min_lon, min_lat],
            ],
            holes: Vec::new(),
        }
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    pub fn vertex_count(&self) -> usize {
        self.rings().map(Vec::len).sum()
    }

    /// `[min_lon, min_lat, max_lon, max_lat]` of the outer ring.
    pub fn bbox(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for &[x, y] in &self.outer {
            b[0] = b[0].min(x);
            b[1] = b[1].min(y);
            b[2] = b[2].max(x);
            b[3] = b[3].max(y);
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Country {
    pub code: String,
    pub name: String,
    pub polygons: Vec<Polygon>,
}

/// Property names carrying the country code and display name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropertyKeys {
    pub code: String,
    pub name: String,
}

impl Default for PropertyKeys {
    fn default() -> Self {
        PropertyKeys {
            code: "code".to_string(),
            name: "name".to_string(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BoundaryError {
    #[error("invalid boundary document: {0}")]
    Json(String),
    #[error("document is not a FeatureCollection")]
    NotFeatureCollection,
    #[error("{feature}: missing or non-string property {key:?}")]
    MissingProperty { feature: String, key: String },
    #[error("{feature}: geometry type {kind:?} is not Polygon or MultiPolygon")]
    NonPolygonal { feature: String, kind: String },
    #[error("{feature}: malformed coordinates")]
    BadCoordinates { feature: String },
    #[error("{feature}: ring is not closed")]
    UnclosedRing { feature: String },
    #[error("{feature}: ring has {vertices} vertices, need at least 4")]
    TooFewVertices { feature: String, vertices: usize },
    #[error("{feature}: ring spans more than 180 degrees of longitude; split it at the antimeridian")]
    AntimeridianSpan { feature: String },
    #[error("duplicate country code {0:?}")]
    DuplicateCode(String),
}

/// Country polygons keyed by unique code, in load order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundarySet {
    countries: Vec<Country>,
}

impl BoundarySet {
    pub fn new(countries: Vec<Country>) -> Result<Self, BoundaryError> {
        let mut seen = HashSet::new();
        for c in &countries {
            if !seen.insert(c.code.as_str()) {
                return Err(BoundaryError::DuplicateCode(c.code.clone()));
            }
            for poly in &c.polygons {
                for ring in poly.rings() {
                    check_ring(ring, &c.code)?;
                }
            }
        }
        Ok(BoundarySet { countries })
    }

    pub fn countries(&self) -> &[Country] {
        &self.countries
    }

    pub fn len(&self) -> usize {
        self.countries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.countries.is_empty()
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.countries.iter().map(|c| c.code.as_str())
    }

    pub fn polygon_counts(&self) -> BTreeMap<String, usize> {
        self.countries
            .iter()
            .map(|c| (c.code.clone(), c.polygons.len()))
            .collect()
    }

    pub fn from_geojson_str(text: &str, keys: &PropertyKeys) -> Result<Self, BoundaryError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| BoundaryError::Json(e.to_string()))?;
        load_boundaries(&doc, keys)
    }

    /// Serializes back into a FeatureCollection using `keys`.
    pub fn to_geojson(&self, keys: &PropertyKeys) -> Value {
        let features: Vec<Value> = self
            .countries
            .iter()
            .map(|c| {
                let geometry = if c.polygons.len() == 1 {
                    json!({"type": "Polygon", "coordinates": polygon_json(&c.polygons[0])})
                } else {
                    let polys: Vec<Value> = c.polygons.iter().map(polygon_json).collect();
                    json!({"type": "MultiPolygon", "coordinates": polys})
                };
                let mut props = serde_json::Map::new();
                props.insert(keys.code.clone(), Value::String(c.code.clone()));
                props.insert(keys.name.clone(), Value::String(c.name.clone()));
                json!({"type": "Feature", "properties": props, "geometry": geometry})
            })
            .collect();
        json!({"type": "FeatureCollection", "features": features})
    }
}

fn polygon_json(p: &Polygon) -> Value {
    let rings: Vec<Value> = p.rings().map(|r| json!(r)).collect();
    Value::Array(rings)
}

fn check_ring(ring: &Ring, feature: &str) -> Result<(), BoundaryError> {
    if ring.len() < 4 {
        return Err(BoundaryError::TooFewVertices {
            feature: feature.to_string(),
            vertices: ring.len(),
        });
    }
    if ring.first() != ring.last() {
        return Err(BoundaryError::UnclosedRing {
            feature: feature.to_string(),
        });
    }
    let mut min_lon = f64::INFINITY;
    let mut max_lon = f64::NEG_INFINITY;
    for &[x, y] in ring {
        if !x.is_finite() || !y.is_finite() || !(-180.0..=180.0).contains(&x) || !(-90.0..=90.0).contains(&y) {
            return Err(BoundaryError::BadCoordinates {
                feature: feature.to_string(),
            });
        }
        min_lon = min_lon.min(x);
        max_lon = max_lon.max(x);
    }
    if max_lon - min_lon > 180.0 {
        return Err(BoundaryError::AntimeridianSpan {
            feature: feature.to_string(),
        });
    }
    Ok(())
}

/// Reads a GeoJSON FeatureCollection of Polygon/MultiPolygon features.
pub fn load_boundaries(doc: &Value, keys: &PropertyKeys) -> Result<BoundarySet, BoundaryError> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(BoundaryError::NotFeatureCollection);
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or(BoundaryError::NotFeatureCollection)?;

    let mut countries = Vec::with_capacity(features.len());
    for (i, feature) in features.iter().enumerate() {
        let props = feature.get("properties");
        let prop = |key: &str| props.and_then(|p| p.get(key)).and_then(Value::as_str);
        let label = prop(&keys.code)
            .map(|c| format!("feature #{i} ({c})"))
            .unwrap_or_else(|| format!("feature #{i}"));
        let code = prop(&keys.code).ok_or_else(|| BoundaryError::MissingProperty {
            feature: label.clone(),
            key: keys.code.clone(),
        })?;
        let name = prop(&keys.name).ok_or_else(|| BoundaryError::MissingProperty {
            feature: label.clone(),
            key: keys.name.clone(),
        })?;

        let geometry = feature.get("geometry").unwrap_or(&Value::Null);
        let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("null");
        let coords = geometry.get("coordinates");
        let bad = || BoundaryError::BadCoordinates {
            feature: label.clone(),
        };
        let polygons = match kind {
            "Polygon" => vec![parse_polygon(coords.ok_or_else(bad)?).ok_or_else(bad)?],
            "MultiPolygon" => coords
                .and_then(Value::as_array)
                .ok_or_else(bad)?
                .iter()
                .map(|p| parse_polygon(p).ok_or_else(bad))
                .collect::<Result<Vec<_>, _>>()?,
            other => {
                return Err(BoundaryError::NonPolygonal {
                    feature: label,
                    kind: other.to_string(),
                })
            }
        };
        if polygons.is_empty() {
            return Err(bad());
        }
        for poly in &polygons {
            for ring in poly.rings() {
                check_ring(ring, &label)?;
            }
        }
        countries.push(Country {
            code: code.to_string(),
            name: name.to_string(),
            polygons,
        });
    }
    BoundarySet::new(countries)
}

fn parse_polygon(v: &Value) -> Option<Polygon> {
    let rings = v.as_array()?;
    let mut parsed = rings.iter().map(parse_ring);
    let outer = parsed.next()??;
    let holes = parsed.collect::<Option<Vec<_>>>()?;
    Some(Polygon { outer, holes })
}

fn parse_ring(v: &Value) -> Option<Ring> {
    v.as_array()?
        .iter()
        .map(|pt| {
            let pt = pt.as_array()?;
            if pt.len() < 2 {
                return None;
            }
            Some([pt[0].as_f64()?, pt[1].as_f64()?])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square_doc(code: &str) -> Value {
        json!({
            "type": "Feature",
            "properties": {"code": code, "name": format!("Country {code}")},
            "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]}
        })
    }

    #[test]
    fn loads_single_square() {
        let doc = json!({"type": "FeatureCollection", "features": [unit_square_doc("AA")]});
        let set = load_boundaries(&doc, &PropertyKeys::default()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.countries()[0].polygons.len(), 1);
        assert_eq!(set.countries()[0].polygons[0].vertex_count(), 5);
        assert_eq!(set.polygon_counts()["AA"], 1);
    }

    #[test]
    fn duplicate_code_rejected() {
        let doc = json!({"type": "FeatureCollection", "features": [unit_square_doc("AA"), unit_square_doc("AA")]});
        assert_eq!(
            load_boundaries(&doc, &PropertyKeys::default()),
            Err(BoundaryError::DuplicateCode("AA".into()))
        );
    }

    #[test]
    fn unclosed_ring_names_feature() {
        let doc = json!({"type": "FeatureCollection", "features": [{
            "type": "Feature",
            "properties": {"code": "BB", "name": "B"},
            "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,1]]]}
        }]});
        let err = load_boundaries(&doc, &PropertyKeys::default()).unwrap_err();
        assert_eq!(
            err,
            BoundaryError::UnclosedRing {
                feature: "feature #0 (BB)".into()
            }
        );
    }

    #[test]
    fn point_geometry_rejected() {
        let doc = json!({"type": "FeatureCollection", "features": [{
            "type": "Feature",
            "properties": {"code": "CC", "name": "C"},
            "geometry": {"type": "Point", "coordinates": [0, 0]}
        }]});
        assert!(matches!(
            load_boundaries(&doc, &PropertyKeys::default()),
            Err(BoundaryError::NonPolygonal { kind, .. }) if kind == "Point"
        ));
    }

    #[test]
    fn antimeridian_span_rejected() {
        let doc = json!({"type": "FeatureCollection", "features": [{
            "type": "Feature",
            "properties": {"code": "FJ", "name": "Fiji"},
            "geometry": {"type": "Polygon", "coordinates": [[[-179,-17],[179,-17],[179,-16],[-179,-16],[-179,-17]]]}
        }]});
        assert!(matches!(
            load_boundaries(&doc, &PropertyKeys::default()),
            Err(BoundaryError::AntimeridianSpan { .. })
        ));
    }

    #[test]
    fn custom_keys_and_multipolygon() {
        let doc = json!({"type": "FeatureCollection", "features": [{
            "type": "Feature",
            "properties": {"ISO_A2": "MP", "ADMIN": "Multi"},
            "geometry": {"type": "MultiPolygon", "coordinates": [
                [[[0,0],[1,0],[1,1],[0,1],[0,0]]],
                [[[2,0],[3,0],[3,1],[2,1],[2,0]], [[2.2,0.2],[2.8,0.2],[2.8,0.8],[2.2,0.8],[2.2,0.2]]]
            ]}
        }]});
        let keys = PropertyKeys {
            code: "ISO_A2".into(),
            name: "ADMIN".into(),
        };
        let set = load_boundaries(&doc, &keys).unwrap();
        assert_eq!(set.countries()[0].polygons.len(), 2);
        assert_eq!(set.countries()[0].polygons[1].holes.len(), 1);
        let back = BoundarySet::from_geojson_str(&set.to_geojson(&keys).to_string(), &keys).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn missing_code_property() {
        let doc = json!({"type": "FeatureCollection", "features": [unit_square_doc("AA")]});
        let keys = PropertyKeys {
            code: "iso".into(),
            name: "name".into(),
        };
        assert!(matches!(
            load_boundaries(&doc, &keys),
            Err(BoundaryError::MissingProperty { key, .. }) if key == "iso"
        ));
    }
}

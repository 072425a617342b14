use serde_json::{json, Value};

use crate::model::{CityId, RegionDataset};
use crate::pca::SubNetwork;

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz digraph of a sub-network; node ids are city ids.
pub fn subnetwork_dot(name: &str, sub: &SubNetwork) -> String {
    let mut nodes: Vec<&String> = sub.origins.iter().chain(&sub.destinations).collect();
    nodes.sort();
    nodes.dedup();
    let mut out = format!("digraph {} {{\n", quoted(name));
    for node in nodes {
        let role = match (sub.origins.contains(node), sub.destinations.contains(node)) {
            (true, true) => "origin+destination",
            (true, false) => "origin",
            _ => "destination",
        };
        out.push_str(&format!("  {} [role={}];\n", quoted(node), quoted(role)));
    }
    for e in &sub.edges {
        out.push_str(&format!(
            "  {} -> {} [weight={}];\n",
            quoted(&e.origin),
            quoted(&e.destination),
            e.flow
        ));
    }
    out.push_str("}\n");
    out
}

/// GeoJSON FeatureCollection with one LineString per edge in WGS84 lon/lat.
/// Edges touching a city without coordinates are left out.
pub fn subnetwork_geojson(sub: &SubNetwork, dataset: &RegionDataset) -> Value {
    let coords = |id: &str| {
        let city = dataset.city(&CityId::new(id).ok()?)?;
        Some([city.lon?, city.lat?])
    };
    let features: Vec<Value> = sub
        .edges
        .iter()
        .filter_map(|e| {
            let (a, b) = (coords(&e.origin)?, coords(&e.destination)?);
            Some(json!({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": [a, b]},
                "properties": {"origin": e.origin, "destination": e.destination, "flow": e.flow},
            }))
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

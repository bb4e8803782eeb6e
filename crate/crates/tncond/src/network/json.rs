//! JSON description files for tensor networks.
//!
//! Schema:
//!
//! ```json
//! {
//!   "vertices": [
//!     {"id": "A", "legs": [{"leg": "x", "dim": 2}], "data": [1.0, 2.0]},
//!     {"id": "B", "legs": [{"leg": "y", "dim": 2}],
//!      "data": {"random": {"dist": {"uniform": {"lo": -1.0, "hi": 1.0}}, "seed": 7}}}
//!   ],
//!   "edges": [{"id": "e1", "a": ["A", "x"], "b": ["B", "y"]}],
//!   "open":  [{"id": "o1", "v": "A", "leg": "x"}]
//! }
//! ```
//!
//! `data` is either the flat row-major entry list or a seeded random spec.
//! The loader validates every network invariant and reports the first
//! violation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Edge, OpenLeg, TensorNetwork};
use crate::tensor::{random_tensor, DenseTensor, Dist, Legs};

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    vertices: Vec<VertexFile>,
    #[serde(default)]
    edges: Vec<EdgeFile>,
    #[serde(default)]
    open: Vec<OpenFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VertexFile {
    id: String,
    legs: Vec<LegFile>,
    data: DataFile,
}

#[derive(Debug, Serialize, Deserialize)]
struct LegFile {
    leg: String,
    dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum DataFile {
    Inline(Vec<f64>),
    Random { random: RandomSpec },
}

#[derive(Debug, Serialize, Deserialize)]
struct RandomSpec {
    dist: Dist,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeFile {
    id: String,
    a: (String, String),
    b: (String, String),
}

#[derive(Debug, Serialize, Deserialize)]
struct OpenFile {
    id: String,
    v: String,
    leg: String,
}

/// Parses a network from its JSON text.
pub fn parse_network(text: &str) -> Result<TensorNetwork> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| Error::NetworkInvalid {
        detail: format!("json: {e}"),
    })?;
    let mut vertices = Vec::with_capacity(file.vertices.len());
    for v in file.vertices {
        let legs: Legs = v.legs.iter().map(|l| (l.leg.clone(), l.dim)).collect();
        let tensor =
            match v.data {
                DataFile::Inline(data) => {
                    DenseTensor::new(legs, data).map_err(|e| Error::NetworkInvalid {
                        detail: format!("vertex '{}': {e}", v.id),
                    })?
                }
                DataFile::Random { random } => random_tensor(legs, random.dist, random.seed)
                    .map_err(|e| Error::NetworkInvalid {
                        detail: format!("vertex '{}': {e}", v.id),
                    })?,
            };
        vertices.push((v.id, tensor));
    }
    let edges = file
        .edges
        .into_iter()
        .map(|e| Edge {
            id: e.id,
            a: e.a,
            b: e.b,
        })
        .collect();
    let open = file
        .open
        .into_iter()
        .map(|o| OpenLeg {
            id: o.id,
            vertex: o.v,
            leg: o.leg,
        })
        .collect();
    TensorNetwork::new(vertices, edges, open)
}

/// Loads a network description file.
pub fn load_network(path: &Path) -> Result<TensorNetwork> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_network(&text)
}

/// Serializes a network with inline data.
pub fn network_to_json(tn: &TensorNetwork) -> String {
    let file = NetworkFile {
        vertices: tn
            .vertices()
            .iter()
            .map(|(id, t)| VertexFile {
                id: id.clone(),
                legs: t
                    .legs()
                    .iter()
                    .map(|(leg, dim)| LegFile {
                        leg: leg.clone(),
                        dim: *dim,
                    })
                    .collect(),
                data: DataFile::Inline(t.data().to_vec()),
            })
            .collect(),
        edges: tn
            .contracted_edges()
            .iter()
            .map(|e| EdgeFile {
                id: e.id.clone(),
                a: e.a.clone(),
                b: e.b.clone(),
            })
            .collect(),
        open: tn
            .open_legs()
            .iter()
            .map(|o| OpenFile {
                id: o.id.clone(),
                v: o.vertex.clone(),
                leg: o.leg.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("network serialization cannot fail")
}

/// Writes a network description file.
pub fn save_network(tn: &TensorNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, network_to_json(tn))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"{
        "vertices": [
            {"id": "A", "legs": [{"leg": "l", "dim": 2}, {"leg": "r", "dim": 3}],
             "data": [1, 2, 3, 4, 5, 6]},
            {"id": "B", "legs": [{"leg": "l", "dim": 3}, {"leg": "r", "dim": 2}],
             "data": {"random": {"dist": {"uniform": {"lo": -1.0, "hi": 1.0}}, "seed": 3}}}
        ],
        "edges": [{"id": "e1", "a": ["A", "r"], "b": ["B", "l"]}],
        "open": [{"id": "o1", "v": "A", "leg": "l"}, {"id": "o2", "v": "B", "leg": "r"}]
    }"#;

    #[test]
    fn parses_inline_and_random_data() {
        let tn = parse_network(CHAIN).unwrap();
        assert_eq!(tn.n_vertices(), 2);
        assert_eq!(tn.vertex("A").unwrap().data()[2], 3.0);
        // Random data is reproducible.
        let tn2 = parse_network(CHAIN).unwrap();
        assert_eq!(tn.vertex("B").unwrap(), tn2.vertex("B").unwrap());
    }

    #[test]
    fn round_trips_through_json() {
        let tn = parse_network(CHAIN).unwrap();
        let text = network_to_json(&tn);
        let back = parse_network(&text).unwrap();
        assert_eq!(tn, back);
    }

    #[test]
    fn rejects_invalid_descriptions() {
        // Unknown vertex in edge.
        let bad = r#"{
            "vertices": [{"id": "A", "legs": [{"leg": "x", "dim": 2}], "data": [1, 2]}],
            "edges": [{"id": "e", "a": ["A", "x"], "b": ["Z", "x"]}],
            "open": []
        }"#;
        assert!(matches!(
            parse_network(bad),
            Err(Error::NetworkInvalid { .. })
        ));
        // Data length mismatch.
        let bad2 = r#"{
            "vertices": [{"id": "A", "legs": [{"leg": "x", "dim": 2}], "data": [1, 2, 3]}],
            "edges": [],
            "open": [{"id": "o", "v": "A", "leg": "x"}]
        }"#;
        assert!(matches!(
            parse_network(bad2),
            Err(Error::NetworkInvalid { .. })
        ));
        // Malformed JSON.
        assert!(matches!(
            parse_network("{"),
            Err(Error::NetworkInvalid { .. })
        ));
    }
}

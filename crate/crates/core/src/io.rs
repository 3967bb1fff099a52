//! Mesh documents: JSON and Wavefront OBJ.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flexion::Driver;
use crate::geom::{Edge, Point3, TriMesh};
use crate::twinning::catalog::Model;
use crate::twinning::TwinInfo;

/// Serialized form of a mesh plus optional model annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshDoc {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    #[serde(default)]
    pub labels: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twin: Option<TwinInfo>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phantoms: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<Driver>,
    /// Pairs held at fixed distance while flexing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pinned: Vec<Edge>,
}

impl MeshDoc {
    pub fn from_mesh(mesh: &TriMesh) -> Self {
        Self {
            vertices: mesh.vertices().iter().map(|p| [p.x, p.y, p.z]).collect(),
            faces: mesh.faces().to_vec(),
            labels: mesh.labels().clone(),
            twin: None,
            phantoms: Vec::new(),
            driver: None,
            pinned: Vec::new(),
        }
    }

    pub fn from_model(model: &Model) -> Self {
        let mut doc = Self::from_mesh(model.mesh());
        doc.twin = model.twin_info().cloned();
        doc.phantoms = model.phantoms();
        if let Some(s) = model.flex_setup() {
            doc.driver = s.drivers.first().copied();
            doc.pinned = s.pinned;
        }
        doc
    }

    pub fn to_mesh(&self) -> Result<TriMesh> {
        let verts = self
            .vertices
            .iter()
            .map(|v| Point3::new(v[0], v[1], v[2]))
            .collect();
        TriMesh::new(verts, self.faces.clone())?.with_labels(self.labels.clone())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn mesh_to_json(mesh: &TriMesh) -> Result<String> {
    MeshDoc::from_mesh(mesh).to_json()
}

pub fn mesh_from_json(text: &str) -> Result<TriMesh> {
    MeshDoc::from_json(text)?.to_mesh()
}

/// Writes `v`/`f` records with 1-based indices. Labels go into `# label` comments.
pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for (name, idx) in mesh.labels() {
        let _ = writeln!(out, "# label {name} {}", idx + 1);
    }
    for p in mesh.vertices() {
        // {:?} on f64 prints the shortest round-tripping form
        let _ = writeln!(out, "v {:?} {:?} {:?}", p.x, p.y, p.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

/// Reads an OBJ file. Polygonal faces are fan-triangulated; texture and normal
/// indices (`f 1/2/3`) are ignored, negative indices count from the end.
pub fn read_obj(text: &str) -> Result<TriMesh> {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    let mut labels = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        let bad = |what: &str| Error::Parse(format!("line {}: {what}", ln + 1));
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let xs: Vec<f64> = tok
                    .take(3)
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("bad coordinate"))?;
                if xs.len() != 3 {
                    return Err(bad("vertex needs three coordinates"));
                }
                verts.push(Point3::new(xs[0], xs[1], xs[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| bad("bad face index"))?;
                    let n = verts.len() as i64;
                    let k = if i < 0 { n + i } else { i - 1 };
                    if k < 0 || k >= n {
                        return Err(bad("face index out of range"));
                    }
                    idx.push(k as usize);
                }
                if idx.len() < 3 {
                    return Err(bad("face needs at least three vertices"));
                }
                for w in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[w], idx[w + 1]]);
                }
            }
            Some("#") => {
                if tok.next() == Some("label") {
                    let name = tok.next().ok_or_else(|| bad("label without name"))?;
                    let i: usize = tok
                        .next()
                        .and_then(|s| s.parse().ok())
                        .filter(|&i| i >= 1)
                        .ok_or_else(|| bad("bad label index"))?;
                    labels.insert(name.to_string(), i - 1);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(verts, faces)?.with_labels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twinning::catalog::build_default;

    #[test]
    fn json_round_trip_keeps_labels_and_bits() {
        let m = build_default("bricard1").unwrap();
        let doc = MeshDoc::from_model(&m);
        assert!(doc.twin.is_some());
        let back = MeshDoc::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
        assert_eq!(&back.to_mesh().unwrap(), m.mesh());
    }

    #[test]
    fn obj_round_trip() {
        let m = build_default("bricard2").unwrap();
        let text = write_obj(m.mesh());
        assert!(text.contains("\nf 1 "));
        let back = read_obj(&text).unwrap();
        assert_eq!(&back, m.mesh());
    }

    #[test]
    fn obj_quads_are_fanned() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 -1\n";
        let m = read_obj(text).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_errors_carry_line_numbers() {
        let err = read_obj("v 0 0 0\nf 1 2 3\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(read_obj("v 0 x 0\n").is_err());
    }

    #[test]
    fn json_rejects_bad_indices() {
        let text = r#"{"vertices": [[0,0,0],[1,0,0],[0,1,0]], "faces": [[0,1,3]]}"#;
        assert!(matches!(mesh_from_json(text), Err(Error::Structural { .. })));
    }
}

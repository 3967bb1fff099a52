//! Surgeries used to remove self-intersections: tents, boundary gluing, and
//! replacing hinges by Bricard crinkles.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    bbox_diameter, edge_key, face_normal, orient_faces, rigid_align, Edge, Point3, TriMesh, Vec3,
};

/// Replaces `face` by a cone over it with apex `height` along the face normal.
pub fn erect_tent(mesh: &TriMesh, face: usize, height: f64) -> Result<TriMesh> {
    let f = *mesh.faces().get(face).ok_or_else(|| Error::InvalidParam {
        name: "face".into(),
        reason: format!("no face {face}"),
    })?;
    if height == 0.0 || !height.is_finite() {
        return Err(Error::InvalidParam {
            name: "height".into(),
            reason: "must be finite and non-zero".into(),
        });
    }
    let p = mesh.vertices();
    let n = face_normal(p, f);
    if n.norm() == 0.0 {
        return Err(Error::Degenerate(format!("face {face} has zero area")));
    }
    let c = Point3::from((p[f[0]].coords + p[f[1]].coords + p[f[2]].coords) / 3.0);
    let apex = c + n.normalize() * height;
    let t = p.len();
    let mut vertices = p.to_vec();
    vertices.push(apex);
    let mut faces: Vec<[usize; 3]> = mesh.faces().to_vec();
    faces[face] = [f[0], f[1], t];
    faces.push([f[1], f[2], t]);
    faces.push([f[2], f[0], t]);
    TriMesh::new(vertices, faces)?.with_labels(mesh.labels().iter().map(|(k, &v)| (k.clone(), v)))
}

/// Result of gluing: the merged mesh and where each vertex of the second part went.
#[derive(Clone, Debug)]
pub struct Glued {
    pub mesh: TriMesh,
    pub b_to_merged: Vec<usize>,
}

/// Identifies boundary vertices of `b` with boundary vertices of `a`.
///
/// `b` is first moved rigidly onto `a` over the corresponded vertices. Each
/// corresponded boundary edge must have the same length in both parts (relative
/// `tol`) and be traversed in opposite directions.
pub fn glue_boundaries(
    a: &TriMesh,
    b: &TriMesh,
    correspondence: &[(usize, usize)],
    tol: f64,
) -> Result<Glued> {
    if correspondence.len() < 2 {
        return Err(Error::InvalidParam {
            name: "correspondence".into(),
            reason: "need at least two vertex pairs".into(),
        });
    }
    let a_half: BTreeSet<(usize, usize)> = a.boundary_half_edges().into_iter().collect();
    let b_half: BTreeSet<(usize, usize)> = b.boundary_half_edges().into_iter().collect();
    let a_bnd: BTreeSet<usize> = a_half.iter().map(|e| e.0).collect();
    let b_bnd: BTreeSet<usize> = b_half.iter().map(|e| e.0).collect();
    let mut map_ab: HashMap<usize, usize> = HashMap::new();
    let mut map_ba: HashMap<usize, usize> = HashMap::new();
    for &(ia, ib) in correspondence {
        if !a_bnd.contains(&ia) || !b_bnd.contains(&ib) {
            return Err(Error::Topology(format!(
                "pair ({ia}, {ib}) is not on both boundaries"
            )));
        }
        if map_ab.insert(ia, ib).is_some() || map_ba.insert(ib, ia).is_some() {
            return Err(Error::Topology(format!("pair ({ia}, {ib}) is repeated")));
        }
    }
    let (pa, pb) = (a.vertices(), b.vertices());
    let scale = bbox_diameter(pa).max(bbox_diameter(pb));
    let mut matched = 0;
    for &(u, v) in &a_half {
        let (Some(&u2), Some(&v2)) = (map_ab.get(&u), map_ab.get(&v)) else {
            continue;
        };
        if b_half.contains(&(u2, v2)) {
            return Err(Error::Topology(format!(
                "boundaries run the same way along ({u}, {v}); reverse one part"
            )));
        }
        if !b_half.contains(&(v2, u2)) {
            return Err(Error::Topology(format!(
                "({u2}, {v2}) is not a boundary edge of the second part"
            )));
        }
        let (la, lb) = ((pa[u] - pa[v]).norm(), (pb[u2] - pb[v2]).norm());
        if (la - lb).abs() > tol * la.max(lb) {
            return Err(Error::LengthMismatch(format!(
                "edge ({u}, {v}) has length {la} against {lb}"
            )));
        }
        matched += 1;
    }
    if matched == 0 {
        return Err(Error::Topology("no boundary edge is shared".into()));
    }

    let src: Vec<Point3> = correspondence.iter().map(|&(_, ib)| pb[ib]).collect();
    let dst: Vec<Point3> = correspondence.iter().map(|&(ia, _)| pa[ia]).collect();
    let (rot, shift) = rigid_align(&src, &dst);
    let moved: Vec<Point3> = pb.iter().map(|q| rot * q + shift).collect();
    let worst = correspondence
        .iter()
        .map(|&(ia, ib)| (moved[ib] - pa[ia]).norm())
        .fold(0.0, f64::max);
    if worst > tol * scale {
        return Err(Error::LengthMismatch(format!(
            "glued boundaries are not congruent (misfit {worst:e})"
        )));
    }

    let mut vertices = pa.to_vec();
    let mut b_to_merged = Vec::with_capacity(pb.len());
    for (ib, q) in moved.iter().enumerate() {
        match map_ba.get(&ib) {
            Some(&ia) => b_to_merged.push(ia),
            None => {
                b_to_merged.push(vertices.len());
                vertices.push(*q);
            }
        }
    }
    let mut faces = a.faces().to_vec();
    faces.extend(b.faces().iter().map(|f| f.map(|v| b_to_merged[v])));
    let mut labels: BTreeMap<String, usize> = a.labels().clone();
    for (name, &v) in b.labels() {
        labels.entry(name.clone()).or_insert(b_to_merged[v]);
    }
    let mesh = TriMesh::new(vertices, faces)?.with_labels(labels)?;
    Ok(Glued { mesh, b_to_merged })
}

/// A face list that may have more than two faces on an edge, such as a
/// tetrahedron and a triangle sharing an edge.
#[derive(Clone, Debug, PartialEq)]
pub struct HingeSystem {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
    pub labels: BTreeMap<String, usize>,
}

impl HingeSystem {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::Structural {
                    face: i,
                    reason: "vertex index out of range".into(),
                });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Structural {
                    face: i,
                    reason: "repeated vertex".into(),
                });
            }
        }
        Ok(Self {
            vertices,
            faces,
            labels: BTreeMap::new(),
        })
    }

    pub fn from_mesh(mesh: &TriMesh) -> Self {
        Self {
            vertices: mesh.vertices().to_vec(),
            faces: mesh.faces().to_vec(),
            labels: mesh.labels().clone(),
        }
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: impl IntoIterator<Item = (S, usize)>) -> Self {
        self.labels.extend(labels.into_iter().map(|(k, v)| (k.into(), v)));
        self
    }
}

/// Choice of the half-turn axis for a fitted Bricard crinkle.
///
/// The axis passes through the midpoint of the two wing tips and is perpendicular
/// to the segment joining them; `axis_angle` turns it within that normal plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrinkleFit {
    pub axis_angle: f64,
}

/// Output of [`replace_hinge_with_crinkles`].
#[derive(Clone, Debug)]
pub struct HingeReplacement {
    pub mesh: TriMesh,
    /// The former hinge, once per inserted crinkle.
    pub phantoms: Vec<Edge>,
    /// `[A', C]` vertex indices added by each crinkle.
    pub added: Vec<[usize; 2]>,
}

struct HingeFace {
    index: usize,
    third: usize,
    angle: f64,
    ccw: bool,
}

/// Replaces every outside corridor of the hinge `(u, v)` by a Bricard crinkle whose
/// phantom pair is `(u, v)`.
///
/// The two faces bounding a corridor become the omitted faces of a Bricard
/// octahedron `A=u, C'=v, B, B'` (the corridor's wing tips); the crinkle adds two
/// vertices `A'` and `C`, images of `u` and `v` under the fitted half-turn.
pub fn replace_hinge_with_crinkles(
    system: &HingeSystem,
    hinge: Edge,
    fits: &[CrinkleFit],
) -> Result<HingeReplacement> {
    let (u, v) = hinge;
    let p = &system.vertices;
    if u >= p.len() || v >= p.len() || u == v {
        return Err(Error::InvalidParam {
            name: "hinge".into(),
            reason: format!("bad hinge ({u}, {v})"),
        });
    }
    let axis = p[v] - p[u];
    if axis.norm() == 0.0 {
        return Err(Error::Degenerate("hinge has zero length".into()));
    }
    let e = axis.normalize();
    let perp = |w: usize| -> Vec3 {
        let r = p[w] - p[u];
        r - e * r.dot(&e)
    };
    let at_hinge: Vec<usize> = (0..system.faces.len())
        .filter(|&i| system.faces[i].contains(&u) && system.faces[i].contains(&v))
        .collect();
    if at_hinge.len() < 2 || at_hinge.len() % 2 == 1 {
        return Err(Error::Topology(format!(
            "hinge ({u}, {v}) has {} faces",
            at_hinge.len()
        )));
    }
    let third = |f: [usize; 3]| *f.iter().find(|&&w| w != u && w != v).unwrap();
    let x_ref = perp(third(system.faces[at_hinge[0]]));
    if x_ref.norm() == 0.0 {
        return Err(Error::Degenerate("hinge face is degenerate".into()));
    }
    let x_hat = x_ref.normalize();
    let y_hat = e.cross(&x_hat);
    let mut wings: Vec<HingeFace> = at_hinge
        .iter()
        .map(|&i| {
            let f = system.faces[i];
            let w = third(f);
            let r = perp(w);
            let mut angle = y_hat.dot(&r).atan2(x_hat.dot(&r));
            if angle < 0.0 {
                angle += std::f64::consts::TAU;
            }
            let forward = (0..3).any(|k| f[k] == u && f[(k + 1) % 3] == v);
            HingeFace {
                index: i,
                third: w,
                angle,
                ccw: forward,
            }
        })
        .collect();
    wings.sort_by(|a, b| a.angle.total_cmp(&b.angle).then(a.ccw.cmp(&b.ccw)));
    let k = wings.len();
    let corridors: Vec<(usize, usize)> = (0..k)
        .filter(|&i| wings[i].ccw && !wings[(i + 1) % k].ccw)
        .map(|i| (i, (i + 1) % k))
        .collect();
    if corridors.len() != k / 2 {
        return Err(Error::Topology(format!(
            "faces around hinge ({u}, {v}) are not consistently oriented"
        )));
    }
    if fits.len() != corridors.len() {
        return Err(Error::InvalidParam {
            name: "fits".into(),
            reason: format!("hinge has {} corridors, got {} fits", corridors.len(), fits.len()),
        });
    }

    let scale = bbox_diameter(p);
    let mut vertices = p.clone();
    let mut drop: BTreeSet<usize> = BTreeSet::new();
    let mut new_faces: Vec<[usize; 3]> = Vec::new();
    let mut added = Vec::new();
    for (&(i1, i2), fit) in corridors.iter().zip(fits) {
        let (f1, f2) = (&wings[i1], &wings[i2]);
        let (w1, w2) = (f1.third, f2.third);
        let g = p[w2] - p[w1];
        if g.norm() <= 1e-9 * scale {
            return Err(Error::Degenerate("corridor wing tips coincide".into()));
        }
        let gh = g.normalize();
        let mut e1 = axis - gh * axis.dot(&gh);
        if e1.norm() <= 1e-9 * axis.norm() {
            e1 = gh.cross(&Vec3::x());
            if e1.norm() < 0.1 {
                e1 = gh.cross(&Vec3::y());
            }
        }
        let e1 = e1.normalize();
        let e2 = gh.cross(&e1);
        let d = e1 * fit.axis_angle.cos() + e2 * fit.axis_angle.sin();
        let m = Point3::from((p[w1].coords + p[w2].coords) * 0.5);
        let rot = |q: &Point3| -> Point3 {
            let r = q - m;
            m + d * (2.0 * d.dot(&r)) - r
        };
        let a2 = vertices.len();
        vertices.push(rot(&p[u]));
        let c = vertices.len();
        vertices.push(rot(&p[v]));
        let octa = [u, w1, w2, v, a2, c];
        for i in 0..octa.len() {
            for j in i + 1..octa.len() {
                if (vertices[octa[i]] - vertices[octa[j]]).norm() <= 1e-6 * scale {
                    return Err(Error::Degenerate(format!(
                        "fitted crinkle collapses (axis angle {})",
                        fit.axis_angle
                    )));
                }
            }
        }
        // A=u, B=w1, B'=w2, C'=v; omitted faces are A B C' and A B' C'
        let crinkle = [
            [u, w1, c],
            [u, w2, c],
            [a2, w1, c],
            [a2, w1, v],
            [a2, w2, c],
            [a2, w2, v],
        ];
        let mut oriented = orient_faces(&crinkle)?;
        let f1_face = system.faces[f1.index];
        let half = (0..3)
            .map(|k| (f1_face[k], f1_face[(k + 1) % 3]))
            .find(|&(x, y)| edge_key(x, y) == edge_key(u, w1))
            .unwrap();
        let has = |fs: &[[usize; 3]], h: (usize, usize)| {
            fs.iter()
                .any(|f| (0..3).any(|k| (f[k], f[(k + 1) % 3]) == h))
        };
        if !has(&oriented, half) {
            for f in &mut oriented {
                f.swap(1, 2);
            }
        }
        drop.insert(f1.index);
        drop.insert(f2.index);
        new_faces.extend(oriented);
        added.push([a2, c]);
    }
    let mut faces: Vec<[usize; 3]> = system
        .faces
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, f)| *f)
        .collect();
    faces.extend(new_faces);
    let mesh = TriMesh::new(vertices, faces)?
        .with_labels(system.labels.iter().map(|(k, &v)| (k.clone(), v)))?;
    Ok(HingeReplacement {
        mesh,
        phantoms: vec![edge_key(u, v); corridors.len()],
        added,
    })
}

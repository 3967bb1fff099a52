//! Twinning: cut an edge `AA'` out of a rigid polyhedron to get a one-parameter
//! cap on the quadrilateral `A B A' B'`, copy the cap through the quadrilateral's
//! symmetry, and glue the two copies along the shared boundary.
//!
//! The submodules hold the surgeries used to remove self-intersections
//! ([`surgery`]) and the parameterised model catalog ([`catalog`]).

pub mod catalog;
pub mod surgery;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{bbox_diameter, edge_key, Edge, TriMesh};
use crate::symmetry::{isometry_for, SymmetricQuad, SymmetryKind};

/// Default relative tolerance for the symmetry checks made during construction.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// An open triangulated surface with a single distinguished boundary loop.
#[derive(Clone, Debug, PartialEq)]
pub struct Cap {
    pub mesh: TriMesh,
    /// `[A, B, A', B']` for caps cut from a symmetric quadrilateral.
    pub boundary: Vec<usize>,
}

impl Cap {
    pub fn new(mesh: TriMesh, boundary: Vec<usize>) -> Result<Self> {
        check_single_loop(&mesh, &boundary)?;
        Ok(Self { mesh, boundary })
    }
}

/// Combinatorial record of a twin that survives flexing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwinInfo {
    pub kind: SymmetryKind,
    /// `[A, B, A', B']`.
    pub equator: Vec<usize>,
    /// `(vertex, partner)` for every vertex off the equator, each pair listed once.
    pub pairing: Vec<(usize, usize)>,
}

impl TwinInfo {
    pub fn equator_quad(&self) -> Result<[usize; 4]> {
        <[usize; 4]>::try_from(self.equator.as_slice()).map_err(|_| {
            Error::Topology(format!(
                "equator has {} vertices; only quadrilaterals are supported",
                self.equator.len()
            ))
        })
    }

    /// The diagonal `AA'` that the cap construction removed.
    pub fn diagonal(&self) -> Result<Edge> {
        let q = self.equator_quad()?;
        Ok((q[0], q[2]))
    }

    /// Every `(v, image of v)` pair the construction isometry should realise.
    pub fn all_pairs(&self) -> Result<Vec<(usize, usize)>> {
        let [a, b, a2, b2] = self.equator_quad()?;
        let mut out = match self.kind {
            SymmetryKind::TypeI => vec![(a, a2), (a2, a), (b, b2), (b2, b)],
            SymmetryKind::TypeII => vec![(a, a), (a2, a2), (b, b2), (b2, b)],
        };
        for &(u, v) in &self.pairing {
            out.push((u, v));
            out.push((v, u));
        }
        Ok(out)
    }
}

/// A closed twinned polyhedron.
#[derive(Clone, Debug, PartialEq)]
pub struct Twin {
    pub mesh: TriMesh,
    pub info: TwinInfo,
}

/// A disk-topology surface whose motion keeps some non-adjacent vertex pairs at
/// fixed distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Crinkle {
    pub mesh: TriMesh,
    pub boundary: Vec<usize>,
    pub phantom_pairs: Vec<Edge>,
}

fn check_single_loop(mesh: &TriMesh, boundary: &[usize]) -> Result<()> {
    let loops = mesh.boundary_loops()?;
    if loops.len() != 1 {
        return Err(Error::Topology(format!(
            "expected one boundary loop, found {}",
            loops.len()
        )));
    }
    let found: BTreeSet<usize> = loops[0].iter().copied().collect();
    let given: BTreeSet<usize> = boundary.iter().copied().collect();
    if found != given || boundary.len() != loops[0].len() {
        return Err(Error::Topology(format!(
            "boundary {boundary:?} does not match mesh boundary {:?}",
            loops[0]
        )));
    }
    Ok(())
}

/// Removes the diagonal `AA'` (and its two triangles) from a closed mesh.
pub fn make_cap(mesh: &TriMesh, quad: &SymmetricQuad) -> Result<Cap> {
    if !mesh.is_closed() {
        return Err(Error::NotClosed(mesh.boundary_edges().len()));
    }
    let (a, b, a2, b2) = (quad.a, quad.b, quad.a_prime, quad.b_prime);
    let fs = mesh.edge_faces(a, a2);
    if fs.len() != 2 {
        return Err(Error::Topology(format!("({a}, {a2}) is not an interior edge")));
    }
    let thirds: BTreeSet<usize> = fs
        .iter()
        .map(|&f| {
            *mesh.faces()[f]
                .iter()
                .find(|&&v| v != a && v != a2)
                .unwrap()
        })
        .collect();
    if thirds != BTreeSet::from([b, b2]) {
        return Err(Error::Topology(format!(
            "triangles on ({a}, {a2}) do not close on {b} and {b2}"
        )));
    }
    let faces: Vec<[usize; 3]> = mesh
        .faces()
        .iter()
        .enumerate()
        .filter(|(i, _)| !fs.contains(i))
        .map(|(_, f)| *f)
        .collect();
    let cap_mesh = TriMesh::new(mesh.vertices().to_vec(), faces)?
        .with_labels(mesh.labels().iter().map(|(k, &v)| (k.clone(), v)))?;
    if cap_mesh.face_components() != 1 {
        return Err(Error::Topology("removing the edge disconnects the mesh".into()));
    }
    Cap::new(cap_mesh, vec![a, b, a2, b2])
}

fn primed(label: &str) -> String {
    match label.strip_suffix('\'') {
        Some(base) => base.to_string(),
        None => format!("{label}'"),
    }
}

/// Glues a cap to its image under the boundary's symmetry.
pub fn twin(cap: &Cap, kind: SymmetryKind) -> Result<Twin> {
    twin_with_tol(cap, kind, SYMMETRY_TOL)
}

pub fn twin_with_tol(cap: &Cap, kind: SymmetryKind, tol: f64) -> Result<Twin> {
    let [a, b, a2, b2] = <[usize; 4]>::try_from(cap.boundary.as_slice())
        .map_err(|_| Error::Topology("twinning needs a quadrilateral boundary".into()))?;
    let verts = cap.mesh.vertices();
    let quad = [verts[a], verts[b], verts[a2], verts[b2]];
    let iso = isometry_for(&quad, kind, tol)?;

    let mut sigma: HashMap<usize, usize> = match kind {
        SymmetryKind::TypeI => HashMap::from([(a, a2), (a2, a), (b, b2), (b2, b)]),
        SymmetryKind::TypeII => HashMap::from([(a, a), (a2, a2), (b, b2), (b2, b)]),
    };
    let boundary: BTreeSet<usize> = cap.boundary.iter().copied().collect();
    let interior: Vec<usize> = cap
        .mesh
        .faces()
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|v| !boundary.contains(v))
        .collect();
    if interior.is_empty() {
        return Err(Error::Topology("cap has no interior vertices".into()));
    }

    let diam = bbox_diameter(verts);
    let mut vertices = verts.to_vec();
    let mut pairing = Vec::new();
    let mut coincident = 0;
    for &v in &interior {
        let img = iso.apply(&verts[v]);
        if interior
            .iter()
            .any(|&w| (verts[w] - img).norm() <= 1e-9 * diam)
        {
            coincident += 1;
        }
        let idx = vertices.len();
        vertices.push(img);
        sigma.insert(v, idx);
        pairing.push((v, idx));
    }
    if coincident == interior.len() {
        return Err(Error::DoubleCover);
    }

    // The image must run along the shared boundary against the original.
    let (u, w) = cap.mesh.boundary_half_edges()[0];
    let image_half = (sigma[&u], sigma[&w]);
    let flip = cap.mesh.boundary_half_edges().contains(&image_half);

    let mut faces = cap.mesh.faces().to_vec();
    for f in cap.mesh.faces() {
        let g = f.map(|v| sigma[&v]);
        faces.push(if flip { [g[0], g[2], g[1]] } else { g });
    }

    let mut labels: BTreeMap<String, usize> = cap.mesh.labels().clone();
    for (name, &v) in cap.mesh.labels() {
        if let Some(&img) = sigma.get(&v) {
            if !boundary.contains(&v) {
                labels.entry(primed(name)).or_insert(img);
            }
        }
    }
    let mesh = TriMesh::new(vertices, faces)?.with_labels(labels)?;
    Ok(Twin {
        mesh,
        info: TwinInfo {
            kind,
            equator: vec![a, b, a2, b2],
            pairing,
        },
    })
}

/// Deletes the listed edges together with every face that contains one of them.
/// The result must be a single disk; the removed edges become phantom pairs.
pub fn make_crinkle(mesh: &TriMesh, remove_edges: &[Edge]) -> Result<Crinkle> {
    if remove_edges.is_empty() {
        return Err(Error::InvalidParam {
            name: "remove_edges".into(),
            reason: "nothing to remove".into(),
        });
    }
    let mut drop = BTreeSet::new();
    for &(u, v) in remove_edges {
        let fs = mesh.edge_faces(u, v);
        if fs.len() != 2 {
            return Err(Error::Topology(format!("({u}, {v}) is not an interior edge")));
        }
        drop.extend(fs.iter().copied());
    }
    let faces: Vec<[usize; 3]> = mesh
        .faces()
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, f)| *f)
        .collect();
    let used: BTreeSet<usize> = faces.iter().flatten().copied().collect();
    if used.len() != mesh.num_vertices() {
        return Err(Error::Topology("removal leaves an isolated vertex".into()));
    }
    let out = TriMesh::new(mesh.vertices().to_vec(), faces)?
        .with_labels(mesh.labels().iter().map(|(k, &v)| (k.clone(), v)))?;
    let chi = out.num_vertices() as i64 - out.num_edges() as i64 + out.faces().len() as i64;
    let loops = out.boundary_loops()?;
    if chi != 1 || loops.len() != 1 || out.face_components() != 1 {
        return Err(Error::Topology(format!(
            "result is not a disk (chi = {chi}, {} boundary loops)",
            loops.len()
        )));
    }
    let phantom_pairs: Vec<Edge> = remove_edges.iter().map(|&(u, v)| edge_key(u, v)).collect();
    for &(u, v) in &phantom_pairs {
        if out.has_edge(u, v) {
            return Err(Error::Topology(format!("phantom pair ({u}, {v}) is still an edge")));
        }
    }
    Ok(Crinkle {
        boundary: loops.into_iter().next().unwrap(),
        mesh: out,
        phantom_pairs,
    })
}

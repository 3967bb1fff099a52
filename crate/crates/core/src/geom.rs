//! Points, indexed triangle meshes and their metric quantities.
//!
//! A [`TriMesh`] stores vertex coordinates and oriented faces. Edges are derived
//! from the faces at construction, so surgery that adds or removes faces can
//! never leave a stale edge list behind.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

/// Undirected edge key with `0 < 1`.
pub type Edge = (usize, usize);

#[inline]
pub fn edge_key(a: usize, b: usize) -> Edge {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Indexed, consistently oriented triangle mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    labels: BTreeMap<String, usize>,
    // derived: edge -> incident faces (1 or 2)
    edge_faces: BTreeMap<Edge, Vec<usize>>,
}

impl TriMesh {
    /// Builds a mesh and checks index ranges, manifold edges and orientation.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (i, p) in vertices.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::NonFinite(i));
            }
        }
        let n = vertices.len();
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_faces: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::Structural {
                        face: fi,
                        reason: format!("vertex index {v} out of range ({n} vertices)"),
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Structural {
                    face: fi,
                    reason: format!("repeated vertex in face {f:?}"),
                });
            }
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if directed.insert((a, b), fi).is_some() {
                    return Err(Error::InconsistentOrientation(a, b));
                }
                let entry = edge_faces.entry(edge_key(a, b)).or_default();
                entry.push(fi);
                if entry.len() > 2 {
                    return Err(Error::Structural {
                        face: fi,
                        reason: format!("edge ({a}, {b}) shared by more than two faces"),
                    });
                }
            }
        }
        Ok(Self {
            vertices,
            faces,
            labels: BTreeMap::new(),
            edge_faces,
        })
    }

    pub fn with_labels<I, S>(mut self, labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        for (name, idx) in labels {
            if idx >= self.vertices.len() {
                return Err(Error::InvalidParam {
                    name: "labels".into(),
                    reason: format!("label index {idx} out of range"),
                });
            }
            self.labels.insert(name.into(), idx);
        }
        Ok(self)
    }

    /// Same combinatorics, new coordinates.
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Parse(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        if let Some(i) = vertices
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::NonFinite(i));
        }
        let mut out = self.clone();
        out.vertices = vertices;
        Ok(out)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn labels(&self) -> &BTreeMap<String, usize> {
        &self.labels
    }

    pub fn label(&self, name: &str) -> Option<usize> {
        self.labels.get(name).copied()
    }

    pub fn name_of(&self, v: usize) -> Option<&str> {
        self.labels
            .iter()
            .find(|(_, &i)| i == v)
            .map(|(k, _)| k.as_str())
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Sorted list of undirected edges.
    pub fn edges(&self) -> Vec<Edge> {
        self.edge_faces.keys().copied().collect()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_faces.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edge_faces.contains_key(&edge_key(a, b))
    }

    /// Faces incident to an edge (empty if not an edge).
    pub fn edge_faces(&self, a: usize, b: usize) -> &[usize] {
        self.edge_faces
            .get(&edge_key(a, b))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn boundary_edges(&self) -> Vec<Edge> {
        self.edge_faces
            .iter()
            .filter(|(_, f)| f.len() == 1)
            .map(|(e, _)| *e)
            .collect()
    }

    pub fn is_closed(&self) -> bool {
        !self.faces.is_empty() && self.edge_faces.values().all(|f| f.len() == 2)
    }

    /// Directed boundary half-edges `(a, b)` as traversed by their face.
    pub fn boundary_half_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if self.edge_faces[&edge_key(a, b)] == [fi] {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Boundary loops, each traversed in the direction its faces induce.
    pub fn boundary_loops(&self) -> Result<Vec<Vec<usize>>> {
        let half = self.boundary_half_edges();
        let mut next: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in &half {
            if next.insert(a, b).is_some() {
                return Err(Error::Topology(format!(
                    "vertex {a} is pinched (appears twice on the boundary)"
                )));
            }
        }
        let mut seen = BTreeSet::new();
        let mut loops = Vec::new();
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        for s in starts {
            if seen.contains(&s) {
                continue;
            }
            let mut lp = vec![s];
            seen.insert(s);
            let mut cur = next[&s];
            while cur != s {
                if !seen.insert(cur) {
                    return Err(Error::Topology("boundary does not close".into()));
                }
                lp.push(cur);
                cur = *next
                    .get(&cur)
                    .ok_or_else(|| Error::Topology("open boundary chain".into()))?;
            }
            loops.push(lp);
        }
        Ok(loops)
    }

    /// Number of connected components of the face-adjacency graph (isolated vertices ignored).
    pub fn face_components(&self) -> usize {
        let adj = self.face_adjacency();
        let mut comp = vec![usize::MAX; self.faces.len()];
        let mut count = 0;
        for start in 0..self.faces.len() {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            comp[start] = count;
            while let Some(f) = queue.pop_front() {
                for &(g, _) in &adj[f] {
                    if comp[g] == usize::MAX {
                        comp[g] = count;
                        queue.push_back(g);
                    }
                }
            }
            count += 1;
        }
        count
    }

    /// For each face, its neighbours across edges with the shared edge.
    pub fn face_adjacency(&self) -> Vec<Vec<(usize, Edge)>> {
        let mut adj = vec![Vec::new(); self.faces.len()];
        for (e, fs) in &self.edge_faces {
            if let [a, b] = fs.as_slice() {
                adj[*a].push((*b, *e));
                adj[*b].push((*a, *e));
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        face_normal(&self.vertices, self.faces[f])
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn bbox_diameter(&self) -> f64 {
        bbox_diameter(&self.vertices)
    }

    /// Mesh with all faces reversed.
    pub fn flipped(&self) -> Self {
        let faces = self.faces.iter().map(|f| [f[0], f[2], f[1]]).collect();
        let mut out = TriMesh::new(self.vertices.clone(), faces).expect("reversal keeps validity");
        out.labels = self.labels.clone();
        out
    }

    /// Applies a map to every vertex.
    pub fn transformed(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        let mut out = self.clone();
        out.vertices = self.vertices.iter().map(f).collect();
        out
    }
}

/// Unit normal of an oriented triangle (zero for degenerate input).
pub fn face_normal(vertices: &[Point3], f: [usize; 3]) -> Vec3 {
    let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len > 0.0 {
        n / len
    } else {
        Vec3::zeros()
    }
}

pub fn bbox_diameter(points: &[Point3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = points[0].coords;
    let mut hi = points[0].coords;
    for p in points {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
    }
    (hi - lo).norm()
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p.coords);
    Point3::from(sum / points.len().max(1) as f64)
}

/// Counts and topological flags of a mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshStats {
    #[serde(rename = "V")]
    pub v: usize,
    #[serde(rename = "E")]
    pub e: usize,
    #[serde(rename = "F")]
    pub f: usize,
    pub euler_characteristic: i64,
    pub is_closed: bool,
    pub is_triangulated_sphere: bool,
}

pub fn mesh_stats(mesh: &TriMesh) -> MeshStats {
    let v = mesh.num_vertices();
    let e = mesh.num_edges();
    let f = mesh.faces().len();
    let chi = v as i64 - e as i64 + f as i64;
    let closed = mesh.is_closed();
    let sphere = closed && chi == 2 && 3 * f == 2 * e && mesh.face_components() == 1;
    MeshStats {
        v,
        e,
        f,
        euler_characteristic: chi,
        is_closed: closed,
        is_triangulated_sphere: sphere,
    }
}

/// Map from undirected edge to its length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeLengthMap(pub BTreeMap<Edge, f64>);

impl EdgeLengthMap {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.0.get(&edge_key(a, b)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Edge, &f64)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest relative deviation of `coords` from these lengths.
    pub fn max_relative_error(&self, coords: &[Point3]) -> f64 {
        self.0
            .iter()
            .map(|(&(a, b), &len)| ((coords[a] - coords[b]).norm() - len).abs() / len)
            .fold(0.0, f64::max)
    }
}

/// Euclidean length of every derived edge; zero-length edges are an error.
pub fn edge_lengths(mesh: &TriMesh) -> Result<EdgeLengthMap> {
    let threshold = 1e-12 * mesh.bbox_diameter();
    let verts = mesh.vertices();
    let mut map = BTreeMap::new();
    for (a, b) in mesh.edges() {
        let len = (verts[a] - verts[b]).norm();
        if len <= threshold {
            return Err(Error::ZeroLengthEdge(a, b));
        }
        map.insert((a, b), len);
    }
    Ok(EdgeLengthMap(map))
}

/// Signed enclosed volume by the divergence theorem.
///
/// Contributions are taken against the vertex centroid, which is exact for closed
/// meshes and keeps cancellation error small for meshes far from the origin.
pub fn signed_volume(mesh: &TriMesh) -> Result<f64> {
    if !mesh.is_closed() {
        return Err(Error::NotClosed(mesh.boundary_edges().len()));
    }
    Ok(signed_volume_of(mesh.vertices(), mesh.faces()))
}

/// Volume sum for arbitrary coordinates; the caller guarantees closure.
pub fn signed_volume_of(vertices: &[Point3], faces: &[[usize; 3]]) -> f64 {
    let c = centroid(vertices).coords;
    faces
        .iter()
        .map(|f| {
            let a = vertices[f[0]].coords - c;
            let b = vertices[f[1]].coords - c;
            let d = vertices[f[2]].coords - c;
            a.dot(&b.cross(&d))
        })
        .sum::<f64>()
        / 6.0
}

/// Reorients faces so that neighbours traverse shared edges oppositely.
///
/// Propagates from face 0 of each component; fails on non-orientable input.
pub fn orient_faces(faces: &[[usize; 3]]) -> Result<Vec<[usize; 3]>> {
    let mut edge_map: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            edge_map
                .entry(edge_key(f[k], f[(k + 1) % 3]))
                .or_default()
                .push(fi);
        }
    }
    let mut out: Vec<Option<[usize; 3]>> = vec![None; faces.len()];
    for start in 0..faces.len() {
        if out[start].is_some() {
            continue;
        }
        out[start] = Some(faces[start]);
        let mut queue = VecDeque::from([start]);
        while let Some(fi) = queue.pop_front() {
            let f = out[fi].unwrap();
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                for &g in &edge_map[&edge_key(a, b)] {
                    if g == fi {
                        continue;
                    }
                    let cand = faces[g];
                    let has_same = (0..3).any(|j| cand[j] == a && cand[(j + 1) % 3] == b);
                    let want = if has_same {
                        [cand[0], cand[2], cand[1]]
                    } else {
                        cand
                    };
                    match out[g] {
                        None => {
                            out[g] = Some(want);
                            queue.push_back(g);
                        }
                        Some(existing) if existing != want => {
                            return Err(Error::InconsistentOrientation(a, b));
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

/// Builds a closed mesh with consistent, outward (positive volume) orientation.
pub fn closed_outward(vertices: Vec<Point3>, faces: &[[usize; 3]]) -> Result<TriMesh> {
    let faces = orient_faces(faces)?;
    let mesh = TriMesh::new(vertices, faces)?;
    if signed_volume(&mesh)? < 0.0 {
        Ok(mesh.flipped())
    } else {
        Ok(mesh)
    }
}

/// Best rigid motion (rotation, translation) taking `source` onto `target` in the
/// least-squares sense (Kabsch). Reflections are excluded.
pub fn rigid_align(source: &[Point3], target: &[Point3]) -> (Rotation3<f64>, Vec3) {
    let cs = centroid(source);
    let ct = centroid(target);
    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        h += (s - cs) * (t - ct).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut d = Matrix3::identity();
    if (vt.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = vt.transpose() * d * u.transpose();
    let rot = Rotation3::from_matrix_unchecked(r);
    let t = ct.coords - rot * cs.coords;
    (rot, t)
}

/// Largest point distance after optimally aligning `source` onto `target`.
pub fn procrustes_residual(source: &[Point3], target: &[Point3]) -> f64 {
    let (rot, t) = rigid_align(source, target);
    source
        .iter()
        .zip(target)
        .map(|(s, q)| (rot * s + t - q).norm())
        .fold(0.0, f64::max)
}

/// Convex hull of points in general position, as an outward-oriented triangle mesh.
///
/// Brute force over triples; intended for the small hulls used as rigid seeds.
/// Points strictly inside the hull become isolated vertices and are dropped.
pub fn convex_hull(points: &[Point3]) -> Result<TriMesh> {
    let n = points.len();
    if n < 4 {
        return Err(Error::Degenerate("convex hull needs at least 4 points".into()));
    }
    let scale = bbox_diameter(points);
    let eps = 1e-10 * scale.powi(3).max(f64::MIN_POSITIVE);
    let mut faces = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                let normal = (b - a).cross(&(c - a));
                let (mut pos, mut neg, mut on) = (0, 0, 0);
                for (m, p) in points.iter().enumerate() {
                    if m == i || m == j || m == k {
                        continue;
                    }
                    let s = normal.dot(&(p - a));
                    if s > eps {
                        pos += 1;
                    } else if s < -eps {
                        neg += 1;
                    } else {
                        on += 1;
                    }
                }
                if (pos == 0 || neg == 0) && on > 0 {
                    return Err(Error::Degenerate("four coplanar points on the hull".into()));
                }
                if pos == 0 {
                    faces.push([i, j, k]);
                } else if neg == 0 {
                    faces.push([i, k, j]);
                }
            }
        }
    }
    let used: BTreeSet<usize> = faces.iter().flatten().copied().collect();
    let remap: HashMap<usize, usize> = used.iter().enumerate().map(|(n, &o)| (o, n)).collect();
    let verts = used.iter().map(|&i| points[i]).collect();
    let faces = faces
        .iter()
        .map(|f| [remap[&f[0]], remap[&f[1]], remap[&f[2]]])
        .collect();
    TriMesh::new(verts, faces)
}

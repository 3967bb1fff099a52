//! Triangle-triangle intersection and self-intersection reports.
//!
//! Adjacency is combinatorial: faces sharing an edge are never tested, faces
//! sharing one vertex only count when they cross away from that vertex.
//! Contacts shallower than `eps` are kept as touching and do not count against
//! embeddedness.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flexion::FlexPath;
use crate::geom::{bbox_diameter, Point3, TriMesh, Vec3};

/// Relative tolerance for contact predicates, scaled by the bounding-box diameter.
pub const DEFAULT_EPS_REL: f64 = 1e-9;

pub fn default_eps(coords: &[Point3]) -> f64 {
    DEFAULT_EPS_REL * bbox_diameter(coords).max(f64::MIN_POSITIVE)
}

/// Intersection of two closed triangles.
#[derive(Clone, Debug, PartialEq)]
pub enum TriContact {
    /// Non-coplanar triangles meet along a segment (possibly a point).
    Transversal {
        segment: [Point3; 2],
        /// Both segment ends lie on edges of the same triangle.
        tip: bool,
        depth: f64,
    },
    /// Overlap polygon of coplanar triangles.
    Coplanar { polygon: Vec<Point3>, depth: f64 },
}

impl TriContact {
    /// How far the contact reaches; zero for touching contacts.
    pub fn depth(&self) -> f64 {
        match self {
            TriContact::Transversal { depth, .. } | TriContact::Coplanar { depth, .. } => *depth,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactKind {
    EdgeThroughFace,
    VertexThroughFace,
    CoplanarOverlap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub faces: (usize, usize),
    /// Segment end points; for coplanar overlaps the two farthest polygon points.
    pub segment: [Point3; 2],
    pub kind: ContactKind,
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub frame: usize,
    pub eps: f64,
    /// Penetrating contacts between non-adjacent faces.
    pub pairs: Vec<Contact>,
    /// Contacts shallower than `eps`.
    pub touching: Vec<Contact>,
    /// Faces skipped because their area vanishes at this frame.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate_faces: Vec<usize>,
    pub is_embedded: bool,
}

impl IntersectionReport {
    pub fn max_depth(&self) -> f64 {
        self.pairs.iter().map(|c| c.depth).fold(0.0, f64::max)
    }

    pub fn face_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|c| c.faces).collect()
    }
}

fn cmp_tri(a: &[Point3; 3], b: &[Point3; 3]) -> std::cmp::Ordering {
    let fa = a.iter().flat_map(|p| p.coords.iter().copied());
    let fb = b.iter().flat_map(|p| p.coords.iter().copied());
    fa.zip(fb)
        .map(|(x, y)| x.total_cmp(&y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn unit_normal(t: &[Point3; 3], eps: f64) -> Result<Vec3> {
    let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
    let len = n.norm();
    if !(len > eps * eps) || !len.is_finite() {
        return Err(Error::Degenerate(format!("triangle area {:e}", 0.5 * len)));
    }
    Ok(n / len)
}

/// Extent of `t ∩ plane` along `dir`, with the points realising both ends.
fn plane_interval(t: &[Point3; 3], d: &[f64; 3], dir: &Vec3) -> Option<((f64, Point3), (f64, Point3))> {
    let mut pts = Vec::with_capacity(4);
    for i in 0..3 {
        if d[i] == 0.0 {
            pts.push(t[i]);
        }
        let j = (i + 1) % 3;
        if d[i] * d[j] < 0.0 {
            let s = d[i] / (d[i] - d[j]);
            pts.push(t[i] + (t[j] - t[i]) * s);
        }
    }
    let mut it = pts.into_iter().map(|p| (p.coords.dot(dir), p));
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), x| {
        (if x.0 < lo.0 { x } else { lo }, if x.0 > hi.0 { x } else { hi })
    }))
}

fn signed_dists(t: &[Point3; 3], n: &Vec3, o: &Point3, eps: f64) -> [f64; 3] {
    t.map(|p| {
        let d = (p - o).dot(n);
        if d.abs() <= eps {
            0.0
        } else {
            d
        }
    })
}

fn same_side(d: &[f64; 3]) -> bool {
    d.iter().all(|&x| x > 0.0) || d.iter().all(|&x| x < 0.0)
}

fn penetration(d: &[f64; 3]) -> f64 {
    let up = d.iter().copied().fold(0.0, f64::max);
    let down = d.iter().map(|x| -x).fold(0.0, f64::max);
    up.min(down)
}

/// Intersection of two closed triangles, `None` if they are disjoint.
///
/// Vertex distances within `eps` of the other plane snap to it. The result does
/// not depend on the argument order.
pub fn intersect_triangles(t1: &[Point3; 3], t2: &[Point3; 3], eps: f64) -> Result<Option<TriContact>> {
    let (t1, t2) = if cmp_tri(t2, t1).is_lt() { (t2, t1) } else { (t1, t2) };
    let n1 = unit_normal(t1, eps)?;
    let n2 = unit_normal(t2, eps)?;
    let d2 = signed_dists(t2, &n1, &t1[0], eps);
    if same_side(&d2) {
        return Ok(None);
    }
    let d1 = signed_dists(t1, &n2, &t2[0], eps);
    if same_side(&d1) {
        return Ok(None);
    }
    let line = n1.cross(&n2);
    if d1 == [0.0; 3] || d2 == [0.0; 3] || line.norm() < 1e-12 {
        return Ok(coplanar_overlap(t1, t2, &n1, eps));
    }
    let dir = line.normalize();
    let (Some((a_lo, a_hi)), Some((b_lo, b_hi))) =
        (plane_interval(t1, &d1, &dir), plane_interval(t2, &d2, &dir))
    else {
        return Ok(None);
    };
    let (lo, lo_from_a) = if a_lo.0 >= b_lo.0 { (a_lo, true) } else { (b_lo, false) };
    let (hi, hi_from_a) = if a_hi.0 <= b_hi.0 { (a_hi, true) } else { (b_hi, false) };
    if hi.0 < lo.0 - eps {
        return Ok(None);
    }
    let segment = if hi.0 < lo.0 { [lo.1, lo.1] } else { [lo.1, hi.1] };
    let len = (segment[1] - segment[0]).norm();
    let depth = len.min(penetration(&d1)).min(penetration(&d2));
    Ok(Some(TriContact::Transversal {
        segment,
        tip: lo_from_a == hi_from_a,
        depth: if depth < eps { 0.0 } else { depth },
    }))
}

fn coplanar_overlap(t1: &[Point3; 3], t2: &[Point3; 3], n: &Vec3, eps: f64) -> Option<TriContact> {
    let u = (t1[1] - t1[0]).normalize();
    let v = n.cross(&u);
    let o = t1[0];
    let to2 = |p: &Point3| Vector2::new((p - o).dot(&u), (p - o).dot(&v));
    let a: Vec<Vector2<f64>> = t1.iter().map(to2).collect();
    let mut poly: Vec<Vector2<f64>> = t2.iter().map(to2).collect();
    // a is counter-clockwise in (u, v) by construction of v
    for i in 0..3 {
        let (p, q) = (a[i], a[(i + 1) % 3]);
        let e = (q - p).normalize();
        let side = |x: &Vector2<f64>| e.perp(&(x - p));
        let mut out = Vec::with_capacity(poly.len() + 1);
        for k in 0..poly.len() {
            let (c, d) = (poly[k], poly[(k + 1) % poly.len()]);
            let (sc, sd) = (side(&c), side(&d));
            if sc >= -eps {
                out.push(c);
            }
            if (sc >= -eps) != (sd >= -eps) {
                let s = sc / (sc - sd);
                out.push(c + (d - c) * s);
            }
        }
        poly = out;
        if poly.is_empty() {
            return None;
        }
    }
    poly.dedup_by(|x, y| (*x - *y).norm() <= eps);
    while poly.len() > 1 && (poly[0] - poly[poly.len() - 1]).norm() <= eps {
        poly.pop();
    }
    let m = poly.len();
    let area = 0.5
        * (0..m)
            .map(|i| poly[i].perp(&poly[(i + 1) % m]))
            .sum::<f64>()
            .abs();
    let perimeter: f64 = (0..m).map(|i| (poly[(i + 1) % m] - poly[i]).norm()).sum();
    let depth = if perimeter > 0.0 { 2.0 * area / perimeter } else { 0.0 };
    Some(TriContact::Coplanar {
        polygon: poly.iter().map(|w| o + u * w.x + v * w.y).collect(),
        depth: if depth < eps { 0.0 } else { depth },
    })
}

fn face_tri(coords: &[Point3], f: &[usize; 3]) -> [Point3; 3] {
    [coords[f[0]], coords[f[1]], coords[f[2]]]
}

fn shared_vertices(f: &[usize; 3], g: &[usize; 3]) -> usize {
    f.iter().filter(|v| g.contains(v)).count()
}

fn to_contact(faces: (usize, usize), c: TriContact) -> Contact {
    match c {
        TriContact::Transversal { segment, tip, depth } => Contact {
            faces,
            segment,
            kind: if tip {
                ContactKind::VertexThroughFace
            } else {
                ContactKind::EdgeThroughFace
            },
            depth,
        },
        TriContact::Coplanar { polygon, depth } => {
            let mut best = (0.0, [polygon[0], polygon[0]]);
            for p in &polygon {
                for q in &polygon {
                    let d = (q - p).norm();
                    if d > best.0 {
                        best = (d, [*p, *q]);
                    }
                }
            }
            Contact {
                faces,
                segment: best.1,
                kind: ContactKind::CoplanarOverlap,
                depth,
            }
        }
    }
}

fn degenerate_faces(mesh: &TriMesh, coords: &[Point3], eps: f64) -> Vec<usize> {
    mesh.faces()
        .iter()
        .enumerate()
        .filter(|(_, f)| unit_normal(&face_tri(coords, f), eps).is_err())
        .map(|(i, _)| i)
        .collect()
}

fn report_from(
    mesh: &TriMesh,
    coords: &[Point3],
    eps: f64,
    candidates: impl Iterator<Item = (usize, usize)>,
    degenerate: Vec<usize>,
) -> IntersectionReport {
    let faces = mesh.faces();
    let mut pairs = Vec::new();
    let mut touching = Vec::new();
    for (i, j) in candidates {
        let shared = shared_vertices(&faces[i], &faces[j]);
        if degenerate.contains(&i) || degenerate.contains(&j) || shared > 1 {
            continue;
        }
        let (a, b) = (face_tri(coords, &faces[i]), face_tri(coords, &faces[j]));
        if let Ok(Some(c)) = intersect_triangles(&a, &b, eps) {
            let c = to_contact((i, j), c);
            if c.depth > 0.0 {
                pairs.push(c);
            } else if shared == 0 {
                touching.push(c);
            }
        }
    }
    pairs.sort_by_key(|c| c.faces);
    touching.sort_by_key(|c| c.faces);
    IntersectionReport {
        frame: 0,
        eps,
        is_embedded: pairs.is_empty(),
        pairs,
        touching,
        degenerate_faces: degenerate,
    }
}

fn check_coords(mesh: &TriMesh, coords: &[Point3]) -> Result<()> {
    if coords.len() != mesh.num_vertices() {
        return Err(Error::Parse(format!(
            "expected {} vertices, got {}",
            mesh.num_vertices(),
            coords.len()
        )));
    }
    Ok(())
}

/// All-pairs test after a sweep over axis-aligned boxes inflated by `eps`.
pub fn self_intersections(mesh: &TriMesh, coords: &[Point3], eps: f64) -> Result<IntersectionReport> {
    check_coords(mesh, coords)?;
    let faces = mesh.faces();
    let boxes: Vec<(Point3, Point3)> = faces
        .iter()
        .map(|f| {
            let t = face_tri(coords, f);
            let lo = t[0].inf(&t[1]).inf(&t[2]) - Vec3::repeat(eps);
            let hi = t[0].sup(&t[1]).sup(&t[2]) + Vec3::repeat(eps);
            (lo, hi)
        })
        .collect();
    let mut order: Vec<usize> = (0..faces.len()).collect();
    order.sort_by(|&a, &b| boxes[a].0.x.total_cmp(&boxes[b].0.x));
    let mut cand = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if boxes[j].0.x > boxes[i].1.x {
                break;
            }
            let overlap = (1..3).all(|a| boxes[i].0[a] <= boxes[j].1[a] && boxes[j].0[a] <= boxes[i].1[a]);
            if overlap {
                cand.push((i.min(j), i.max(j)));
            }
        }
    }
    let degenerate = degenerate_faces(mesh, coords, eps);
    Ok(report_from(mesh, coords, eps, cand.into_iter(), degenerate))
}

/// Same as [`self_intersections`] without the box filter.
pub fn self_intersections_brute(mesh: &TriMesh, coords: &[Point3], eps: f64) -> Result<IntersectionReport> {
    check_coords(mesh, coords)?;
    let n = mesh.faces().len();
    let degenerate = degenerate_faces(mesh, coords, eps);
    let cand = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
    Ok(report_from(mesh, coords, eps, cand, degenerate))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEmbedding {
    pub reports: Vec<IntersectionReport>,
    pub embedded: Vec<bool>,
    /// Frame indices `[first, last]` of the longest contiguous embedded run.
    pub best_run: Option<(usize, usize)>,
    /// Driver interval covered by that run.
    pub embedded_range: Option<(f64, f64)>,
    pub worst_depth: f64,
}

impl PathEmbedding {
    pub fn embedded_length(&self) -> f64 {
        self.embedded_range.map_or(0.0, |(a, b)| b - a)
    }

    pub fn embedded_fraction(&self) -> f64 {
        if self.embedded.is_empty() {
            return 0.0;
        }
        self.embedded.iter().filter(|&&e| e).count() as f64 / self.embedded.len() as f64
    }
}

/// Checks every frame. `eps = None` uses [`default_eps`] of the first frame.
pub fn path_embedding(path: &FlexPath, mesh: &TriMesh, eps: Option<f64>) -> Result<PathEmbedding> {
    let Some(first) = path.frames.first() else {
        return Ok(PathEmbedding {
            reports: Vec::new(),
            embedded: Vec::new(),
            best_run: None,
            embedded_range: None,
            worst_depth: 0.0,
        });
    };
    let eps = eps.unwrap_or_else(|| default_eps(&first.vertices));
    let reports = path
        .frames
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let mut r = self_intersections(mesh, &f.vertices, eps)?;
            r.frame = k;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let embedded: Vec<bool> = reports.iter().map(|r| r.is_embedded).collect();
    let span = |a: usize, b: usize| {
        let ts = path.frames[a..=b].iter().map(|f| f.t);
        let lo = ts.clone().fold(f64::INFINITY, f64::min);
        let hi = ts.fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let mut best: Option<(usize, usize, f64)> = None;
    let mut k = 0;
    while k < embedded.len() {
        if !embedded[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < embedded.len() && embedded[k + 1] {
            k += 1;
        }
        let (lo, hi) = span(start, k);
        if best.is_none_or(|b| hi - lo > b.2) {
            best = Some((start, k, hi - lo));
        }
        k += 1;
    }
    let worst_depth = reports.iter().map(|r| r.max_depth()).fold(0.0, f64::max);
    Ok(PathEmbedding {
        best_run: best.map(|(a, b, _)| (a, b)),
        embedded_range: best.map(|(a, b, _)| span(a, b)),
        reports,
        embedded,
        worst_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twinning::catalog::build_default;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    const UNIT: [[f64; 3]; 3] = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];

    fn unit() -> [Point3; 3] {
        UNIT.map(|c| Point3::from(c))
    }

    #[test]
    fn parallel_planes_do_not_meet() {
        let t2 = unit().map(|q| q + Vec3::z());
        assert_eq!(intersect_triangles(&unit(), &t2, 1e-12).unwrap(), None);
    }

    #[test]
    fn identical_triangles_overlap_fully() {
        let t = unit();
        match intersect_triangles(&t, &t, 1e-12).unwrap() {
            Some(TriContact::Coplanar { polygon, depth }) => {
                assert_eq!(polygon.len(), 3);
                for q in &t {
                    assert!(polygon.iter().any(|x| (x - q).norm() < 1e-12));
                }
                // inradius of the right isosceles triangle
                assert!((depth - (2.0 - 2f64.sqrt()) / 2.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vertical_triangle_through_unit_triangle() {
        let t2 = [p(0.2, 0.1, -1.0), p(0.2, 0.5, 1.0), p(0.2, 0.1, 1.0)];
        let Some(TriContact::Transversal { segment, tip, depth }) = intersect_triangles(&unit(), &t2, 1e-12).unwrap() else {
            panic!()
        };
        // t2 meets z = 0 along x = 0.2, y in [0.1, 0.3]
        let mut ys = [segment[0].y, segment[1].y];
        ys.sort_by(f64::total_cmp);
        assert!((ys[0] - 0.1).abs() < 1e-12 && (ys[1] - 0.3).abs() < 1e-12, "{segment:?}");
        assert!(segment.iter().all(|q| (q.x - 0.2).abs() < 1e-12 && q.z.abs() < 1e-12));
        assert!(tip);
        assert!(depth > 0.1);
    }

    #[test]
    fn linked_triangles_are_an_edge_contact() {
        let t2 = [p(0.2, 0.5, -1.0), p(0.2, 0.5, 1.0), p(0.2, 2.0, 0.0)];
        let Some(TriContact::Transversal { segment, tip, .. }) = intersect_triangles(&unit(), &t2, 1e-12).unwrap() else {
            panic!()
        };
        assert!(!tip);
        let mut ys = [segment[0].y, segment[1].y];
        ys.sort_by(f64::total_cmp);
        assert!((ys[0] - 0.5).abs() < 1e-12 && (ys[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn faces_meeting_only_at_a_shared_vertex_do_not_count() {
        let m = build_default("octahedron").unwrap();
        let c = m.mesh();
        let r = self_intersections(c, c.vertices(), default_eps(c.vertices())).unwrap();
        assert!(r.is_embedded && r.touching.is_empty());
    }

    #[test]
    fn poking_tip_is_a_vertex_contact() {
        let t2 = [p(0.2, 0.2, -0.1), p(-1.0, -1.0, 1.0), p(2.0, -1.0, 1.0)];
        let Some(TriContact::Transversal { tip, depth, .. }) = intersect_triangles(&unit(), &t2, 1e-12).unwrap() else {
            panic!()
        };
        assert!(tip);
        assert!(depth > 0.0 && depth <= 0.1 + 1e-12);
    }

    #[test]
    fn vertex_resting_on_face_is_touching() {
        let t2 = [p(0.2, 0.2, 0.0), p(-1.0, -1.0, 1.0), p(2.0, -1.0, 1.0)];
        let c = intersect_triangles(&unit(), &t2, 1e-12).unwrap().unwrap();
        assert_eq!(c.depth(), 0.0);
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        let t2 = [p(0.0, 0.0, 0.0), p(1.0, 1.0, 1.0), p(2.0, 2.0, 2.0)];
        assert!(matches!(intersect_triangles(&unit(), &t2, 1e-9), Err(Error::Degenerate(_))));
    }

    #[test]
    fn argument_order_does_not_matter() {
        let t2 = [p(0.3, -0.5, -1.0), p(0.1, 0.9, 1.0), p(0.6, 0.2, 0.7)];
        let a = intersect_triangles(&unit(), &t2, 1e-12).unwrap();
        let b = intersect_triangles(&t2, &unit(), 1e-12).unwrap();
        assert!(a.is_some());
        assert_eq!(a, b);
    }

    #[test]
    fn cube_is_embedded() {
        let m = build_default("cube").unwrap();
        let c = m.mesh();
        let r = self_intersections(c, c.vertices(), default_eps(c.vertices())).unwrap();
        assert!(r.is_embedded && r.pairs.is_empty(), "{r:?}");
    }

    #[test]
    fn twins_self_intersect() {
        for name in ["bricard1", "bricard2", "twinned_anticupola", "star_dodecahedron"] {
            let m = build_default(name).unwrap();
            let c = m.mesh();
            let r = self_intersections(c, c.vertices(), default_eps(c.vertices())).unwrap();
            assert!(!r.is_embedded, "{name}");
            let brute = self_intersections_brute(c, c.vertices(), r.eps).unwrap();
            assert_eq!(r.face_pairs(), brute.face_pairs(), "{name}");
        }
    }

    #[test]
    fn empty_path_has_no_run() {
        let m = build_default("bricard1").unwrap();
        let path = FlexPath {
            driver: Vec::new(),
            frames: Vec::new(),
            status: Default::default(),
            faces: None,
            twin: None,
        };
        let e = path_embedding(&path, m.mesh(), None).unwrap();
        assert_eq!(e.best_run, None);
        assert_eq!(e.embedded_length(), 0.0);
    }
}

//! Symmetric quadrilaterals and the isometries that swap their vertices.
//!
//! A quadrilateral `A B A' B'` with `|AB| = |A'B'|` and `|AB'| = |A'B|` is fixed by a
//! half-turn about a line that exchanges `A <-> A'` and `B <-> B'` (type I). One with
//! `|AB| = |AB'|` and `|A'B| = |A'B'|` is fixed by a reflection in a plane through `A`
//! and `A'` that exchanges `B <-> B'` (type II). Both properties survive any motion
//! that preserves the four side lengths, which is what makes twinning work.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point3, TriMesh, Vec3};

/// Which isometry relates the two halves of a twin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymmetryKind {
    /// Half-turn about a line.
    #[serde(rename = "type_i")]
    TypeI,
    /// Reflection in a plane.
    #[serde(rename = "type_ii")]
    TypeII,
}

impl std::fmt::Display for SymmetryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SymmetryKind::TypeI => f.write_str("type_i"),
            SymmetryKind::TypeII => f.write_str("type_ii"),
        }
    }
}

impl std::str::FromStr for SymmetryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "type_i" | "i" | "1" | "typei" | "line" => Ok(SymmetryKind::TypeI),
            "type_ii" | "ii" | "2" | "typeii" | "plane" => Ok(SymmetryKind::TypeII),
            other => Err(Error::Parse(format!("unknown symmetry kind `{other}`"))),
        }
    }
}

/// Vertex indices of a quadrilateral `A B A' B'` around the interior edge `AA'`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetricQuad {
    pub a: usize,
    pub b: usize,
    pub a_prime: usize,
    pub b_prime: usize,
    pub kinds: Vec<SymmetryKind>,
}

impl SymmetricQuad {
    pub fn indices(&self) -> [usize; 4] {
        [self.a, self.b, self.a_prime, self.b_prime]
    }

    pub fn points(&self, vertices: &[Point3]) -> [Point3; 4] {
        self.indices().map(|i| vertices[i])
    }

    pub fn has(&self, kind: SymmetryKind) -> bool {
        self.kinds.contains(&kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryLine {
    pub point: Point3,
    pub direction: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryPlane {
    pub point: Point3,
    pub normal: Vec3,
}

/// Either isometry, as used by twins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Isometry {
    HalfTurn(SymmetryLine),
    Reflection(SymmetryPlane),
}

impl Isometry {
    pub fn apply(&self, p: &Point3) -> Point3 {
        match self {
            Isometry::HalfTurn(l) => half_turn(l, p),
            Isometry::Reflection(pl) => reflect(pl, p),
        }
    }

    pub fn kind(&self) -> SymmetryKind {
        match self {
            Isometry::HalfTurn(_) => SymmetryKind::TypeI,
            Isometry::Reflection(_) => SymmetryKind::TypeII,
        }
    }
}

fn half_turn(line: &SymmetryLine, x: &Point3) -> Point3 {
    let d = line.direction;
    let rel = x - line.point;
    let foot = line.point + d * rel.dot(&d);
    Point3::from(2.0 * foot.coords - x.coords)
}

fn reflect(plane: &SymmetryPlane, x: &Point3) -> Point3 {
    let n = plane.normal;
    x - n * (2.0 * (x - plane.point).dot(&n))
}

pub fn apply_half_rotation(line: &SymmetryLine, points: &[Point3]) -> Vec<Point3> {
    points.iter().map(|p| half_turn(line, p)).collect()
}

pub fn apply_reflection(plane: &SymmetryPlane, points: &[Point3]) -> Vec<Point3> {
    points.iter().map(|p| reflect(plane, p)).collect()
}

/// Flips `v` so its leading non-negligible component is positive.
fn canonical_direction(v: Vec3) -> Vec3 {
    let scale = v.amax();
    for i in 0..3 {
        if v[i].abs() > 1e-12 * scale {
            return if v[i] < 0.0 { -v } else { v };
        }
    }
    v
}

fn quad_diameter(q: &[Point3; 4]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            d = d.max((q[i] - q[j]).norm());
        }
    }
    d
}

fn dist(a: &Point3, b: &Point3) -> f64 {
    (a - b).norm()
}

/// Type I length conditions with absolute tolerance `abs_tol`.
pub fn is_type_i(q: &[Point3; 4], abs_tol: f64) -> bool {
    let [a, b, a2, b2] = q;
    (dist(a, b) - dist(a2, b2)).abs() <= abs_tol && (dist(a, b2) - dist(a2, b)).abs() <= abs_tol
}

/// Type II length conditions with absolute tolerance `abs_tol`.
pub fn is_type_ii(q: &[Point3; 4], abs_tol: f64) -> bool {
    let [a, b, a2, b2] = q;
    (dist(a, b) - dist(a, b2)).abs() <= abs_tol && (dist(a2, b) - dist(a2, b2)).abs() <= abs_tol
}

/// Interior edges `AA'` whose two triangles `A B A'` and `A' B' A` form a symmetric
/// quadrilateral. `tol` is relative to the mean edge length.
pub fn find_symmetric_quads(mesh: &TriMesh, tol: f64) -> Vec<SymmetricQuad> {
    let verts = mesh.vertices();
    let edges = mesh.edges();
    if edges.is_empty() {
        return Vec::new();
    }
    let mean = edges
        .iter()
        .map(|&(a, b)| dist(&verts[a], &verts[b]))
        .sum::<f64>()
        / edges.len() as f64;
    let abs_tol = tol * mean;
    let mut out = Vec::new();
    for (a, a2) in edges {
        let fs = mesh.edge_faces(a, a2);
        if fs.len() != 2 {
            continue;
        }
        // B closes the face that runs A -> B -> A'; B' the one that runs A' -> B' -> A.
        let mut b = None;
        let mut b2 = None;
        for &fi in fs {
            let f = mesh.faces()[fi];
            let k = f.iter().position(|&v| v == a).unwrap();
            let (next, prev) = (f[(k + 1) % 3], f[(k + 2) % 3]);
            if prev == a2 {
                b = Some(next);
            } else {
                b2 = Some(prev);
            }
        }
        let (Some(b), Some(b2)) = (b, b2) else { continue };
        if b == b2 {
            continue;
        }
        let q = [verts[a], verts[b], verts[a2], verts[b2]];
        let mut kinds = Vec::new();
        if is_type_i(&q, abs_tol) {
            kinds.push(SymmetryKind::TypeI);
        }
        if is_type_ii(&q, abs_tol) {
            kinds.push(SymmetryKind::TypeII);
        }
        if !kinds.is_empty() {
            out.push(SymmetricQuad {
                a,
                b,
                a_prime: a2,
                b_prime: b2,
                kinds,
            });
        }
    }
    out
}

/// Half-turn axis of a quadrilateral, without checking the length conditions.
///
/// The axis runs through the midpoint `X` of `AA'` perpendicular to both diagonals.
/// When the diagonals are parallel the direction is taken along `X -> Y` (`Y` the
/// midpoint of `BB'`) instead. In the planar parallelogram case `X = Y` and the
/// cross product of the diagonals is the plane normal.
pub fn line_of(q: &[Point3; 4]) -> Result<SymmetryLine> {
    let [a, b, a2, b2] = q;
    let diam = quad_diameter(q);
    if diam == 0.0 {
        return Err(Error::Degenerate("all four points coincide".into()));
    }
    let x = Point3::from((a.coords + a2.coords) * 0.5);
    let y = Point3::from((b.coords + b2.coords) * 0.5);
    let da = a2 - a;
    let db = b2 - b;
    let cross = da.cross(&db);
    // both candidates are exact for a true half-turn; take the better conditioned
    let s_cross = cross.norm() / (da.norm() * db.norm()).max(f64::MIN_POSITIVE);
    let s_mid = (y - x).norm() / diam;
    let direction = if s_cross > 1e-6 && s_cross >= s_mid {
        cross.normalize()
    } else if s_mid > 1e-10 {
        (y - x).normalize()
    } else {
        return Err(Error::Degenerate(
            "quadrilateral is collinear; symmetry line undefined".into(),
        ));
    };
    Ok(SymmetryLine {
        point: x,
        direction: canonical_direction(direction),
    })
}

/// Mirror plane of a quadrilateral, without checking the length conditions.
pub fn plane_of(q: &[Point3; 4]) -> Result<SymmetryPlane> {
    let [a, b, a2, b2] = q;
    let diam = quad_diameter(q);
    if dist(a, a2) <= 1e-12 * diam.max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate("A and A' coincide".into()));
    }
    let m = Point3::from((b.coords + b2.coords) * 0.5);
    let bb = b2 - b;
    let (normal, anchors): (Vec3, Vec<Point3>) = if bb.norm() > 1e-10 * diam {
        (bb.normalize(), vec![*a, *a2, m])
    } else {
        // B = B': any plane through A, A', B fixes everything.
        let n = (a2 - a).cross(&(b - a));
        if n.norm() <= 1e-12 * diam * diam {
            return Err(Error::Degenerate("A, A', B collinear".into()));
        }
        (n.normalize(), vec![*a, *a2, *b])
    };
    let normal = canonical_direction(normal);
    let offset = anchors.iter().map(|p| p.coords.dot(&normal)).sum::<f64>() / anchors.len() as f64;
    Ok(SymmetryPlane {
        point: Point3::from(normal * offset),
        normal,
    })
}

/// Half-turn line of a type I quadrilateral `[A, B, A', B']`; `tol` is relative to
/// the quadrilateral's diameter.
pub fn symmetry_line(q: &[Point3; 4], tol: f64) -> Result<SymmetryLine> {
    let abs = tol * quad_diameter(q);
    if !is_type_i(q, abs) {
        return Err(Error::NotSymmetric(
            "|AB| != |A'B'| or |AB'| != |A'B|".into(),
        ));
    }
    let line = line_of(q)?;
    let [a, b, a2, b2] = q;
    let err = dist(&half_turn(&line, a), a2).max(dist(&half_turn(&line, b), b2));
    if err > abs.max(1e-12 * quad_diameter(q)) * 10.0 {
        return Err(Error::NotSymmetric(format!(
            "half-turn leaves residual {err:e}"
        )));
    }
    Ok(line)
}

/// Mirror plane of a type II quadrilateral `[A, B, A', B']`.
pub fn symmetry_plane(q: &[Point3; 4], tol: f64) -> Result<SymmetryPlane> {
    let abs = tol * quad_diameter(q);
    if !is_type_ii(q, abs) {
        return Err(Error::NotSymmetric(
            "|AB| != |AB'| or |A'B| != |A'B'|".into(),
        ));
    }
    let plane = plane_of(q)?;
    let [a, b, a2, b2] = q;
    let err = dist(&reflect(&plane, a), a)
        .max(dist(&reflect(&plane, a2), a2))
        .max(dist(&reflect(&plane, b), b2));
    if err > abs.max(1e-12 * quad_diameter(q)) * 10.0 {
        return Err(Error::NotSymmetric(format!(
            "reflection leaves residual {err:e}"
        )));
    }
    Ok(plane)
}

/// The isometry of the requested kind for a quadrilateral.
pub fn isometry_for(q: &[Point3; 4], kind: SymmetryKind, tol: f64) -> Result<Isometry> {
    match kind {
        SymmetryKind::TypeI => symmetry_line(q, tol).map(Isometry::HalfTurn),
        SymmetryKind::TypeII => symmetry_plane(q, tol).map(Isometry::Reflection),
    }
}

/// Like [`isometry_for`] but skips the length checks (for residual measurements).
pub fn isometry_of(q: &[Point3; 4], kind: SymmetryKind) -> Result<Isometry> {
    match kind {
        SymmetryKind::TypeI => line_of(q).map(Isometry::HalfTurn),
        SymmetryKind::TypeII => plane_of(q).map(Isometry::Reflection),
    }
}

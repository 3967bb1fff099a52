//! Planar nets with fold labels and gluing marks, SVG output and frame export.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{Rotation3, Unit, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flexion::FlexPath;
use crate::geom::{face_normal, procrustes_residual, Edge, Point3, TriMesh, Vec3};

pub type P2 = Vector2<f64>;

/// Bends closer than this to zero are flat.
pub const FLAT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fold {
    Mountain,
    Valley,
    Flat,
}

impl Fold {
    pub fn from_bend(bend: f64) -> Self {
        if bend.abs() < FLAT_TOL {
            Fold::Flat
        } else if bend > 0.0 {
            Fold::Mountain
        } else {
            Fold::Valley
        }
    }
}

/// An edge shared by two faces of the mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetEdge {
    pub edge: Edge,
    /// `(parent, child)` for tree edges, ordered by index for cuts.
    pub faces: (usize, usize),
    /// Turning angle of the outward normal across the edge; positive is convex.
    pub bend: f64,
    pub fold: Fold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlueMark {
    pub id: usize,
    pub symbol: String,
    pub color: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub root: usize,
    /// Per-face 2D corners in the order of the mesh face.
    pub placed: Vec<[P2; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub parent: Vec<Option<usize>>,
    /// Tree edges, in placement order.
    pub creases: Vec<NetEdge>,
    /// Interior edges cut open, each with its gluing mark.
    pub cuts: Vec<(NetEdge, GlueMark)>,
    /// Boundary edges of the surface itself.
    pub boundary: Vec<Edge>,
    /// Placed faces whose interiors overlap.
    pub overlaps: Vec<(usize, usize)>,
}

const SYMBOLS: [&str; 8] = ["●", "■", "▲", "◆", "★", "✚", "✖", "♥"];
const COLORS: [&str; 8] = [
    "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn glue_mark(id: usize) -> GlueMark {
    let (s, c) = (id % SYMBOLS.len(), (id / SYMBOLS.len()) % COLORS.len());
    let mut symbol = SYMBOLS[s].to_string();
    if id >= SYMBOLS.len() * COLORS.len() {
        symbol.push_str(&id.to_string());
    }
    GlueMark {
        id,
        symbol,
        color: COLORS[c].to_string(),
    }
}

/// Signed turning angle from the face containing `a -> b` to the one containing `b -> a`.
pub fn bend_angle(coords: &[Point3], f: [usize; 3], g: [usize; 3], a: usize, b: usize) -> f64 {
    let nf = face_normal(coords, f);
    let ng = face_normal(coords, g);
    let e = (coords[b] - coords[a]).normalize();
    e.dot(&nf.cross(&ng)).atan2(nf.dot(&ng))
}

/// Orients the shared edge so that `f` contains `a -> b`.
fn directed_in(f: [usize; 3], e: Edge) -> (usize, usize) {
    for k in 0..3 {
        if (f[k], f[(k + 1) % 3]) == e {
            return e;
        }
    }
    (e.1, e.0)
}

fn perp(u: P2) -> P2 {
    P2::new(-u.y, u.x)
}

/// Third corner of a triangle on the left of `p -> q`.
fn apex_2d(p: P2, q: P2, dp: f64, dq: f64) -> P2 {
    let l = (q - p).norm();
    let u = (q - p) / l;
    let x = (dp * dp - dq * dq + l * l) / (2.0 * l);
    let y = (dp * dp - x * x).max(0.0).sqrt();
    p + u * x + perp(u) * y
}

fn place_root(coords: &[Point3], f: [usize; 3]) -> [P2; 3] {
    let [a, b, c] = f.map(|i| coords[i]);
    let p = P2::zeros();
    let q = P2::new((b - a).norm(), 0.0);
    [p, q, apex_2d(p, q, (c - a).norm(), (c - b).norm())]
}

fn place_child(coords: &[Point3], parent: &[P2; 3], pf: [usize; 3], g: [usize; 3], e: Edge) -> [P2; 3] {
    let (a, b) = directed_in(pf, e);
    let pos = |v: usize| parent[pf.iter().position(|&x| x == v).unwrap()];
    let (pa, pb) = (pos(a), pos(b));
    let c = *g.iter().find(|&&v| v != a && v != b).unwrap();
    // g runs b -> a -> c, so c sits on the left of b -> a
    let pc = apex_2d(pb, pa, (coords[c] - coords[b]).norm(), (coords[c] - coords[a]).norm());
    g.map(|v| if v == a { pa } else if v == b { pb } else { pc })
}

fn tri_overlap(s: &[P2; 3], t: &[P2; 3], tol: f64) -> bool {
    for tri in [s, t] {
        for k in 0..3 {
            let n = perp(tri[(k + 1) % 3] - tri[k]);
            let len = n.norm();
            if len == 0.0 {
                continue;
            }
            let n = n / len;
            let proj = |x: &[P2; 3]| {
                let v = x.map(|p| p.dot(&n));
                (v[0].min(v[1]).min(v[2]), v[0].max(v[1]).max(v[2]))
            };
            let (a0, a1) = proj(s);
            let (b0, b1) = proj(t);
            if a1 <= b0 + tol || b1 <= a0 + tol {
                return false;
            }
        }
    }
    true
}

fn largest_face(mesh: &TriMesh, coords: &[Point3]) -> usize {
    let area = |f: &[usize; 3]| {
        let [a, b, c] = f.map(|i| coords[i]);
        (b - a).cross(&(c - a)).norm()
    };
    let faces = mesh.faces();
    (0..faces.len()).fold(0, |best, i| if area(&faces[i]) > area(&faces[best]) { i } else { best })
}

fn check_input(mesh: &TriMesh, coords: &[Point3]) -> Result<()> {
    if mesh.faces().is_empty() {
        return Err(Error::Topology("mesh has no faces".into()));
    }
    if coords.len() != mesh.num_vertices() {
        return Err(Error::Parse(format!(
            "expected {} vertices, got {}",
            mesh.num_vertices(),
            coords.len()
        )));
    }
    if mesh.face_components() != 1 {
        return Err(Error::Topology("mesh is not connected".into()));
    }
    Ok(())
}

/// Breadth-first unfolding from `root`, or from the largest face.
pub fn unfold(mesh: &TriMesh, coords: &[Point3], root: Option<usize>) -> Result<Net> {
    check_input(mesh, coords)?;
    let root = root.unwrap_or_else(|| largest_face(mesh, coords));
    if root >= mesh.faces().len() {
        return Err(Error::InvalidParam {
            name: "root".into(),
            reason: format!("face {root} out of range"),
        });
    }
    let adj = mesh.face_adjacency();
    let mut seen = vec![false; adj.len()];
    let mut tree = Vec::new();
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(f) = queue.pop_front() {
        for &(g, e) in &adj[f] {
            if !seen[g] {
                seen[g] = true;
                tree.push((f, g, e));
                queue.push_back(g);
            }
        }
    }
    build_net(mesh, coords, root, &tree)
}

/// Unfolding along a given spanning tree of face pairs.
pub fn unfold_with_tree(mesh: &TriMesh, coords: &[Point3], root: usize, tree: &[(usize, usize)]) -> Result<Net> {
    check_input(mesh, coords)?;
    let nf = mesh.faces().len();
    if root >= nf || tree.len() + 1 != nf {
        return Err(Error::InvalidParam {
            name: "tree".into(),
            reason: format!("need {} tree edges rooted at a valid face", nf.saturating_sub(1)),
        });
    }
    let adj = mesh.face_adjacency();
    let mut seen = vec![false; nf];
    seen[root] = true;
    let mut ordered = Vec::new();
    let mut queue = VecDeque::from([root]);
    while let Some(f) = queue.pop_front() {
        for &(g, e) in &adj[f] {
            let in_tree = tree.iter().any(|&(x, y)| (x, y) == (f, g) || (x, y) == (g, f));
            if in_tree && !seen[g] {
                seen[g] = true;
                ordered.push((f, g, e));
                queue.push_back(g);
            }
        }
    }
    if ordered.len() + 1 != nf {
        return Err(Error::InvalidParam {
            name: "tree".into(),
            reason: "edges do not form a spanning tree of adjacent faces".into(),
        });
    }
    build_net(mesh, coords, root, &ordered)
}

fn build_net(mesh: &TriMesh, coords: &[Point3], root: usize, tree: &[(usize, usize, Edge)]) -> Result<Net> {
    let faces = mesh.faces().to_vec();
    let nf = faces.len();
    let mut placed = vec![[P2::zeros(); 3]; nf];
    let mut parent = vec![None; nf];
    placed[root] = place_root(coords, faces[root]);
    let mut creases = Vec::with_capacity(tree.len());
    for &(f, g, e) in tree {
        placed[g] = place_child(coords, &placed[f], faces[f], faces[g], e);
        parent[g] = Some(f);
        let (a, b) = directed_in(faces[f], e);
        let bend = bend_angle(coords, faces[f], faces[g], a, b);
        creases.push(NetEdge {
            edge: e,
            faces: (f, g),
            bend,
            fold: Fold::from_bend(bend),
        });
    }
    let tree_edges: Vec<Edge> = tree.iter().map(|t| t.2).collect();
    let mut cuts = Vec::new();
    let mut boundary = Vec::new();
    for (a, b) in mesh.edges() {
        match *mesh.edge_faces(a, b) {
            [f, g] if !tree_edges.contains(&(a, b)) => {
                let (x, y) = directed_in(faces[f], (a, b));
                let bend = bend_angle(coords, faces[f], faces[g], x, y);
                let id = cuts.len();
                cuts.push((
                    NetEdge {
                        edge: (a, b),
                        faces: (f.min(g), f.max(g)),
                        bend,
                        fold: Fold::from_bend(bend),
                    },
                    glue_mark(id),
                ));
            }
            [_] => boundary.push((a, b)),
            _ => {}
        }
    }
    let diam = placed
        .iter()
        .flatten()
        .map(|p| p.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = 1e-9 * diam;
    let mut overlaps = Vec::new();
    for i in 0..nf {
        for j in i + 1..nf {
            if tri_overlap(&placed[i], &placed[j], tol) {
                overlaps.push((i, j));
            }
        }
    }
    Ok(Net {
        root,
        placed,
        faces,
        parent,
        creases,
        cuts,
        boundary,
        overlaps,
    })
}

impl Net {
    pub fn is_empty(&self) -> bool {
        self.placed.is_empty()
    }

    /// Largest relative side-length mismatch between placed and 3D faces.
    pub fn congruence_error(&self, coords: &[Point3]) -> f64 {
        let mut worst: f64 = 0.0;
        for (f, t) in self.faces.iter().zip(&self.placed) {
            for k in 0..3 {
                let (i, j) = (k, (k + 1) % 3);
                let d3 = (coords[f[j]] - coords[f[i]]).norm();
                let d2 = (t[j] - t[i]).norm();
                worst = worst.max((d3 - d2).abs() / d3.max(f64::MIN_POSITIVE));
            }
        }
        worst
    }

    /// Folds the net back up using only its side lengths and crease bends.
    pub fn refold(&self) -> Vec<Point3> {
        let nf = self.faces.len();
        let mut pos: Vec<[Point3; 3]> = vec![[Point3::origin(); 3]; nf];
        let mut normal = vec![Vec3::zeros(); nf];
        let r = self.placed[self.root];
        pos[self.root] = r.map(|p| Point3::new(p.x, p.y, 0.0));
        normal[self.root] = Vec3::z();
        for c in &self.creases {
            let (f, g) = c.faces;
            let (pf, gf) = (self.faces[f], self.faces[g]);
            let (a, b) = directed_in(pf, c.edge);
            let at = |face: usize, v: usize| self.faces[face].iter().position(|&x| x == v).unwrap();
            let (pa, pb) = (pos[f][at(f, a)], pos[f][at(f, b)]);
            let e = Unit::new_normalize(pb - pa);
            let n = Rotation3::from_axis_angle(&e, c.bend) * normal[f];
            let cv = *gf.iter().find(|&&v| v != a && v != b).unwrap();
            let flat = &self.placed[g];
            let (dc_b, dc_a) = ((flat[at(g, cv)] - flat[at(g, b)]).norm(), (flat[at(g, cv)] - flat[at(g, a)]).norm());
            let l = (pa - pb).norm();
            let u = (pa - pb) / l;
            let x = (dc_b * dc_b - dc_a * dc_a + l * l) / (2.0 * l);
            let y = (dc_b * dc_b - x * x).max(0.0).sqrt();
            let pc = pb + u * x + n.cross(&u) * y;
            pos[g] = gf.map(|v| if v == a { pa } else if v == b { pb } else { pc });
            normal[g] = n;
        }
        let nv = self.faces.iter().flatten().max().map_or(0, |m| m + 1);
        let mut out = vec![Point3::origin(); nv];
        for (f, p) in self.faces.iter().zip(&pos) {
            for k in 0..3 {
                out[f[k]] = p[k];
            }
        }
        out
    }

    /// Procrustes distance between the refolded net and `coords`.
    pub fn refold_residual(&self, coords: &[Point3]) -> f64 {
        let folded = self.refold();
        let used: Vec<usize> = {
            let mut v: Vec<usize> = self.faces.iter().flatten().copied().collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let src: Vec<Point3> = used.iter().map(|&i| folded[i]).collect();
        let dst: Vec<Point3> = used.iter().map(|&i| coords[i]).collect();
        procrustes_residual(&src, &dst)
    }

    fn bounds(&self) -> (P2, P2) {
        let mut lo = P2::repeat(f64::INFINITY);
        let mut hi = P2::repeat(f64::NEG_INFINITY);
        for p in self.placed.iter().flatten() {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvgOptions {
    pub mm_per_unit: f64,
    pub margin_mm: f64,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            mm_per_unit: 40.0,
            margin_mm: 10.0,
        }
    }
}

/// SVG 1.1: solid mountain creases, dashed valley creases, marked cuts and an
/// overlap layer.
pub fn export_svg(net: &Net, opts: &SvgOptions) -> Result<String> {
    if net.is_empty() {
        return Err(Error::Topology("empty net".into()));
    }
    let (lo, hi) = net.bounds();
    let s = opts.mm_per_unit;
    let m = opts.margin_mm;
    let (w, h) = ((hi.x - lo.x) * s + 2.0 * m, (hi.y - lo.y) * s + 2.0 * m);
    // flip y so the net reads counter-clockwise on paper
    let tx = |p: &P2| (m + (p.x - lo.x) * s, m + (hi.y - p.y) * s);
    let at = |f: usize, v: usize| {
        let k = net.faces[f].iter().position(|&x| x == v).unwrap();
        tx(&net.placed[f][k])
    };
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.3}mm" height="{h:.3}mm" viewBox="0 0 {w:.3} {h:.3}">"#
    );
    let _ = writeln!(out, r##"<g id="faces" fill="#f4f1ea" stroke="none">"##);
    for t in &net.placed {
        let [a, b, c] = t.map(|p| tx(&p));
        let _ = writeln!(
            out,
            r#"<polygon points="{:.4},{:.4} {:.4},{:.4} {:.4},{:.4}"/>"#,
            a.0, a.1, b.0, b.1, c.0, c.1
        );
    }
    let _ = writeln!(out, "</g>");
    let line = |out: &mut String, p: (f64, f64), q: (f64, f64), class: &str| {
        let _ = writeln!(
            out,
            r#"<line class="{class}" x1="{:.4}" y1="{:.4}" x2="{:.4}" y2="{:.4}"/>"#,
            p.0, p.1, q.0, q.1
        );
    };
    let _ = writeln!(out, r#"<g id="creases" stroke="black" stroke-width="0.3">"#);
    for c in &net.creases {
        let g = c.faces.1;
        let (p, q) = (at(g, c.edge.0), at(g, c.edge.1));
        match c.fold {
            Fold::Mountain => line(&mut out, p, q, "mountain"),
            Fold::Valley => {
                let _ = writeln!(
                    out,
                    r#"<line class="valley" stroke-dasharray="2,1.5" x1="{:.4}" y1="{:.4}" x2="{:.4}" y2="{:.4}"/>"#,
                    p.0, p.1, q.0, q.1
                );
            }
            Fold::Flat => {
                let _ = writeln!(
                    out,
                    r##"<line class="flat" stroke="#999999" stroke-dasharray="0.5,1" x1="{:.4}" y1="{:.4}" x2="{:.4}" y2="{:.4}"/>"##,
                    p.0, p.1, q.0, q.1
                );
            }
        }
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g id="cuts" stroke="black" stroke-width="0.5">"#);
    for (c, mark) in &net.cuts {
        for f in [c.faces.0, c.faces.1] {
            let (p, q) = (at(f, c.edge.0), at(f, c.edge.1));
            line(&mut out, p, q, "cut");
            // label sits just inside the face
            let k = net.faces[f].iter().position(|&v| v != c.edge.0 && v != c.edge.1).unwrap();
            let apex = tx(&net.placed[f][k]);
            let mid = (0.5 * (p.0 + q.0), 0.5 * (p.1 + q.1));
            let lx = mid.0 + 0.15 * (apex.0 - mid.0);
            let ly = mid.1 + 0.15 * (apex.1 - mid.1);
            let _ = writeln!(
                out,
                r#"<text class="glue" x="{lx:.4}" y="{ly:.4}" fill="{}" stroke="none" font-size="3" text-anchor="middle" dominant-baseline="middle">{}</text>"#,
                mark.color, mark.symbol
            );
        }
    }
    for &(a, b) in &net.boundary {
        let f = net
            .faces
            .iter()
            .position(|f| f.contains(&a) && f.contains(&b))
            .unwrap();
        line(&mut out, at(f, a), at(f, b), "boundary");
    }
    let _ = writeln!(out, "</g>");
    if !net.overlaps.is_empty() {
        let _ = writeln!(out, r##"<g id="overlaps" fill="#ff0000" fill-opacity="0.35" stroke="none">"##);
        let mut shown = BTreeMap::new();
        for &(i, j) in &net.overlaps {
            shown.insert(i, ());
            shown.insert(j, ());
        }
        for f in shown.keys() {
            let [a, b, c] = net.placed[*f].map(|p| tx(&p));
            let _ = writeln!(
                out,
                r#"<polygon points="{:.4},{:.4} {:.4},{:.4} {:.4},{:.4}"/>"#,
                a.0, a.1, b.0, b.1, c.0, c.1
            );
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</svg>");
    Ok(out)
}

/// Frames JSON for the explorer and external renderers.
pub fn export_frames(path: &FlexPath) -> Result<String> {
    Ok(serde_json::to_string(path)?)
}

pub fn write_frames<W: Write>(path: &FlexPath, w: W) -> Result<()> {
    serde_json::to_writer(w, path)?;
    Ok(())
}

pub fn read_frames(text: &str) -> Result<FlexPath> {
    Ok(serde_json::from_str(text)?)
}

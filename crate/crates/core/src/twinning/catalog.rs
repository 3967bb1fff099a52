//! Named, parameterised models with labels matching the usual figures.
//!
//! | name | kind | notes |
//! |------|------|-------|
//! | `tetrahedron`, `octahedron`, `cube` | closed | rigid convex references |
//! | `convex_hull` | closed | hull of `n` seeded random points on a sphere |
//! | `pyramid` | closed | square pyramid, base split by `AA'`; seed of `bricard1` |
//! | `kite_pyramid` | closed | kite-based pyramid; seed of `bricard2` |
//! | `bricard1` | twin | half-turn twin of `pyramid` |
//! | `bricard2` | twin | mirror twin of `kite_pyramid` |
//! | `bricard_crinkle` | crinkle | `bricard1` without the faces on `AC'` |
//! | `digonal_anticupola` | closed | base square split by `A1A3` |
//! | `twinned_anticupola` | twin | flexible triangulated dodecahedron |
//! | `star_dodecahedron` | twin | anticupola peaks on opposite sides of the base |
//! | `new_crinkle` | crinkle | star dodecahedron without `C1C2` |
//! | `pentagonal_crinkle` | crinkle | twinned anticupola without `C1A1` and `C2A1` |
//! | `steffen_template` | assembly | tetrahedron and flap joined by two Bricard crinkles |
//! | `foxtrot_template` | assembly | pentagonal crinkle on a chain of three tetrahedra |

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::surgery::{glue_boundaries, replace_hinge_with_crinkles, CrinkleFit, HingeSystem};
use super::{make_cap, make_crinkle, twin, Cap, Crinkle, Twin, TwinInfo};
use crate::error::{Error, Result};
use crate::flexion::{Driver, FlexProblem};
use crate::geom::{closed_outward, convex_hull, edge_key, orient_faces, Edge, Point3, TriMesh};
use crate::symmetry::{SymmetricQuad, SymmetryKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Closed,
    Cap,
    Twin,
    Crinkle,
    Assembly,
}

/// One numeric parameter with its documented range.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub min: f64,
    pub max: f64,
    pub integer: bool,
    pub doc: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSpec {
    pub name: &'static str,
    pub kind: ModelKind,
    pub summary: &'static str,
    pub params: Vec<ParamSpec>,
}

pub type Params = BTreeMap<String, f64>;

/// A closed surface assembled from parts, with the pairs its crinkles keep at
/// fixed distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Assembly {
    pub mesh: TriMesh,
    pub phantoms: Vec<Edge>,
    pub driver: Driver,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Closed(TriMesh),
    Cap(Cap),
    Twin(Twin),
    Crinkle(Crinkle),
    Assembly(Assembly),
}

/// How a model is flexed by default.
#[derive(Clone, Debug, PartialEq)]
pub struct FlexSetup {
    pub drivers: Vec<Driver>,
    /// Pairs held at fixed distance in addition to the edges.
    pub pinned: Vec<Edge>,
    /// Pairs whose distance is reported per frame.
    pub monitored: Vec<Edge>,
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Closed(_) => ModelKind::Closed,
            Model::Cap(_) => ModelKind::Cap,
            Model::Twin(_) => ModelKind::Twin,
            Model::Crinkle(_) => ModelKind::Crinkle,
            Model::Assembly(_) => ModelKind::Assembly,
        }
    }

    pub fn mesh(&self) -> &TriMesh {
        match self {
            Model::Closed(m) => m,
            Model::Cap(c) => &c.mesh,
            Model::Twin(t) => &t.mesh,
            Model::Crinkle(c) => &c.mesh,
            Model::Assembly(a) => &a.mesh,
        }
    }

    pub fn twin_info(&self) -> Option<&TwinInfo> {
        match self {
            Model::Twin(t) => Some(&t.info),
            _ => None,
        }
    }

    pub fn phantoms(&self) -> Vec<Edge> {
        match self {
            Model::Crinkle(c) => c.phantom_pairs.clone(),
            Model::Assembly(a) => a.phantoms.clone(),
            _ => Vec::new(),
        }
    }

    /// Flex problem for the default setup, or with `drivers` replacing the
    /// default drivers. `None` for rigid models without explicit drivers.
    pub fn flex_problem(&self, drivers: Option<Vec<Driver>>) -> Result<Option<FlexProblem>> {
        let setup = self.flex_setup();
        let (drivers, pinned, monitored) = match (drivers, setup) {
            (Some(d), Some(s)) => (d, s.pinned, s.monitored),
            (Some(d), None) => (d, Vec::new(), Vec::new()),
            (None, Some(s)) => (s.drivers, s.pinned, s.monitored),
            (None, None) => return Ok(None),
        };
        let mut p = FlexProblem::new(self.mesh(), drivers)?
            .with_pinned(&pinned)?
            .with_monitored(monitored);
        if let Some(t) = self.twin_info() {
            p = p.with_twin(t.clone());
        }
        Ok(Some(p))
    }

    /// Default driver, pins and monitored pairs; `None` for rigid models.
    pub fn flex_setup(&self) -> Option<FlexSetup> {
        let m = self.mesh();
        match self {
            Model::Twin(t) => {
                let (a, b) = t.info.diagonal().ok()?;
                Some(FlexSetup {
                    drivers: vec![Driver::distance(a, b)],
                    pinned: Vec::new(),
                    monitored: Vec::new(),
                })
            }
            Model::Crinkle(c) => {
                let (a, b) = ["A", "A1"]
                    .iter()
                    .zip(["A'", "A3"])
                    .find_map(|(x, y)| m.label(x).zip(m.label(y)))?;
                // with several phantom pairs the crinkle has spare freedoms;
                // holding all of them leaves the motion of the parent twin
                let pinned = if c.phantom_pairs.len() > 1 {
                    c.phantom_pairs.clone()
                } else {
                    Vec::new()
                };
                Some(FlexSetup {
                    drivers: vec![Driver::distance(a, b)],
                    pinned,
                    monitored: c.phantom_pairs.clone(),
                })
            }
            Model::Assembly(a) => Some(FlexSetup {
                drivers: vec![a.driver],
                pinned: Vec::new(),
                monitored: a.phantoms.clone(),
            }),
            Model::Cap(c) => {
                let b = &c.boundary;
                (b.len() == 4).then(|| FlexSetup {
                    drivers: vec![Driver::distance(b[0], b[2])],
                    pinned: Vec::new(),
                    monitored: Vec::new(),
                })
            }
            Model::Closed(_) => None,
        }
    }
}

const fn param(name: &'static str, default: f64, min: f64, max: f64, doc: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        default,
        min,
        max,
        integer: false,
        doc,
    }
}

const fn int_param(name: &'static str, default: f64, min: f64, max: f64, doc: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        default,
        min,
        max,
        integer: true,
        doc,
    }
}

fn point_params(prefix: &'static [&'static str; 3], default: [f64; 3], lim: f64) -> Vec<ParamSpec> {
    (0..3)
        .map(|i| param(prefix[i], default[i], -lim, lim, "vertex coordinate"))
        .collect()
}

fn bricard1_params() -> Vec<ParamSpec> {
    let mut v = point_params(&["a_x", "a_y", "a_z"], [2.0, -1.0, -1.0], 5.0);
    v.extend(point_params(&["b_x", "b_y", "b_z"], [1.0, 1.5, 1.5], 5.0));
    v.extend(point_params(&["c_x", "c_y", "c_z"], [0.7, 0.4, 3.0], 5.0));
    v
}

fn bricard2_params() -> Vec<ParamSpec> {
    let mut v = vec![
        param("a_x", 2.0, 0.1, 5.0, "A = (a_x, 0, 0)"),
        param("a2_x", -2.0, -5.0, -0.1, "A' = (a2_x, 0, 0)"),
    ];
    v.extend(point_params(&["b_x", "b_y", "b_z"], [1.8, -1.5, 1.5], 5.0));
    v.extend(point_params(&["e_x", "e_y", "e_z"], [0.3, 1.2, 0.9], 5.0));
    v
}

fn peak_params(b1: [f64; 3], b2: [f64; 3]) -> Vec<ParamSpec> {
    let mut v = point_params(&["b1_x", "b1_y", "b1_z"], b1, 3.0);
    v.extend(point_params(&["b2_x", "b2_y", "b2_z"], b2, 3.0));
    v
}

fn rhombus_peak_params(b1: [f64; 3], b2: [f64; 3]) -> Vec<ParamSpec> {
    let mut v = vec![param("base_w", 1.0, 0.1, 3.0, "A2 = (-base_w, 0, 0), A4 = (base_w, 0, 0)")];
    v.extend(peak_params(b1, b2));
    v
}

/// Named parameter sets besides the defaults.
pub fn presets(model: &str) -> Vec<(&'static str, Params)> {
    match model {
        "new_crinkle" | "star_dodecahedron" => vec![("flat_laying", flat_laying_params())],
        _ => Vec::new(),
    }
}

pub fn preset(model: &str, name: &str) -> Result<Params> {
    presets(model)
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, p)| p)
        .ok_or_else(|| Error::InvalidParam {
            name: "preset".into(),
            reason: format!("`{model}` has no preset `{name}`"),
        })
}

/// Peaks and rhombus whose edge lengths are those of the crinkle net that
/// lies flat: rhombus side 3.6, `|B A1| = |B A3| = 7`, `|B1 A2| = |B2 A4| = 5.2`,
/// scaled so that `|A1 A3| = 2`. With `B2 = -B1` the edge `B1 B2` has length
/// `2 sqrt(40) / 3`.
fn flat_laying_params() -> Params {
    let k: f64 = 1.0 / 3.0;
    let (side, l, m) = (3.6 * k, 7.0 * k, 5.2 * k);
    let w = (side * side - 1.0).sqrt();
    let x = (m * m - l * l + 1.0 - w * w) / (2.0 * w);
    let y = (l * l - 1.0 - x * x).sqrt();
    [
        ("base_w", w),
        ("b1_x", x),
        ("b1_y", y),
        ("b1_z", 0.0),
        ("b2_x", -x),
        ("b2_y", -y),
        ("b2_z", 0.0),
    ]
    .into_iter()
    .map(|(n, v)| (n.to_string(), v))
    .collect()
}

/// Spanning tree of the new crinkle that lays it out as two fans hinged on
/// the crease `B1B2`: `(root, [(parent, child), ...])`.
pub fn crinkle_fan_tree(mesh: &TriMesh) -> Result<(usize, Vec<(usize, usize)>)> {
    let l = |s: &str| {
        mesh.label(s)
            .ok_or_else(|| Error::Topology(format!("mesh has no vertex labelled {s}")))
    };
    let (a1, a2, a3, a4, b1, b2) = (l("A1")?, l("A2")?, l("A3")?, l("A4")?, l("B1")?, l("B2")?);
    let faces = mesh.faces();
    let missing = || Error::Topology("mesh is not the new crinkle".into());
    let across = |a: usize, b: usize, x: usize| {
        mesh.edge_faces(a, b)
            .iter()
            .copied()
            .find(|&f| faces[f].contains(&x))
            .ok_or_else(missing)
    };
    let other = |f: usize, a: usize, b: usize| {
        mesh.edge_faces(a, b)
            .iter()
            .copied()
            .find(|&g| g != f)
            .ok_or_else(missing)
    };
    let f1 = across(b1, b2, a1)?;
    let f2 = across(b1, b2, a3)?;
    let (f3, f5) = (other(f1, a1, b1)?, other(f1, a1, b2)?);
    let (f4, f6) = (other(f2, a3, b1)?, other(f2, a3, b2)?);
    let tree = vec![
        (f1, f2),
        (f1, f3),
        (f1, f5),
        (f2, f4),
        (f2, f6),
        (f3, other(f3, a1, a2)?),
        (f5, other(f5, a1, a4)?),
        (f4, other(f4, a2, a3)?),
        (f6, other(f6, a3, a4)?),
    ];
    Ok((f1, tree))
}

const TWINNED_PEAKS: ([f64; 3], [f64; 3]) = ([-0.3, 1.0, -0.5], [0.3, 1.1, -0.5]);
// B2 sits slightly off -B1: at the exactly opposite position |A1A3| is
// stationary along the flex and cannot drive it
const STAR_PEAKS: ([f64; 3], [f64; 3]) = ([-1.3, 1.0, 0.0], [1.3, -0.9, 0.0]);
const PENTAGONAL_PEAKS: ([f64; 3], [f64; 3]) = ([0.2, 0.7, -0.4], [0.2, 0.7, 0.4]);

fn foxtrot_params() -> Vec<ParamSpec> {
    let mut v = peak_params(PENTAGONAL_PEAKS.0, PENTAGONAL_PEAKS.1);
    v.extend(point_params(&["x1_x", "x1_y", "x1_z"], [0.5, 0.7, -1.0], 3.0));
    v.extend(point_params(&["x2_x", "x2_y", "x2_z"], [1.0, 1.3, 1.0], 3.0));
    v.extend(point_params(&["x3_x", "x3_y", "x3_z"], [0.5, 0.7, 0.0], 3.0));
    v.push(int_param("crinkles", 1.0, 0.0, 1.0, "1 replaces the hinges A1C1 and A1C2 by Bricard crinkles"));
    v.push(param("fit1", 0.4, -3.2, 3.2, "axis angle of the crinkle on A1C1"));
    v.push(param("fit2", -0.4, -3.2, 3.2, "axis angle of the crinkle on A1C2"));
    v
}

fn steffen_params() -> Vec<ParamSpec> {
    // defaults found by scanning; the construction frame is embedded
    let mut v = vec![param("hinge", 1.23, 0.2, 5.0, "hinge length |PQ|")];
    v.extend(point_params(&["s_x", "s_y", "s_z"], [-0.61, 1.91, 0.51], 5.0));
    v.extend(point_params(&["t_x", "t_y", "t_z"], [1.63, -0.84, -0.66], 5.0));
    v.extend(point_params(&["r_x", "r_y", "r_z"], [-0.27, -1.67, -0.69], 5.0));
    v.push(param("fit1", 2.08, -3.2, 3.2, "axis angle of the first crinkle"));
    v.push(param("fit2", -1.86, -3.2, 3.2, "axis angle of the second crinkle"));
    v
}

/// Every model with its parameter schema.
pub fn models() -> Vec<ModelSpec> {
    use ModelKind::*;
    vec![
        ModelSpec {
            name: "tetrahedron",
            kind: Closed,
            summary: "irregular tetrahedron",
            params: vec![param("scale", 1.0, 0.01, 100.0, "uniform scale")],
        },
        ModelSpec {
            name: "octahedron",
            kind: Closed,
            summary: "convex, slightly irregular octahedron",
            params: vec![param("scale", 1.0, 0.01, 100.0, "uniform scale")],
        },
        ModelSpec {
            name: "cube",
            kind: Closed,
            summary: "triangulated cube",
            params: vec![param("side", 1.0, 0.01, 100.0, "edge length")],
        },
        ModelSpec {
            name: "convex_hull",
            kind: Closed,
            summary: "triangulated hull of random points on the unit sphere",
            params: vec![
                int_param("n", 10.0, 4.0, 40.0, "number of points"),
                int_param("seed", 0.0, 0.0, 1e9, "random seed"),
            ],
        },
        ModelSpec {
            name: "pyramid",
            kind: Closed,
            summary: "pyramid with apex C over the line-symmetric quadrilateral A B A' B'",
            params: bricard1_params(),
        },
        ModelSpec {
            name: "kite_pyramid",
            kind: Closed,
            summary: "pyramid with apex E over the plane-symmetric kite A B A' B'",
            params: bricard2_params(),
        },
        ModelSpec {
            name: "bricard1",
            kind: Twin,
            summary: "Bricard octahedron of the first type (half-turn twin of the pyramid)",
            params: bricard1_params(),
        },
        ModelSpec {
            name: "bricard2",
            kind: Twin,
            summary: "Bricard octahedron of the second type (mirror twin of the kite pyramid)",
            params: bricard2_params(),
        },
        ModelSpec {
            name: "bricard_crinkle",
            kind: Crinkle,
            summary: "bricard1 without the faces A B C' and A B' C'; phantom pair A C'",
            params: bricard1_params(),
        },
        ModelSpec {
            name: "digonal_anticupola",
            kind: Closed,
            summary: "digonal anticupola on the square A1 A2 A3 A4, base split by A1 A3",
            params: rhombus_peak_params(TWINNED_PEAKS.0, TWINNED_PEAKS.1),
        },
        ModelSpec {
            name: "twinned_anticupola",
            kind: Twin,
            summary: "flexible triangulated dodecahedron twinned from the digonal anticupola",
            params: rhombus_peak_params(TWINNED_PEAKS.0, TWINNED_PEAKS.1),
        },
        ModelSpec {
            name: "star_dodecahedron",
            kind: Twin,
            summary: "twinned anticupola whose peaks lie on opposite sides of the base",
            params: rhombus_peak_params(STAR_PEAKS.0, STAR_PEAKS.1),
        },
        ModelSpec {
            name: "new_crinkle",
            kind: Crinkle,
            summary: "star dodecahedron without the rotated edge C1 C2",
            params: rhombus_peak_params(STAR_PEAKS.0, STAR_PEAKS.1),
        },
        ModelSpec {
            name: "pentagonal_crinkle",
            kind: Crinkle,
            summary: "twinned anticupola without C1 A1 and C2 A1; two phantom pairs",
            params: peak_params(PENTAGONAL_PEAKS.0, PENTAGONAL_PEAKS.1),
        },
        ModelSpec {
            name: "steffen_template",
            kind: Assembly,
            summary: "tetrahedron and a doubled triangle on a common hinge, joined by two Bricard crinkles",
            params: steffen_params(),
        },
        ModelSpec {
            name: "foxtrot_template",
            kind: Assembly,
            summary: "pentagonal crinkle glued onto a chain of three open tetrahedra",
            params: foxtrot_params(),
        },
    ]
}

pub fn spec_of(name: &str) -> Result<ModelSpec> {
    models()
        .into_iter()
        .find(|m| m.name == name)
        .ok_or_else(|| Error::UnknownModel(name.to_string()))
}

/// Fills defaults and checks names, ranges and integrality.
pub fn resolve_params(spec: &ModelSpec, given: &Params) -> Result<Params> {
    for k in given.keys() {
        if !spec.params.iter().any(|p| p.name == k) {
            return Err(Error::InvalidParam {
                name: k.clone(),
                reason: format!("`{}` has no such parameter", spec.name),
            });
        }
    }
    let mut out = Params::new();
    for p in &spec.params {
        let v = given.get(p.name).copied().unwrap_or(p.default);
        if !v.is_finite() || v < p.min || v > p.max {
            return Err(Error::InvalidParam {
                name: p.name.into(),
                reason: format!("{v} is outside [{}, {}]", p.min, p.max),
            });
        }
        if p.integer && v.fract() != 0.0 {
            return Err(Error::InvalidParam {
                name: p.name.into(),
                reason: format!("{v} is not an integer"),
            });
        }
        out.insert(p.name.to_string(), v);
    }
    Ok(out)
}

pub fn build_default(name: &str) -> Result<Model> {
    build(name, &Params::new())
}

/// Builds a named model.
pub fn build(name: &str, given: &Params) -> Result<Model> {
    let spec = spec_of(name)?;
    let p = resolve_params(&spec, given)?;
    let pt = |a: &str, b: &str, c: &str| Point3::new(p[a], p[b], p[c]);
    match name {
        "tetrahedron" => Ok(Model::Closed(tetrahedron(p["scale"])?)),
        "octahedron" => Ok(Model::Closed(octahedron(p["scale"])?)),
        "cube" => Ok(Model::Closed(cube(p["side"])?)),
        "convex_hull" => Ok(Model::Closed(random_hull(p["n"] as usize, p["seed"] as u64)?)),
        "pyramid" | "bricard1" | "bricard_crinkle" => {
            let a = pt("a_x", "a_y", "a_z");
            let b = pt("b_x", "b_y", "b_z");
            let c = pt("c_x", "c_y", "c_z");
            let half = |q: Point3| Point3::new(-q.x, -q.y, q.z);
            let (seed, quad) = pyramid([a, b, half(a), half(b)], c, SymmetryKind::TypeI)?;
            if name == "pyramid" {
                return Ok(Model::Closed(seed));
            }
            let t = twin(&make_cap(&seed, &quad)?, SymmetryKind::TypeI)?;
            if name == "bricard1" {
                return Ok(Model::Twin(t));
            }
            let (a, c2) = (t.mesh.label("A").unwrap(), t.mesh.label("C'").unwrap());
            Ok(Model::Crinkle(make_crinkle(&t.mesh, &[(a, c2)])?))
        }
        "kite_pyramid" | "bricard2" => {
            let a = Point3::new(p["a_x"], 0.0, 0.0);
            let a2 = Point3::new(p["a2_x"], 0.0, 0.0);
            let b = pt("b_x", "b_y", "b_z");
            let b2 = Point3::new(b.x, b.y, -b.z);
            let (seed, quad) = pyramid([a, b, a2, b2], pt("e_x", "e_y", "e_z"), SymmetryKind::TypeII)?;
            let seed = relabel(&seed, &[("C", "E")])?;
            if name == "kite_pyramid" {
                return Ok(Model::Closed(seed));
            }
            Ok(Model::Twin(twin(&make_cap(&seed, &quad)?, SymmetryKind::TypeII)?))
        }
        "digonal_anticupola" | "twinned_anticupola" | "star_dodecahedron" | "new_crinkle"
        | "pentagonal_crinkle" => {
            let b1 = pt("b1_x", "b1_y", "b1_z");
            let b2 = pt("b2_x", "b2_y", "b2_z");
            let square = if name == "pentagonal_crinkle" {
                PENTAGONAL_SQUARE
            } else {
                let w = p["base_w"];
                let mut q = TWINNED_SQUARE;
                q[1][0] = -w;
                q[3][0] = w;
                q
            };
            let (seed, quad) = anticupola(square, b1, b2)?;
            if name == "digonal_anticupola" {
                return Ok(Model::Closed(seed));
            }
            let t = anticupola_twin(&seed, &quad)?;
            let l = |s: &str| t.mesh.label(s).unwrap();
            match name {
                "new_crinkle" => Ok(Model::Crinkle(make_crinkle(&t.mesh, &[(l("C1"), l("C2"))])?)),
                "pentagonal_crinkle" => Ok(Model::Crinkle(make_crinkle(
                    &t.mesh,
                    &[(l("C1"), l("A1")), (l("C2"), l("A1"))],
                )?)),
                _ => Ok(Model::Twin(t)),
            }
        }
        "steffen_template" => steffen(&p).map(Model::Assembly),
        "foxtrot_template" => foxtrot(&p).map(Model::Assembly),
        _ => Err(Error::UnknownModel(name.to_string())),
    }
}

fn relabel(mesh: &TriMesh, renames: &[(&str, &str)]) -> Result<TriMesh> {
    let labels: Vec<(String, usize)> = mesh
        .labels()
        .iter()
        .map(|(k, &v)| {
            let k = renames
                .iter()
                .find(|(from, _)| from == k)
                .map_or(k.clone(), |(_, to)| to.to_string());
            (k, v)
        })
        .collect();
    TriMesh::new(mesh.vertices().to_vec(), mesh.faces().to_vec())?.with_labels(labels)
}

fn scaled(points: &[[f64; 3]], s: f64) -> Vec<Point3> {
    points
        .iter()
        .map(|q| Point3::new(q[0] * s, q[1] * s, q[2] * s))
        .collect()
}

fn tetrahedron(s: f64) -> Result<TriMesh> {
    let v = scaled(&[[0., 0., 0.], [1.1, 0., 0.], [0.3, 0.9, 0.], [0.35, 0.3, 1.2]], s);
    closed_outward(v, &[[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
}

fn octahedron(s: f64) -> Result<TriMesh> {
    let v = scaled(
        &[
            [1.0, 0.05, 0.02],
            [-1.1, -0.03, 0.04],
            [0.02, 0.95, -0.05],
            [-0.04, -1.05, 0.03],
            [0.05, 0.02, 1.1],
            [-0.02, 0.04, -0.9],
        ],
        s,
    );
    let f = [
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    closed_outward(v, &f)
}

fn cube(side: f64) -> Result<TriMesh> {
    let mut v = Vec::new();
    for i in 0..8 {
        let bit = |k: usize| if i >> k & 1 == 1 { side } else { 0.0 };
        v.push(Point3::new(bit(0), bit(1), bit(2)));
    }
    let quads = [
        [0, 1, 3, 2],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 3, 7, 6],
        [0, 2, 6, 4],
        [1, 3, 7, 5],
    ];
    let faces: Vec<[usize; 3]> = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    closed_outward(v, &faces)
}

/// Hull of `n` seeded random points on the unit sphere.
pub fn random_hull(n: usize, seed: u64) -> Result<TriMesh> {
    if n < 4 {
        return Err(Error::InvalidParam {
            name: "n".into(),
            reason: "need at least 4 points".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Point3> = Vec::with_capacity(n);
    while pts.len() < n {
        let q = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let r = q.coords.norm();
        if r > 0.2 && r <= 1.0 {
            let q = Point3::from(q.coords / r);
            if pts.iter().all(|o| (o - q).norm() > 0.05) {
                pts.push(q);
            }
        }
    }
    convex_hull(&pts)
}

/// Pyramid with apex `c` over `A B A' B'`, the base split by `AA'`.
fn pyramid(q: [Point3; 4], c: Point3, kind: SymmetryKind) -> Result<(TriMesh, SymmetricQuad)> {
    let mut v = q.to_vec();
    v.push(c);
    let faces = [[0, 1, 2], [2, 3, 0], [0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
    let mesh = closed_outward(v, &faces)?.with_labels([("A", 0), ("B", 1), ("A'", 2), ("B'", 3), ("C", 4)])?;
    check_nondegenerate(&mesh)?;
    Ok((
        mesh,
        SymmetricQuad {
            a: 0,
            b: 1,
            a_prime: 2,
            b_prime: 3,
            kinds: vec![kind],
        },
    ))
}

fn check_nondegenerate(mesh: &TriMesh) -> Result<()> {
    let diam = mesh.bbox_diameter();
    for f in 0..mesh.faces().len() {
        if mesh.face_area(f) <= 1e-9 * diam * diam {
            return Err(Error::Degenerate(format!("face {f} has no area")));
        }
    }
    Ok(())
}

/// Square `A1 A2 A3 A4` in the plane `y = 0`, half-turn symmetric about the `y` axis.
const TWINNED_SQUARE: [[f64; 3]; 4] = [[0., 0., -1.], [-1., 0., 0.], [0., 0., 1.], [1., 0., 0.]];
const PENTAGONAL_SQUARE: [[f64; 3]; 4] = [[1., 0., 0.], [0., 0., -1.], [-1., 0., 0.], [0., 0., 1.]];

/// Digonal anticupola: `B1` joins `A1 A2 A3`, `B2` joins `A3 A4 A1`, base split by `A1 A3`.
fn anticupola(square: [[f64; 3]; 4], b1: Point3, b2: Point3) -> Result<(TriMesh, SymmetricQuad)> {
    let mut v: Vec<Point3> = square.iter().map(|q| Point3::new(q[0], q[1], q[2])).collect();
    v.push(b1);
    v.push(b2);
    let faces = [
        [0, 1, 4],
        [1, 2, 4],
        [2, 3, 5],
        [3, 0, 5],
        [4, 5, 0],
        [4, 5, 2],
        [0, 1, 2],
        [2, 3, 0],
    ];
    let mesh = closed_outward(v, &faces)?
        .with_labels([("A1", 0), ("A2", 1), ("A3", 2), ("A4", 3), ("B1", 4), ("B2", 5)])?;
    check_nondegenerate(&mesh)?;
    Ok((
        mesh,
        SymmetricQuad {
            a: 0,
            b: 1,
            a_prime: 2,
            b_prime: 3,
            kinds: vec![SymmetryKind::TypeI],
        },
    ))
}

/// Twins the anticupola and names the images `C1 = B2'`, `C2 = B1'`.
fn anticupola_twin(seed: &TriMesh, quad: &SymmetricQuad) -> Result<Twin> {
    let t = twin(&make_cap(seed, quad)?, SymmetryKind::TypeI)?;
    let mesh = relabel(&t.mesh, &[("B2'", "C1"), ("B1'", "C2")])?;
    Ok(Twin { mesh, info: t.info })
}

fn steffen(p: &Params) -> Result<Assembly> {
    let h = p["hinge"];
    let q = |a: &str, b: &str, c: &str| Point3::new(p[a], p[b], p[c]);
    let v = vec![
        Point3::new(0.0, 0.0, -h / 2.0),
        Point3::new(0.0, 0.0, h / 2.0),
        q("s_x", "s_y", "s_z"),
        q("t_x", "t_y", "t_z"),
        q("r_x", "r_y", "r_z"),
    ];
    let tet = closed_outward(v[..4].to_vec(), &[[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])?;
    check_nondegenerate(&tet)?;
    let mut faces = tet.faces().to_vec();
    faces.push([0, 1, 4]);
    faces.push([1, 0, 4]);
    let system = HingeSystem::new(v, faces)?.with_labels([("P", 0), ("Q", 1), ("S", 2), ("T", 3), ("R", 4)]);
    let fits = [
        CrinkleFit { axis_angle: p["fit1"] },
        CrinkleFit { axis_angle: p["fit2"] },
    ];
    let r = replace_hinge_with_crinkles(&system, (0, 1), &fits)?;
    Ok(Assembly {
        mesh: r.mesh,
        phantoms: vec![edge_key(0, 1)],
        driver: Driver::distance(4, 2),
    })
}

fn foxtrot(p: &Params) -> Result<Assembly> {
    let b1 = Point3::new(p["b1_x"], p["b1_y"], p["b1_z"]);
    let b2 = Point3::new(p["b2_x"], p["b2_y"], p["b2_z"]);
    let (seed, quad) = anticupola(PENTAGONAL_SQUARE, b1, b2)?;
    let t = anticupola_twin(&seed, &quad)?;
    let l = |s: &str| t.mesh.label(s).unwrap();
    let (a1, a2, a4, c1, c2) = (l("A1"), l("A2"), l("A4"), l("C1"), l("C2"));
    let crinkle = make_crinkle(&t.mesh, &[(c1, a1), (c2, a1)])?;

    // chain of three open tetrahedra over the removed triangles
    let q = |a: &str, b: &str, c: &str| Point3::new(p[a], p[b], p[c]);
    let tv = t.mesh.vertices();
    let chain_v = vec![
        tv[a2],
        tv[a1],
        tv[c1],
        tv[c2],
        tv[a4],
        q("x1_x", "x1_y", "x1_z"),
        q("x2_x", "x2_y", "x2_z"),
        q("x3_x", "x3_y", "x3_z"),
    ];
    let chain_f = orient_faces(&[
        [0, 5, 1],
        [0, 5, 2],
        [1, 5, 2],
        [1, 2, 6],
        [1, 3, 6],
        [2, 3, 6],
        [1, 3, 7],
        [4, 3, 7],
        [4, 1, 7],
    ])?;
    let mut chain = TriMesh::new(chain_v, chain_f)?.with_labels([("X1", 5), ("X2", 6), ("X3", 7)])?;
    let pairs = [(a2, 0), (a1, 1), (c1, 2), (c2, 3), (a4, 4)];
    let chain_runs_with_crinkle = crinkle
        .mesh
        .boundary_half_edges()
        .iter()
        .any(|&(u, v)| {
            let map = |x: usize| pairs.iter().find(|p| p.0 == x).map(|p| p.1);
            match (map(u), map(v)) {
                (Some(cu), Some(cv)) => chain.boundary_half_edges().contains(&(cu, cv)),
                _ => false,
            }
        });
    if chain_runs_with_crinkle {
        chain = chain.flipped();
    }
    let glued = glue_boundaries(&crinkle.mesh, &chain, &pairs, 1e-9)?;
    let mesh = glued.mesh;
    check_nondegenerate(&mesh)?;
    let driver = Driver::distance(a1, l("A3"));
    if p["crinkles"] == 0.0 {
        return Ok(Assembly {
            mesh,
            phantoms: vec![edge_key(c1, a1), edge_key(c2, a1)],
            driver,
        });
    }
    let system = HingeSystem::from_mesh(&mesh);
    let r1 = replace_hinge_with_crinkles(&system, (a1, c1), &[CrinkleFit { axis_angle: p["fit1"] }])?;
    let system = HingeSystem::from_mesh(&r1.mesh);
    let r2 = replace_hinge_with_crinkles(&system, (a1, c2), &[CrinkleFit { axis_angle: p["fit2"] }])?;
    Ok(Assembly {
        mesh: r2.mesh,
        phantoms: vec![edge_key(c1, a1), edge_key(c2, a1)],
        driver,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::mesh_stats;

    #[test]
    fn every_default_builds() {
        for spec in models() {
            let m = build_default(spec.name).unwrap_or_else(|e| panic!("{}: {e}", spec.name));
            assert_eq!(m.kind(), spec.kind, "{}", spec.name);
        }
    }

    #[test]
    fn counts_of_named_models() {
        let counts = |name: &str| {
            let s = mesh_stats(build_default(name).unwrap().mesh());
            (s.v, s.e, s.f)
        };
        assert_eq!(counts("bricard1"), (6, 12, 8));
        assert_eq!(counts("bricard2"), (6, 12, 8));
        assert_eq!(counts("twinned_anticupola"), (8, 18, 12));
        assert_eq!(counts("star_dodecahedron"), (8, 18, 12));
        assert_eq!(counts("bricard_crinkle"), (6, 11, 6));
        assert_eq!(counts("new_crinkle"), (8, 17, 10));
        assert_eq!(counts("pentagonal_crinkle"), (8, 16, 9));
        assert_eq!(counts("steffen_template"), (9, 21, 14));
    }

    #[test]
    fn anticupola_images_are_named_after_the_figures() {
        let m = build_default("twinned_anticupola").unwrap();
        let mesh = m.mesh();
        let c1 = mesh.vertices()[mesh.label("C1").unwrap()];
        let c2 = mesh.vertices()[mesh.label("C2").unwrap()];
        assert!((c1 - Point3::new(-0.3, 1.1, 0.5)).norm() < 1e-12);
        assert!((c2 - Point3::new(0.3, 1.0, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn star_peaks_straddle_the_base() {
        let m = build_default("star_dodecahedron").unwrap();
        let mesh = m.mesh();
        let y = |s: &str| mesh.vertices()[mesh.label(s).unwrap()].y;
        assert!(y("B1") * y("B2") < 0.0);
    }

    #[test]
    fn pentagonal_crinkle_has_a_pentagon() {
        let Model::Crinkle(c) = build_default("pentagonal_crinkle").unwrap() else {
            panic!()
        };
        assert_eq!(c.boundary.len(), 5);
        assert_eq!(c.phantom_pairs.len(), 2);
    }

    #[test]
    fn foxtrot_skeleton_counts() {
        let mut p = Params::new();
        p.insert("crinkles".into(), 0.0);
        let s = mesh_stats(build("foxtrot_template", &p).unwrap().mesh());
        assert_eq!((s.v, s.e, s.f), (11, 27, 18));
        assert!(s.is_triangulated_sphere);
        let s = mesh_stats(build_default("foxtrot_template").unwrap().mesh());
        assert!(s.is_triangulated_sphere);
        assert_eq!(s.v, 15);
    }

    #[test]
    fn params_are_validated() {
        let mut p = Params::new();
        p.insert("n".into(), 3.5);
        assert!(matches!(build("convex_hull", &p), Err(Error::InvalidParam { .. })));
        p.insert("n".into(), 100.0);
        assert!(build("convex_hull", &p).is_err());
        let mut q = Params::new();
        q.insert("nope".into(), 1.0);
        assert!(build("cube", &q).is_err());
        assert!(matches!(build_default("dodo"), Err(Error::UnknownModel(_))));
    }
}

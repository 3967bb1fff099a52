//! Finite flex tracing by Newton continuation on squared edge lengths.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{bbox_diameter, edge_key, signed_volume_of, Edge, Point3, TriMesh, Vec3};
use crate::rigidity::{analyze, Framework, DEFAULT_RANK_TOL};
use crate::symmetry::isometry_of;
use crate::twinning::{Twin, TwinInfo};

/// Newton stops once every scaled residual is below this.
pub const NEWTON_TOL: f64 = 1e-12;
pub const MAX_NEWTON_ITERS: usize = 50;
/// Relative singular value below which the Jacobian counts as rank deficient.
const JACOBIAN_RANK_TOL: f64 = 1e-10;
/// Relative minimum singular value that flags a frame as near a branch point.
const BRANCH_WARN_TOL: f64 = 1e-8;

/// The scalar a trace prescribes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Driver {
    /// Distance between two vertices.
    Distance { pair: [usize; 2] },
    /// Rotation angle in `[0, 2π)` about the directed hinge `a → b`, measured from
    /// the wing of the face containing `a → b` to the wing of the face containing `b → a`.
    Dihedral { hinge: [usize; 2] },
}

impl Driver {
    pub fn distance(a: usize, b: usize) -> Self {
        Driver::Distance { pair: [a, b] }
    }

    pub fn dihedral(a: usize, b: usize) -> Self {
        Driver::Dihedral { hinge: [a, b] }
    }

    /// Parses `A,A'`, `AA'`, `0,2` or `dihedral:A,C'` against the mesh labels.
    pub fn parse(spec: &str, mesh: &TriMesh) -> Result<Self> {
        let (dihedral, body) = match spec.split_once(':') {
            Some(("dihedral", rest)) => (true, rest),
            Some(("distance", rest)) => (false, rest),
            _ => (false, spec),
        };
        let lookup = |s: &str| -> Option<usize> {
            let s = s.trim();
            mesh.label(s).or_else(|| s.parse::<usize>().ok())
        };
        let pair = if let Some((a, b)) = body.split_once(',') {
            lookup(a).zip(lookup(b))
        } else {
            (1..body.len())
                .filter(|&i| body.is_char_boundary(i))
                .filter_map(|i| {
                    let (a, b) = body.split_at(i);
                    mesh.label(a).zip(mesh.label(b))
                })
                .next()
        };
        let (a, b) = pair.ok_or_else(|| Error::InvalidParam {
            name: "driver".into(),
            reason: format!("cannot resolve `{spec}` to a vertex pair"),
        })?;
        Ok(if dihedral {
            Driver::dihedral(a, b)
        } else {
            Driver::distance(a, b)
        })
    }
}

impl fmt::Display for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Driver::Distance { pair } => write!(f, "|{}-{}|", pair[0], pair[1]),
            Driver::Dihedral { hinge } => write!(f, "dihedral({}-{})", hinge[0], hinge[1]),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Resolved {
    Distance(usize, usize),
    Dihedral { a: usize, b: usize, c: usize, d: usize },
}

/// Wing rotation angle about `a → b` from `c` to `d`, with its gradient.
fn dihedral_and_gradient(p: &[Point3], a: usize, b: usize, c: usize, d: usize) -> (f64, [Vec3; 4]) {
    let axis = p[b] - p[a];
    let len = axis.norm();
    let e = axis / len;
    let (rc, rd) = (p[c] - p[a], p[d] - p[a]);
    let (sc, sd) = (rc.dot(&e), rd.dot(&e));
    let m1 = rc - e * sc;
    let m2 = rd - e * sd;
    let mut theta = e.dot(&m1.cross(&m2)).atan2(m1.dot(&m2));
    if theta < 0.0 {
        theta += std::f64::consts::TAU;
    }
    let gc = -e.cross(&m1) / m1.norm_squared();
    let gd = e.cross(&m2) / m2.norm_squared();
    let (tc, td) = (sc / len, sd / len);
    let gb = -gc * tc - gd * td;
    let ga = -gc * (1.0 - tc) - gd * (1.0 - td);
    (theta, [ga, gb, gc, gd])
}

/// One fixed vertex, one vertex on a ray from it, one vertex in a plane through the ray.
#[derive(Clone, Debug, PartialEq)]
pub struct Gauge {
    pub origin: usize,
    pub ray: usize,
    pub plane: usize,
    p0: Point3,
    u1: Vec3,
    u2: Vec3,
}

impl Gauge {
    pub fn new(origin: usize, ray: usize, plane: usize, coords: &[Point3]) -> Result<Self> {
        let n = coords.len();
        if origin >= n || ray >= n || plane >= n {
            return Err(Error::InvalidParam {
                name: "gauge".into(),
                reason: "vertex index out of range".into(),
            });
        }
        let d = coords[ray] - coords[origin];
        let w = coords[plane] - coords[origin];
        let normal = d.cross(&w);
        if normal.norm() <= 1e-9 * d.norm() * w.norm() || d.norm() == 0.0 {
            return Err(Error::Degenerate("gauge vertices are collinear".into()));
        }
        let u1 = normal.normalize();
        let u2 = d.normalize().cross(&u1);
        Ok(Self {
            origin,
            ray,
            plane,
            p0: coords[origin],
            u1,
            u2,
        })
    }

    pub fn from_face(mesh: &TriMesh, face: usize, coords: &[Point3]) -> Result<Self> {
        let f = *mesh.faces().get(face).ok_or_else(|| Error::InvalidParam {
            name: "gauge".into(),
            reason: format!("no face {face}"),
        })?;
        Self::new(f[0], f[1], f[2], coords)
    }
}

/// Squared-length constraint system with drivers and a gauge.
#[derive(Clone, Debug)]
pub struct FlexProblem {
    mesh: TriMesh,
    bars: Vec<Edge>,
    bar_len2: Vec<f64>,
    pinned: Vec<(Edge, f64)>,
    drivers: Vec<Driver>,
    resolved: Vec<Resolved>,
    gauge: Gauge,
    scale2: f64,
    diameter: f64,
    twin: Option<TwinInfo>,
    monitored: Vec<Edge>,
}

impl FlexProblem {
    /// Targets are the mesh's current edge lengths; the gauge pins face 0.
    pub fn new(mesh: &TriMesh, drivers: Vec<Driver>) -> Result<Self> {
        if drivers.is_empty() {
            return Err(Error::InvalidParam {
                name: "driver".into(),
                reason: "at least one driver is required".into(),
            });
        }
        let p = mesh.vertices();
        let bars = mesh.edges();
        let bar_len2: Vec<f64> = bars.iter().map(|&(i, j)| (p[i] - p[j]).norm_squared()).collect();
        if bar_len2.is_empty() {
            return Err(Error::Topology("mesh has no edges".into()));
        }
        let scale2 = bar_len2.iter().sum::<f64>() / bar_len2.len() as f64;
        let mut resolved = Vec::new();
        for d in &drivers {
            resolved.push(resolve(mesh, d)?);
        }
        Ok(Self {
            gauge: Gauge::from_face(mesh, 0, p)?,
            mesh: mesh.clone(),
            bars,
            bar_len2,
            pinned: Vec::new(),
            drivers,
            resolved,
            scale2,
            diameter: bbox_diameter(p),
            twin: None,
            monitored: Vec::new(),
        })
    }

    /// Problem for a twin, driven by its removed diagonal.
    pub fn for_twin(twin: &Twin) -> Result<Self> {
        let (a, b) = twin.info.diagonal()?;
        Ok(Self::new(&twin.mesh, vec![Driver::distance(a, b)])?.with_twin(twin.info.clone()))
    }

    pub fn with_gauge(mut self, origin: usize, ray: usize, plane: usize) -> Result<Self> {
        self.gauge = Gauge::new(origin, ray, plane, self.mesh.vertices())?;
        Ok(self)
    }

    /// Holds the listed vertex pairs at their current distance.
    pub fn with_pinned(mut self, pairs: &[Edge]) -> Result<Self> {
        let p = self.mesh.vertices();
        for &(a, b) in pairs {
            if a >= p.len() || b >= p.len() || a == b {
                return Err(Error::InvalidParam {
                    name: "pinned".into(),
                    reason: format!("bad pair ({a}, {b})"),
                });
            }
            self.pinned.push((edge_key(a, b), (p[a] - p[b]).norm_squared()));
        }
        Ok(self)
    }

    pub fn with_twin(mut self, info: TwinInfo) -> Self {
        self.twin = Some(info);
        self
    }

    /// Vertex pairs whose distances are reported per frame.
    pub fn with_monitored(mut self, pairs: Vec<Edge>) -> Self {
        self.monitored = pairs;
        self
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn drivers(&self) -> &[Driver] {
        &self.drivers
    }

    pub fn gauge(&self) -> &Gauge {
        &self.gauge
    }

    pub fn twin(&self) -> Option<&TwinInfo> {
        self.twin.as_ref()
    }

    pub fn unknowns(&self) -> usize {
        3 * self.mesh.num_vertices()
    }

    /// `(length constraints, gauge constraints, drivers)`.
    pub fn equation_counts(&self) -> (usize, usize, usize) {
        (self.bars.len() + self.pinned.len(), 6, self.drivers.len())
    }

    fn num_rows(&self) -> usize {
        let (c, g, d) = self.equation_counts();
        c + g + d
    }

    pub fn driver_values(&self, coords: &[Point3]) -> Vec<f64> {
        self.resolved
            .iter()
            .map(|r| match *r {
                Resolved::Distance(a, b) => (coords[a] - coords[b]).norm(),
                Resolved::Dihedral { a, b, c, d } => dihedral_and_gradient(coords, a, b, c, d).0,
            })
            .collect()
    }

    /// Constant part of the residual for the given driver values.
    fn targets(&self, values: &[f64]) -> DVector<f64> {
        let mut t = DVector::zeros(self.num_rows());
        let mut row = 0;
        for &l2 in &self.bar_len2 {
            t[row] = l2 / self.scale2;
            row += 1;
        }
        for &(_, l2) in &self.pinned {
            t[row] = l2 / self.scale2;
            row += 1;
        }
        let g = &self.gauge;
        let s = self.scale2.sqrt();
        let o = g.p0.coords;
        let gauge_targets = [o.x, o.y, o.z, o.dot(&g.u1), o.dot(&g.u2), o.dot(&g.u1)];
        for v in gauge_targets {
            t[row] = v / s;
            row += 1;
        }
        for (r, &v) in self.resolved.iter().zip(values) {
            t[row] = match r {
                Resolved::Distance(..) => v * v / self.scale2,
                Resolved::Dihedral { .. } => v,
            };
            row += 1;
        }
        t
    }

    /// Evaluates the configuration part of the residual and its Jacobian.
    fn eval(&self, coords: &[Point3]) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.num_rows();
        let mut f = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, self.unknowns());
        let inv = 1.0 / self.scale2;
        let mut row = 0;
        let pairs = self
            .bars
            .iter()
            .copied()
            .chain(self.pinned.iter().map(|&(e, _)| e));
        for (i, j) in pairs {
            let d = coords[i] - coords[j];
            f[row] = d.norm_squared() * inv;
            for k in 0..3 {
                jac[(row, 3 * i + k)] = 2.0 * d[k] * inv;
                jac[(row, 3 * j + k)] = -2.0 * d[k] * inv;
            }
            row += 1;
        }
        let g = &self.gauge;
        let s = self.scale2.sqrt();
        let linear: [(usize, Vec3); 6] = [
            (g.origin, Vec3::x()),
            (g.origin, Vec3::y()),
            (g.origin, Vec3::z()),
            (g.ray, g.u1),
            (g.ray, g.u2),
            (g.plane, g.u1),
        ];
        for (v, dir) in linear {
            f[row] = coords[v].coords.dot(&dir) / s;
            for k in 0..3 {
                jac[(row, 3 * v + k)] = dir[k] / s;
            }
            row += 1;
        }
        for r in &self.resolved {
            match *r {
                Resolved::Distance(a, b) => {
                    let d = coords[a] - coords[b];
                    f[row] = d.norm_squared() * inv;
                    for k in 0..3 {
                        jac[(row, 3 * a + k)] += 2.0 * d[k] * inv;
                        jac[(row, 3 * b + k)] -= 2.0 * d[k] * inv;
                    }
                }
                Resolved::Dihedral { a, b, c, d } => {
                    let (theta, grads) = dihedral_and_gradient(coords, a, b, c, d);
                    f[row] = theta;
                    for (v, gv) in [a, b, c, d].into_iter().zip(grads) {
                        for k in 0..3 {
                            jac[(row, 3 * v + k)] += gv[k];
                        }
                    }
                }
            }
            row += 1;
        }
        (f, jac)
    }

    /// Unscaled Jacobian of the squared bar lengths (mesh edges then pinned pairs).
    pub fn length_jacobian(&self, coords: &[Point3]) -> DMatrix<f64> {
        let (_, jac) = self.eval(coords);
        let rows = self.bars.len() + self.pinned.len();
        jac.rows(0, rows) * self.scale2
    }

    pub fn max_edge_error(&self, coords: &[Point3]) -> f64 {
        self.bars
            .iter()
            .zip(&self.bar_len2)
            .map(|(&(i, j), &l2)| ((coords[i] - coords[j]).norm() / l2.sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn min_singular_value(&self, coords: &[Point3]) -> f64 {
        let (_, jac) = self.eval(coords);
        let sv = jac.singular_values();
        let n = self.unknowns();
        let mut v: Vec<f64> = sv.iter().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        if v.len() < n {
            0.0
        } else {
            v[n - 1]
        }
    }

    /// Per-frame invariants.
    pub fn diagnostics(&self, coords: &[Point3]) -> FrameDiag {
        let min_sv = self.min_singular_value(coords);
        let (_, jac) = self.eval(coords);
        let smax = jac.singular_values().max();
        FrameDiag {
            edge_err: self.max_edge_error(coords),
            volume: self
                .mesh
                .is_closed()
                .then(|| signed_volume_of(coords, self.mesh.faces())),
            sym_residual: self
                .twin
                .as_ref()
                .and_then(|t| equator_residual(coords, t).ok()),
            min_sv,
            phantoms: self
                .monitored
                .iter()
                .chain(self.pinned.iter().map(|(e, _)| e))
                .map(|&(a, b)| (coords[a] - coords[b]).norm())
                .collect(),
            warning: (min_sv < BRANCH_WARN_TOL * smax)
                .then(|| "constraint Jacobian is nearly singular (branch point)".to_string()),
        }
    }
}

fn resolve(mesh: &TriMesh, d: &Driver) -> Result<Resolved> {
    let n = mesh.num_vertices();
    let bad = |reason: String| Error::InvalidParam {
        name: "driver".into(),
        reason,
    };
    match *d {
        Driver::Distance { pair: [a, b] } => {
            if a >= n || b >= n || a == b {
                return Err(bad(format!("bad vertex pair ({a}, {b})")));
            }
            Ok(Resolved::Distance(a, b))
        }
        Driver::Dihedral { hinge: [a, b] } => {
            if a >= n || b >= n || a == b {
                return Err(bad(format!("bad hinge ({a}, {b})")));
            }
            let fs = mesh.edge_faces(a, b);
            if fs.len() != 2 {
                return Err(bad(format!("({a}, {b}) is not an interior edge")));
            }
            let mut c = None;
            let mut d = None;
            for &fi in fs {
                let f = mesh.faces()[fi];
                let third = *f.iter().find(|&&v| v != a && v != b).unwrap();
                let forward = (0..3).any(|k| f[k] == a && f[(k + 1) % 3] == b);
                if forward {
                    c = Some(third);
                } else {
                    d = Some(third);
                }
            }
            match (c, d) {
                (Some(c), Some(d)) => Ok(Resolved::Dihedral { a, b, c, d }),
                _ => Err(bad(format!("hinge ({a}, {b}) is not consistently oriented"))),
            }
        }
    }
}

fn to_vec(coords: &[Point3]) -> DVector<f64> {
    DVector::from_iterator(3 * coords.len(), coords.iter().flat_map(|p| [p.x, p.y, p.z]))
}

fn from_vec(x: &DVector<f64>) -> Vec<Point3> {
    x.as_slice()
        .chunks_exact(3)
        .map(|c| Point3::new(c[0], c[1], c[2]))
        .collect()
}

fn min_norm_step(jac: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, usize) {
    let svd = jac.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = JACOBIAN_RANK_TOL * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let step = svd
        .solve(rhs, eps)
        .unwrap_or_else(|_| DVector::zeros(jac.ncols()));
    (step, rank)
}

/// A solved configuration.
#[derive(Clone, Debug)]
pub struct Solved {
    pub coords: Vec<Point3>,
    pub iterations: usize,
    pub residual: f64,
}

/// Newton (Gauss–Newton for redundant systems) with a backtracking line search.
pub fn solve_frame(problem: &FlexProblem, values: &[f64], guess: &[Point3]) -> Result<Solved> {
    if values.len() != problem.drivers.len() {
        return Err(Error::InvalidParam {
            name: "driver".into(),
            reason: format!("expected {} values, got {}", problem.drivers.len(), values.len()),
        });
    }
    if guess.len() != problem.mesh.num_vertices() {
        return Err(Error::LengthMismatch("guess has the wrong vertex count".into()));
    }
    let target = problem.targets(values);
    let mut x = to_vec(guess);
    let mut coords = guess.to_vec();
    let (f, mut jac) = problem.eval(&coords);
    let mut r = f - &target;
    for iter in 0..=MAX_NEWTON_ITERS {
        let rinf = r.amax();
        if rinf < NEWTON_TOL {
            return Ok(Solved {
                coords,
                iterations: iter,
                residual: rinf,
            });
        }
        if iter == MAX_NEWTON_ITERS || !rinf.is_finite() {
            break;
        }
        let (step, rank) = min_norm_step(&jac, &(-&r));
        if iter == 0 && rank < problem.unknowns() {
            return Err(Error::Underdetermined {
                rank,
                unknowns: problem.unknowns(),
            });
        }
        let merit = r.norm();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let xt = &x + &step * alpha;
            let ct = from_vec(&xt);
            let (ft, jt) = problem.eval(&ct);
            let rt = ft - &target;
            if rt.norm() < (1.0 - 1e-4 * alpha) * merit || rt.amax() < NEWTON_TOL {
                x = xt;
                coords = ct;
                r = rt;
                jac = jt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_NEWTON_ITERS,
        residual: r.amax(),
    })
}

/// Diagnostics recorded with every frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDiag {
    pub edge_err: f64,
    pub volume: Option<f64>,
    pub sym_residual: Option<f64>,
    pub min_sv: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phantoms: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Value of the first driver.
    pub t: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    pub vertices: Vec<Point3>,
    pub diag: FrameDiag,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PathStatus {
    #[default]
    Complete,
    /// Newton failed at the minimal step; the mechanism locks near `at`.
    Locked { at: f64, reason: String },
}

/// A traced motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlexPath {
    pub driver: Vec<Driver>,
    pub frames: Vec<Frame>,
    #[serde(default)]
    pub status: PathStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faces: Option<Vec<[usize; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twin: Option<TwinInfo>,
}

impl FlexPath {
    /// Smallest and largest first-driver value over the frames.
    pub fn range(&self) -> Option<(f64, f64)> {
        let mut it = self.frames.iter().map(|f| f.t);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }

    pub fn is_complete(&self) -> bool {
        self.status == PathStatus::Complete
    }

    pub fn max_edge_error(&self) -> f64 {
        self.frames.iter().map(|f| f.diag.edge_err).fold(0.0, f64::max)
    }

    /// Largest drift of the signed volume from the first frame.
    pub fn volume_drift(&self) -> Option<f64> {
        let v0 = self.frames.first()?.diag.volume?;
        self.frames
            .iter()
            .map(|f| f.diag.volume.map(|v| (v - v0).abs()))
            .try_fold(0.0, |m, d| d.map(|d| f64::max(m, d)))
    }
}

/// Adaptive step control for continuation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    /// First step as a fraction of the schedule length.
    pub initial_fraction: f64,
    /// Largest step as a fraction of the schedule length.
    pub max_fraction: f64,
    /// Halvings below the initial step before the path is declared locked.
    pub max_halvings: u32,
    /// Consecutive successes before the step doubles.
    pub grow_after: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            initial_fraction: 1.0 / 64.0,
            max_fraction: 1.0 / 16.0,
            max_halvings: 12,
            grow_after: 4,
        }
    }
}

struct Stepper {
    h: f64,
    hmin: f64,
    hmax: f64,
    successes: usize,
    grow_after: usize,
}

impl Stepper {
    fn new(length: f64, opts: &TraceOptions) -> Self {
        let h = length * opts.initial_fraction;
        Self {
            h,
            hmin: h / 2f64.powi(opts.max_halvings as i32),
            hmax: length * opts.max_fraction,
            successes: 0,
            grow_after: opts.grow_after,
        }
    }

    fn success(&mut self) {
        self.successes += 1;
        if self.successes >= self.grow_after {
            self.h = (2.0 * self.h).min(self.hmax);
            self.successes = 0;
        }
    }

    /// Returns false once the step has shrunk below the minimum.
    fn failure(&mut self) -> bool {
        self.successes = 0;
        self.h *= 0.5;
        self.h >= self.hmin
    }
}

struct Lock {
    coords: Vec<Point3>,
    values: Vec<f64>,
    reason: String,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Continues from `(coords, from)` to driver values `to`.
fn march(
    problem: &FlexProblem,
    coords: Vec<Point3>,
    from: &[f64],
    to: &[f64],
    stepper: &mut Stepper,
) -> std::result::Result<Vec<Point3>, Lock> {
    let len = dist(from, to);
    if len == 0.0 {
        return Ok(coords);
    }
    let lerp = |s: f64| -> Vec<f64> { from.iter().zip(to).map(|(a, b)| a + (b - a) * s).collect() };
    let mut s = 0.0;
    let mut x = coords;
    while s < 1.0 {
        let s_next = (s + stepper.h / len).min(1.0);
        let (v0, v1) = (lerp(s), lerp(s_next));
        let (_, jac) = problem.eval(&x);
        let shift = problem.targets(&v1) - problem.targets(&v0);
        let (delta, _) = min_norm_step(&jac, &shift);
        let pred = from_vec(&(to_vec(&x) + &delta));
        let accepted = solve_frame(problem, &v1, &pred).ok().filter(|sol| {
            // a large correction means Newton left the branch
            let corr = (to_vec(&sol.coords) - to_vec(&pred)).norm();
            corr <= (0.5 * delta.norm()).max(1e-9 * problem.diameter)
                && problem.max_edge_error(&sol.coords) < 1e-9
        });
        if let Some(sol) = accepted {
            x = sol.coords;
            s = s_next;
            stepper.success();
        } else if !stepper.failure() {
            return Err(Lock {
                coords: x,
                values: v0,
                reason: "Newton failed at the minimal step".into(),
            });
        }
    }
    Ok(x)
}

/// Traces the schedule of driver values starting from `start`.
///
/// The first schedule point is reached by continuation from the start
/// configuration's own driver values; reaching it must succeed.
pub fn trace(
    problem: &FlexProblem,
    start: &[Point3],
    schedule: &[Vec<f64>],
    opts: &TraceOptions,
) -> Result<FlexPath> {
    let first = schedule.first().ok_or_else(|| Error::InvalidParam {
        name: "schedule".into(),
        reason: "empty schedule".into(),
    })?;
    let current = problem.driver_values(start);
    // fail fast on unsolvable or underdetermined systems
    solve_frame(problem, &current, start)?;
    let total = schedule.windows(2).map(|w| dist(&w[0], &w[1])).sum::<f64>();
    let approach = dist(&current, first);
    let mut stepper = Stepper::new(if total > 0.0 { total } else { 1.0 }, opts);
    let mut x = if approach > 0.0 {
        let mut s = Stepper::new(approach, opts);
        march(problem, start.to_vec(), &current, first, &mut s).map_err(|l| {
            Error::TraceFailed(format!(
                "could not reach the first schedule point: {} at {:?}",
                l.reason, l.values
            ))
        })?
    } else {
        start.to_vec()
    };
    x = solve_frame(problem, first, &x)?.coords;

    let mut path = FlexPath {
        driver: problem.drivers.clone(),
        frames: vec![make_frame(problem, first, &x)],
        status: PathStatus::Complete,
        faces: Some(problem.mesh.faces().to_vec()),
        twin: problem.twin.clone(),
    };
    for w in schedule.windows(2) {
        match march(problem, x.clone(), &w[0], &w[1], &mut stepper) {
            Ok(next) => {
                x = next;
                path.frames.push(make_frame(problem, &w[1], &x));
            }
            Err(lock) => {
                path.status = PathStatus::Locked {
                    at: lock.values[0],
                    reason: lock.reason,
                };
                break;
            }
        }
    }
    Ok(path)
}

fn make_frame(problem: &FlexProblem, values: &[f64], coords: &[Point3]) -> Frame {
    Frame {
        t: values[0],
        values: if values.len() > 1 { values.to_vec() } else { Vec::new() },
        vertices: coords.to_vec(),
        diag: problem.diagnostics(coords),
    }
}

/// Evenly spaced single-driver schedule from `lo` to `hi`.
pub fn linear_schedule(lo: f64, hi: f64, frames: usize) -> Vec<Vec<f64>> {
    match frames {
        0 => Vec::new(),
        1 => vec![vec![lo]],
        n => (0..n)
            .map(|k| vec![lo + (hi - lo) * k as f64 / (n - 1) as f64])
            .collect(),
    }
}

/// Traces a single driver from `lo` to `hi` in `frames` evenly spaced frames.
pub fn trace_range(
    problem: &FlexProblem,
    start: &[Point3],
    lo: f64,
    hi: f64,
    frames: usize,
    opts: &TraceOptions,
) -> Result<FlexPath> {
    if problem.drivers.len() != 1 {
        return Err(Error::InvalidParam {
            name: "driver".into(),
            reason: "a range needs exactly one driver".into(),
        });
    }
    if frames < 2 || !(lo.is_finite() && hi.is_finite()) || lo == hi {
        return Err(Error::InvalidParam {
            name: "range".into(),
            reason: "need a non-empty finite range and at least 2 frames".into(),
        });
    }
    trace(problem, start, &linear_schedule(lo, hi, frames), opts)
}

/// Result of probing how far a single driver can move.
#[derive(Clone, Debug)]
pub struct Extent {
    pub lo: f64,
    pub hi: f64,
    pub lo_coords: Vec<Point3>,
    pub hi_coords: Vec<Point3>,
    pub lo_locked: bool,
    pub hi_locked: bool,
}

/// Moves the single driver outward in both directions until the motion locks or
/// the natural bounds of the driver are reached.
pub fn explore_extent(problem: &FlexProblem, start: &[Point3], opts: &TraceOptions) -> Result<Extent> {
    if problem.drivers.len() != 1 {
        return Err(Error::InvalidParam {
            name: "driver".into(),
            reason: "exploration needs exactly one driver".into(),
        });
    }
    let t0 = problem.driver_values(start)[0];
    let x0 = solve_frame(problem, &[t0], start)?.coords;
    let (lo_bound, hi_bound) = match problem.drivers[0] {
        Driver::Distance { .. } => (1e-6 * problem.diameter, t0 + 4.0 * problem.diameter),
        Driver::Dihedral { .. } => (1e-6, std::f64::consts::TAU - 1e-6),
    };
    let go = |target: f64| -> (f64, Vec<Point3>, bool) {
        let mut stepper = Stepper::new((target - t0).abs(), opts);
        match march(problem, x0.clone(), &[t0], &[target], &mut stepper) {
            Ok(x) => (target, x, false),
            Err(lock) => (lock.values[0], lock.coords, true),
        }
    };
    let (lo, lo_coords, lo_locked) = go(lo_bound);
    let (hi, hi_coords, hi_locked) = go(hi_bound);
    Ok(Extent {
        lo,
        hi,
        lo_coords,
        hi_coords,
        lo_locked,
        hi_locked,
    })
}

/// Traces the whole reachable interval of a single driver with `frames` frames.
pub fn trace_auto(
    problem: &FlexProblem,
    start: &[Point3],
    frames: usize,
    opts: &TraceOptions,
) -> Result<FlexPath> {
    let ext = explore_extent(problem, start, opts)?;
    if ext.hi - ext.lo <= 0.0 {
        return Err(Error::TraceFailed("the driver cannot move".into()));
    }
    // stay clear of the lock points, where Newton is slow
    let margin = 1e-4 * (ext.hi - ext.lo);
    let lo = if ext.lo_locked { ext.lo + margin } else { ext.lo };
    let hi = if ext.hi_locked { ext.hi - margin } else { ext.hi };
    trace_range(problem, &ext.lo_coords, lo, hi, frames, opts)
}

/// Max distance between each vertex's image under the equator's current symmetry
/// and its recorded partner.
pub fn equator_residual(coords: &[Point3], twin: &TwinInfo) -> Result<f64> {
    let [a, b, a2, b2] = twin.equator_quad()?;
    let quad = [coords[a], coords[b], coords[a2], coords[b2]];
    let iso = isometry_of(&quad, twin.kind)?;
    Ok(twin
        .all_pairs()?
        .iter()
        .map(|&(u, v)| (iso.apply(&coords[u]) - coords[v]).norm())
        .fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlexVerdict {
    FinitelyFlexible,
    InfinitesimallyFlexibleOnly,
    Rigid,
    Inconclusive,
}

impl fmt::Display for FlexVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlexVerdict::FinitelyFlexible => "finitely flexible",
            FlexVerdict::InfinitesimallyFlexibleOnly => "infinitesimally flexible only",
            FlexVerdict::Rigid => "rigid",
            FlexVerdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlexCertificate {
    pub verdict: FlexVerdict,
    /// Infinitesimal flex modes at the construction frame.
    pub modes_at_start: usize,
    /// Infinitesimal flex modes at a frame in the middle of the traced range.
    pub modes_generic: Option<usize>,
    pub driver: Driver,
    pub start_value: f64,
    /// Traced interval of the driver.
    pub range: Option<(f64, f64)>,
    /// Achieved amplitude over the required one.
    pub amplitude: f64,
    pub required_amplitude: f64,
    pub max_edge_error: f64,
    pub max_sym_residual: Option<f64>,
}

/// Frames traced on each side of the start by [`flex_certificate`].
const CERT_FRAMES: usize = 24;
/// Fraction of the driver's start value probed on each side.
const CERT_REACH: f64 = 0.15;

/// Infinitesimal analysis plus a finite trace of the given distance driver.
pub fn flex_certificate(problem: &FlexProblem, required_fraction: f64) -> Result<FlexCertificate> {
    let mesh = problem.mesh();
    let start = mesh.vertices();
    let driver = problem.drivers[0];
    let t0 = problem.driver_values(start)[0];
    let report = analyze(&Framework::from_mesh(mesh), DEFAULT_RANK_TOL)?;
    let required = required_fraction * t0;
    let mut cert = FlexCertificate {
        verdict: FlexVerdict::Rigid,
        modes_at_start: report.num_flex_modes(),
        modes_generic: None,
        driver,
        start_value: t0,
        range: None,
        amplitude: 0.0,
        required_amplitude: required,
        max_edge_error: problem.max_edge_error(start),
        max_sym_residual: None,
    };
    if report.num_flex_modes() == 0 {
        return Ok(cert);
    }
    let opts = TraceOptions::default();
    let reach = CERT_REACH * t0;
    let up = trace_range(problem, start, t0, t0 + reach, CERT_FRAMES, &opts);
    let down = trace_range(problem, start, t0, t0 - reach, CERT_FRAMES, &opts);
    let mut frames: Vec<Frame> = Vec::new();
    for p in [&down, &up].into_iter().flatten() {
        frames.extend(p.frames.iter().cloned());
    }
    if frames.len() <= 2 {
        cert.verdict = FlexVerdict::InfinitesimallyFlexibleOnly;
        return Ok(cert);
    }
    let lo = frames.iter().map(|f| f.t).fold(f64::INFINITY, f64::min);
    let hi = frames.iter().map(|f| f.t).fold(f64::NEG_INFINITY, f64::max);
    let mid = frames
        .iter()
        .min_by(|a, b| {
            let c = 0.5 * (lo + hi);
            (a.t - c).abs().total_cmp(&(b.t - c).abs())
        })
        .unwrap();
    // the start frame may be special; analyse a frame away from it if possible
    let generic = frames
        .iter()
        .filter(|f| (f.t - t0).abs() > 0.25 * (hi - lo))
        .min_by(|a, b| (a.t - t0).abs().total_cmp(&(b.t - t0).abs()))
        .unwrap_or(mid);
    let r = analyze(
        &Framework::from_mesh(mesh).at(generic.vertices.clone()),
        DEFAULT_RANK_TOL,
    )?;
    cert.modes_generic = Some(r.num_flex_modes());
    cert.range = Some((lo, hi));
    cert.amplitude = hi - lo;
    cert.max_edge_error = frames.iter().map(|f| f.diag.edge_err).fold(0.0, f64::max);
    cert.max_sym_residual = frames
        .iter()
        .filter_map(|f| f.diag.sym_residual)
        .reduce(f64::max);
    cert.verdict = if cert.amplitude >= required && r.num_flex_modes() == 1 && cert.max_edge_error < 1e-8 {
        FlexVerdict::FinitelyFlexible
    } else {
        FlexVerdict::Inconclusive
    };
    Ok(cert)
}

/// Certificate for a twin driven by its removed diagonal, requiring 5% amplitude.
pub fn finite_flex_certificate(twin: &Twin) -> Result<FlexCertificate> {
    flex_certificate(&FlexProblem::for_twin(twin)?, 0.05)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::closed_outward;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    fn tetra() -> TriMesh {
        let v = vec![p(0., 0., 0.), p(1., 0., 0.), p(0.1, 1., 0.), p(0.2, 0.3, 1.)];
        closed_outward(v, &[[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]).unwrap()
    }

    fn hinge() -> TriMesh {
        let v = vec![p(0., 0., 0.), p(1., 0., 0.), p(0.4, 1., 0.), p(0.6, -0.5, 0.8)];
        TriMesh::new(v, vec![[0, 1, 2], [1, 0, 3]]).unwrap()
    }

    #[test]
    fn fixed_point_returns_guess() {
        let m = hinge();
        let prob = FlexProblem::new(&m, vec![Driver::distance(2, 3)]).unwrap();
        let t = prob.driver_values(m.vertices());
        let s = solve_frame(&prob, &t, m.vertices()).unwrap();
        assert_eq!(s.coords, m.vertices());
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn rigid_tetrahedron_rejects_an_edge_change() {
        let m = tetra();
        let prob = FlexProblem::new(&m, vec![Driver::distance(0, 1)]).unwrap();
        let err = solve_frame(&prob, &[1.1], m.vertices()).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }), "{err:?}");
    }

    #[test]
    fn hinge_opens_preserving_edges() {
        let m = hinge();
        let prob = FlexProblem::new(&m, vec![Driver::distance(2, 3)]).unwrap();
        let t0 = prob.driver_values(m.vertices())[0];
        let s = solve_frame(&prob, &[t0 * 1.05], m.vertices()).unwrap();
        assert!(prob.max_edge_error(&s.coords) < 1e-12);
        assert!((prob.driver_values(&s.coords)[0] - t0 * 1.05).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_is_rejected() {
        // a chain of three triangles has two hinges but one driver
        let v = vec![p(0., 0., 0.), p(1., 0., 0.), p(0.5, 1., 0.), p(0.5, -1., 0.3), p(1.5, 1., 0.2)];
        let m = TriMesh::new(v, vec![[0, 1, 2], [1, 0, 3], [2, 1, 4]]).unwrap();
        let prob = FlexProblem::new(&m, vec![Driver::distance(2, 3)]).unwrap();
        let err = solve_frame(&prob, &[1.5], m.vertices()).unwrap_err();
        assert!(matches!(err, Error::Underdetermined { .. }), "{err:?}");
    }

    #[test]
    fn dihedral_gradient_matches_finite_differences() {
        let m = hinge();
        let prob = FlexProblem::new(&m, vec![Driver::dihedral(0, 1)]).unwrap();
        let x = m.vertices().to_vec();
        let (_, jac) = prob.eval(&x);
        let row = jac.nrows() - 1;
        let h = 1e-6;
        for k in 0..12 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k / 3][k % 3] += h;
            xm[k / 3][k % 3] -= h;
            let fd = (prob.driver_values(&xp)[0] - prob.driver_values(&xm)[0]) / (2.0 * h);
            assert!((fd - jac[(row, k)]).abs() < 1e-7, "coord {k}: {fd} vs {}", jac[(row, k)]);
        }
    }

    #[test]
    fn hinge_trace_by_dihedral() {
        let m = hinge();
        let prob = FlexProblem::new(&m, vec![Driver::dihedral(0, 1)]).unwrap();
        let t0 = prob.driver_values(m.vertices())[0];
        let path = trace_range(&prob, m.vertices(), t0, t0 + 0.5, 11, &TraceOptions::default()).unwrap();
        assert!(path.is_complete());
        assert_eq!(path.frames.len(), 11);
        assert!(path.max_edge_error() < 1e-10);
        assert!((path.frames[10].t - (t0 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn driver_parse() {
        let m = hinge().with_labels([("A", 0), ("A'", 1), ("B", 2)]).unwrap();
        assert_eq!(Driver::parse("AA'", &m).unwrap(), Driver::distance(0, 1));
        assert_eq!(Driver::parse("A',B", &m).unwrap(), Driver::distance(1, 2));
        assert_eq!(Driver::parse("0,3", &m).unwrap(), Driver::distance(0, 3));
        assert_eq!(Driver::parse("dihedral:A,A'", &m).unwrap(), Driver::dihedral(0, 1));
        assert!(Driver::parse("XY", &m).is_err());
    }

    #[test]
    fn length_jacobian_is_twice_the_rigidity_matrix() {
        let m = tetra();
        let prob = FlexProblem::new(&m, vec![Driver::distance(0, 1)]).unwrap();
        let j = prob.length_jacobian(m.vertices());
        let r = crate::rigidity::rigidity_matrix(&Framework::from_mesh(&m));
        assert!((j - r * 2.0).amax() < 1e-12);
    }
}

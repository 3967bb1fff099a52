//! Request handlers shared by the command line and the HTTP service.
//!
//! Every operation takes a deserializable request and returns a value whose
//! [`payload`] is the exact byte string both front ends emit.

use serde::{Deserialize, Serialize};

use twinflex_core::collision::{default_eps, path_embedding, self_intersections, IntersectionReport, PathEmbedding};
use twinflex_core::flexion::{
    equator_residual, trace_auto, trace_range, Driver, FlexPath, FlexProblem, PathStatus, TraceOptions,
};
use twinflex_core::geom::{bbox_diameter, mesh_stats, signed_volume};
use twinflex_core::io::MeshDoc;
use twinflex_core::netexport::{export_svg, unfold, unfold_with_tree, Net, SvgOptions};
use twinflex_core::rigidity::{analyze, Framework, RigidityReport, DEFAULT_RANK_TOL};
use twinflex_core::search::{default_box, search_embedding, EmbeddingScan, ParamRange, SearchOptions};
use twinflex_core::twinning::catalog::{self, ModelSpec, Params};
use twinflex_core::{Edge, Error, MeshStats, Point3, TriMesh, TwinInfo};

pub const MAX_FRAMES: usize = 10_000;
pub const MAX_BUDGET: usize = 100_000;
/// Half-width of the default search box as a fraction of each parameter's range.
pub const DEFAULT_BOX_FRAC: f64 = 0.002;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    Solver,
    NotFound,
}

/// Machine-readable failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpError {
    pub kind: ErrorKind,
    pub code: String,
    pub message: String,
}

impl OpError {
    pub fn validation(code: &str, message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::NotFound,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation | ErrorKind::NotFound => 2,
            ErrorKind::Solver => 3,
        }
    }

    /// `{"error": {...}}`
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl std::fmt::Display for OpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.message, self.code)
    }
}

impl std::error::Error for OpError {}

impl From<Error> for OpError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Structural { .. } => "structural",
            Error::NonFinite(_) => "non_finite",
            Error::ZeroLengthEdge(..) => "zero_length_edge",
            Error::NotClosed(_) => "not_closed",
            Error::InconsistentOrientation(..) => "inconsistent_orientation",
            Error::Degenerate(_) => "degenerate",
            Error::NotSymmetric(_) => "not_symmetric",
            Error::DoubleCover => "double_cover",
            Error::Topology(_) => "topology",
            Error::InvalidParam { .. } => "invalid_param",
            Error::UnknownModel(_) => "unknown_model",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Underdetermined { .. } => "underdetermined",
            Error::TraceFailed(_) => "trace_failed",
            Error::SearchFailed(_) => "search_failed",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "malformed_json",
        };
        let kind = if matches!(e, Error::UnknownModel(_)) {
            ErrorKind::NotFound
        } else if e.is_solver_failure() {
            ErrorKind::Solver
        } else {
            ErrorKind::Validation
        };
        Self {
            kind,
            code: code.into(),
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for OpError {
    fn from(e: serde_json::Error) -> Self {
        OpError::validation("malformed_json", e.to_string())
    }
}

pub type OpResult<T> = Result<T, OpError>;

/// Canonical serialization of a result.
pub fn payload<T: Serialize>(value: &T) -> OpResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| OpError::validation("serialize", e.to_string()))
}

/// Parses a request body.
pub fn parse_request<T: for<'de> Deserialize<'de>>(body: &[u8]) -> OpResult<T> {
    serde_json::from_slice(body).map_err(|e| OpError::validation("malformed_body", e.to_string()))
}

// ---- catalog ----

#[derive(Clone, Debug, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub params: Params,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelEntry {
    #[serde(flatten)]
    pub spec: ModelSpec,
    pub presets: Vec<Preset>,
}

pub fn models() -> Vec<ModelEntry> {
    catalog::models()
        .into_iter()
        .map(|spec| ModelEntry {
            presets: catalog::presets(spec.name)
                .into_iter()
                .map(|(name, params)| Preset { name, params })
                .collect(),
            spec,
        })
        .collect()
}

// ---- build ----

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildRequest {
    pub model: String,
    #[serde(default)]
    pub params: Params,
    /// Applied first; `params` override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
}

/// Parses `k=v`.
pub fn parse_param(s: &str) -> OpResult<(String, f64)> {
    let bad = || OpError::validation("invalid_param", format!("expected name=value, got `{s}`"));
    let (k, v) = s.split_once('=').ok_or_else(bad)?;
    let v: f64 = v.trim().parse().map_err(|_| bad())?;
    Ok((k.trim().to_string(), v))
}

pub fn build(req: &BuildRequest) -> OpResult<MeshDoc> {
    catalog::spec_of(&req.model)?;
    let mut params = match &req.preset {
        Some(name) => catalog::preset(&req.model, name)?,
        None => Params::new(),
    };
    params.extend(req.params.iter().map(|(k, v)| (k.clone(), *v)));
    let model = catalog::build(&req.model, &params)?;
    Ok(MeshDoc::from_model(&model))
}

// ---- geometry sources ----

/// A mesh, a path, or one frame of a path. `vertices` replaces the coordinates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Source {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<FlexPath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<[f64; 3]>>,
}

struct Resolved {
    mesh: TriMesh,
    twin: Option<TwinInfo>,
    phantoms: Vec<Edge>,
}

fn to_points(v: &[[f64; 3]]) -> Vec<Point3> {
    v.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()
}

fn frame_of(path: &FlexPath, i: usize) -> OpResult<&[Point3]> {
    path.frames.get(i).map(|f| f.vertices.as_slice()).ok_or_else(|| {
        OpError::validation(
            "frame_out_of_range",
            format!("frame {i} out of range (path has {} frames)", path.frames.len()),
        )
    })
}

impl Source {
    fn resolve(&self) -> OpResult<Resolved> {
        let mut r = match (&self.mesh, &self.path) {
            (Some(doc), path) => {
                let mut mesh = doc.to_mesh()?;
                if let (Some(p), Some(i)) = (path, self.frame) {
                    mesh = mesh.with_vertices(frame_of(p, i)?.to_vec())?;
                }
                Resolved {
                    mesh,
                    twin: doc.twin.clone(),
                    phantoms: doc.phantoms.clone(),
                }
            }
            (None, Some(p)) => {
                let faces = p.faces.clone().ok_or_else(|| {
                    OpError::validation("missing_faces", "path carries no faces; send the mesh as well")
                })?;
                let coords = frame_of(p, self.frame.unwrap_or(0))?.to_vec();
                Resolved {
                    mesh: TriMesh::new(coords, faces)?,
                    twin: p.twin.clone(),
                    phantoms: Vec::new(),
                }
            }
            (None, None) => return Err(OpError::validation("missing_mesh", "request needs `mesh` or `path`")),
        };
        if let Some(v) = &self.vertices {
            r.mesh = r.mesh.with_vertices(to_points(v))?;
        }
        Ok(r)
    }

    fn is_whole_path(&self) -> bool {
        self.path.is_some() && self.frame.is_none() && self.vertices.is_none()
    }
}

// ---- flex ----

fn default_range() -> String {
    "auto".into()
}

fn default_frames() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlexRequest {
    pub mesh: MeshDoc,
    /// `AA'`, `A,C'`, `0,2` or `dihedral:A,B`; defaults to the mesh's own driver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<String>,
    /// `auto` or `lo:hi`.
    #[serde(default = "default_range")]
    pub range: String,
    #[serde(default = "default_frames")]
    pub frames: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RangeSpec {
    Auto,
    Span(f64, f64),
}

impl RangeSpec {
    pub fn parse(s: &str) -> OpResult<Self> {
        if s.trim() == "auto" {
            return Ok(RangeSpec::Auto);
        }
        let bad = || OpError::validation("invalid_range", format!("expected `auto` or lo:hi, got `{s}`"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let lo: f64 = a.trim().parse().map_err(|_| bad())?;
        let hi: f64 = b.trim().parse().map_err(|_| bad())?;
        if !(lo.is_finite() && hi.is_finite()) || lo == hi {
            return Err(bad());
        }
        Ok(RangeSpec::Span(lo, hi))
    }
}

/// A validated flex request, ready to run.
pub struct FlexJob {
    problem: FlexProblem,
    start: Vec<Point3>,
    range: RangeSpec,
    frames: usize,
}

pub fn prepare_flex(req: &FlexRequest) -> OpResult<FlexJob> {
    let mesh = req.mesh.to_mesh()?;
    let driver = match &req.driver {
        Some(s) => Driver::parse(s, &mesh)?,
        None => req.mesh.driver.ok_or_else(|| {
            OpError::validation("missing_driver", "no driver given and the mesh has no default driver")
        })?,
    };
    if !(2..=MAX_FRAMES).contains(&req.frames) {
        return Err(OpError::validation(
            "invalid_frames",
            format!("frames must be in 2..={MAX_FRAMES}"),
        ));
    }
    let range = RangeSpec::parse(&req.range)?;
    let mut problem = FlexProblem::new(&mesh, vec![driver])?
        .with_pinned(&req.mesh.pinned)?
        .with_monitored(req.mesh.phantoms.clone());
    if let Some(t) = &req.mesh.twin {
        problem = problem.with_twin(t.clone());
    }
    Ok(FlexJob {
        problem,
        start: mesh.vertices().to_vec(),
        range,
        frames: req.frames,
    })
}

impl FlexJob {
    pub fn run(&self) -> OpResult<FlexPath> {
        let opts = TraceOptions::default();
        let path = match self.range {
            RangeSpec::Auto => trace_auto(&self.problem, &self.start, self.frames, &opts)?,
            RangeSpec::Span(lo, hi) => trace_range(&self.problem, &self.start, lo, hi, self.frames, &opts)?,
        };
        Ok(path)
    }
}

pub fn flex(req: &FlexRequest) -> OpResult<FlexPath> {
    prepare_flex(req)?.run()
}

// ---- check ----

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckRequest {
    #[serde(flatten)]
    pub source: Source,
    /// Relative rank tolerance for the rigidity matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    /// Absolute intersection tolerance; defaults to 1e-9 of the frame's diameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomDistance {
    pub pair: Edge,
    pub distance: f64,
}

/// Rigidity, intersection and volume report for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub summary: String,
    pub stats: MeshStats,
    pub num_flex_modes: usize,
    pub rigidity: RigidityReport,
    pub is_embedded: bool,
    pub intersections: IntersectionReport,
    pub diameter: f64,
    /// Signed volume; absent for open surfaces.
    pub volume: Option<f64>,
    pub symmetry_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phantoms: Vec<PhantomDistance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathCheck {
    pub summary: String,
    pub frames: usize,
    pub range: Option<(f64, f64)>,
    pub status: PathStatus,
    pub max_edge_error: f64,
    pub volume_drift: Option<f64>,
    pub max_symmetry_residual: Option<f64>,
    /// Spread of each monitored distance over the path.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phantom_drift: Vec<f64>,
    pub embedding: PathEmbedding,
    pub first_frame: CheckReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CheckOutput {
    Path(Box<PathCheck>),
    Frame(Box<CheckReport>),
}

impl CheckOutput {
    pub fn summary(&self) -> &str {
        match self {
            CheckOutput::Path(p) => &p.summary,
            CheckOutput::Frame(f) => &f.summary,
        }
    }
}

fn check_frame(r: &Resolved, rank_tol: f64, eps: Option<f64>) -> OpResult<CheckReport> {
    let mesh = &r.mesh;
    let coords = mesh.vertices();
    let rigidity = analyze(&Framework::from_mesh(mesh), rank_tol)?;
    let diameter = bbox_diameter(coords);
    let eps = eps.unwrap_or_else(|| default_eps(coords));
    let intersections = self_intersections(mesh, coords, eps)?;
    let volume = mesh.is_closed().then(|| signed_volume(mesh)).transpose()?;
    let symmetry_residual = r.twin.as_ref().map(|t| equator_residual(coords, t)).transpose()?;
    let phantoms = r
        .phantoms
        .iter()
        .map(|&(a, b)| PhantomDistance {
            pair: (a, b),
            distance: (coords[a] - coords[b]).norm(),
        })
        .collect();

    let modes = rigidity.num_flex_modes();
    let mut summary = format!("{modes} flex mode{}", if modes == 1 { "" } else { "s" });
    summary.push_str(if intersections.is_embedded {
        ", embedded"
    } else {
        ", self-intersecting"
    });
    match volume {
        Some(v) if v.abs() < 1e-10 * diameter.powi(3) => summary.push_str(", volume 0"),
        Some(v) => summary.push_str(&format!(", volume {v:.6}")),
        None => summary.push_str(", open surface"),
    }
    Ok(CheckReport {
        summary,
        stats: mesh_stats(mesh),
        num_flex_modes: modes,
        rigidity,
        is_embedded: intersections.is_embedded,
        intersections,
        diameter,
        volume,
        symmetry_residual,
        phantoms,
    })
}

pub fn check(req: &CheckRequest) -> OpResult<CheckOutput> {
    let rank_tol = req.rank_tol.unwrap_or(DEFAULT_RANK_TOL);
    if let Some(eps) = req.eps {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(OpError::validation("invalid_param", "eps must be finite and non-negative"));
        }
    }
    let resolved = req.source.resolve()?;
    let first = check_frame(&resolved, rank_tol, req.eps)?;
    if !req.source.is_whole_path() {
        return Ok(CheckOutput::Frame(Box::new(first)));
    }
    let path = req.source.path.as_ref().expect("whole path");
    let mesh = req
        .source
        .mesh
        .as_ref()
        .map(MeshDoc::to_mesh)
        .transpose()?
        .unwrap_or_else(|| resolved.mesh.clone());
    let embedding = path_embedding(path, &mesh, req.eps)?;
    let monitored = path.frames.first().map_or(0, |f| f.diag.phantoms.len());
    let phantom_drift = (0..monitored)
        .map(|k| {
            let ds = path.frames.iter().filter_map(|f| f.diag.phantoms.get(k).copied());
            let (lo, hi) = ds.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
            hi - lo
        })
        .collect();
    let max_symmetry_residual = path
        .frames
        .iter()
        .map(|f| f.diag.sym_residual)
        .try_fold(0.0, |m: f64, r| r.map(|r| m.max(r)));
    let embedded = embedding.embedded.iter().filter(|&&e| e).count();
    let summary = format!(
        "{} frames, max edge error {:.2e}, {}/{} frames embedded{}",
        path.frames.len(),
        path.max_edge_error(),
        embedded,
        embedding.embedded.len(),
        match path.volume_drift() {
            Some(d) => format!(", volume drift {d:.2e}"),
            None => String::new(),
        }
    );
    Ok(CheckOutput::Path(Box::new(PathCheck {
        summary,
        frames: path.frames.len(),
        range: path.range(),
        status: path.status.clone(),
        max_edge_error: path.max_edge_error(),
        volume_drift: path.volume_drift(),
        max_symmetry_residual,
        phantom_drift,
        embedding,
        first_frame: first,
    })))
}

// ---- net ----

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetRequest {
    #[serde(flatten)]
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<usize>,
    /// Explicit spanning tree as `(parent, child)` face pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mm_per_unit: Option<f64>,
}

pub fn unfold_net(req: &NetRequest) -> OpResult<Net> {
    let r = req.source.resolve()?;
    let coords = r.mesh.vertices();
    let net = match &req.tree {
        Some(tree) => {
            let root = req.root.or_else(|| tree.first().map(|e| e.0)).unwrap_or(0);
            unfold_with_tree(&r.mesh, coords, root, tree)?
        }
        None => unfold(&r.mesh, coords, req.root)?,
    };
    Ok(net)
}

/// SVG document of the net.
pub fn net(req: &NetRequest) -> OpResult<(Net, String)> {
    let mut opts = SvgOptions::default();
    if let Some(s) = req.mm_per_unit {
        if !(s > 0.0 && s.is_finite()) {
            return Err(OpError::validation("invalid_param", "mm_per_unit must be positive"));
        }
        opts.mm_per_unit = s;
    }
    let n = unfold_net(req)?;
    let svg = export_svg(&n, &opts)?;
    Ok((n, svg))
}

// ---- search ----

fn default_budget() -> usize {
    64
}

fn default_search_frames() -> usize {
    60
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub model: String,
    /// `name=lo:hi` entries; empty searches a small box around the defaults.
    #[serde(rename = "box", default)]
    pub ranges: Vec<String>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_search_frames")]
    pub frames: usize,
}

pub fn search(req: &SearchRequest) -> OpResult<EmbeddingScan> {
    catalog::spec_of(&req.model)?;
    if req.budget == 0 || req.budget > MAX_BUDGET {
        return Err(OpError::validation("invalid_budget", format!("budget must be in 1..={MAX_BUDGET}")));
    }
    if !(2..=MAX_FRAMES).contains(&req.frames) {
        return Err(OpError::validation("invalid_frames", format!("frames must be in 2..={MAX_FRAMES}")));
    }
    let ranges = if req.ranges.is_empty() {
        default_box(&req.model, DEFAULT_BOX_FRAC)?
    } else {
        req.ranges
            .iter()
            .map(|s| ParamRange::parse(s))
            .collect::<Result<Vec<_>, _>>()?
    };
    let opts = SearchOptions {
        budget: req.budget,
        seed: req.seed,
        frames: req.frames,
    };
    Ok(search_embedding(&req.model, &ranges, &opts)?)
}

mod common;

use common::{closed_models, twins};
use proptest::prelude::*;
use twinflex_core::flexion::{equator_residual, trace_range, Driver, FlexPath, FlexProblem, TraceOptions};
use twinflex_core::geom::{bbox_diameter, procrustes_residual, signed_volume};
use twinflex_core::rigidity::{rigidity_matrix, Framework};
use twinflex_core::twinning::catalog::{build_default, random_hull, Model};
use twinflex_core::twinning::surgery::erect_tent;
use twinflex_core::{Point3, SymmetryKind};

/// Traces `rel` of the driver value upward, or downward when the driver sits
/// at its maximum.
fn short_trace(problem: &FlexProblem, start: &[Point3], rel: f64, frames: usize) -> FlexPath {
    let t0 = problem.driver_values(start)[0];
    let opts = TraceOptions::default();
    let up = trace_range(problem, start, t0, t0 * (1.0 + rel), frames, &opts).unwrap();
    if up.is_complete() {
        return up;
    }
    trace_range(problem, start, t0, t0 * (1.0 - rel), frames, &opts).unwrap()
}

fn default_problem(m: &Model) -> FlexProblem {
    m.flex_problem(None).unwrap().expect("model flexes")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn traces_agree_across_gauges(which in 0usize..3, o in 0usize..64, r in 0usize..64, p in 0usize..64) {
        let name = ["bricard1", "bricard2", "twinned_anticupola"][which];
        let m = build_default(name).unwrap();
        let n = m.mesh().num_vertices();
        let (o, r, p) = (o % n, r % n, p % n);
        prop_assume!(o != r && r != p && o != p);
        let base = default_problem(&m);
        let alt = base.clone().with_gauge(o, r, p);
        prop_assume!(alt.is_ok());
        let start = m.mesh().vertices();
        let a = short_trace(&base, start, 0.02, 6);
        let b = short_trace(&alt.unwrap(), start, 0.02, 6);
        prop_assert!(a.is_complete() && b.is_complete());
        prop_assert_eq!(a.frames.len(), b.frames.len());
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            prop_assert!(procrustes_residual(&fa.vertices, &fb.vertices) < 1e-8);
        }
    }

    #[test]
    fn length_jacobian_matches_finite_differences(n in 5usize..12, seed in 0u64..500, wobble in prop::collection::vec(-0.05f64..0.05, 36)) {
        let mesh = random_hull(n, seed).unwrap();
        let problem = FlexProblem::new(&mesh, vec![Driver::distance(0, 1)]).unwrap();
        let coords: Vec<Point3> = mesh
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, q)| q + nalgebra::Vector3::new(wobble[3 * i % 36], wobble[(3 * i + 1) % 36], wobble[(3 * i + 2) % 36]))
            .collect();
        let jac = problem.length_jacobian(&coords);
        let edges = mesh.edges();
        let sq = |c: &[Point3]| -> Vec<f64> { edges.iter().map(|&(i, j)| (c[i] - c[j]).norm_squared()).collect() };
        let h = 1e-6;
        for v in 0..coords.len() {
            for k in 0..3 {
                let (mut up, mut dn) = (coords.clone(), coords.clone());
                up[v][k] += h;
                dn[v][k] -= h;
                let (fu, fd) = (sq(&up), sq(&dn));
                for e in 0..edges.len() {
                    let fdiff = (fu[e] - fd[e]) / (2.0 * h);
                    let exact = jac[(e, 3 * v + k)];
                    prop_assert!((fdiff - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "edge {e} var {v}.{k}: {fdiff} vs {exact}");
                }
            }
        }
        let r = rigidity_matrix(&Framework::from_mesh(&mesh).at(coords.clone()));
        prop_assert!((jac.rows(0, edges.len()) - r * 2.0).amax() < 1e-12);
    }

    #[test]
    fn tents_keep_old_edges(n in 5usize..14, seed in 0u64..500, face in 0usize..100, h in 0.05f64..1.0) {
        let mesh = random_hull(n, seed).unwrap();
        let f = face % mesh.faces().len();
        let tented = erect_tent(&mesh, f, h).unwrap();
        let (p, q) = (mesh.vertices(), tented.vertices());
        for (a, b) in mesh.edges() {
            prop_assert!(tented.has_edge(a, b));
            prop_assert_eq!((p[a] - p[b]).norm(), (q[a] - q[b]).norm());
        }
    }
}

#[test]
fn reverse_trace_returns_to_the_start() {
    for name in ["bricard1", "bricard2", "twinned_anticupola"] {
        let m = build_default(name).unwrap();
        let problem = default_problem(&m);
        let start = m.mesh().vertices();
        let fwd = short_trace(&problem, start, 0.05, 12);
        assert!(fwd.is_complete(), "{name}: {:?} after {} frames", fwd.status, fwd.frames.len());
        let last = fwd.frames.last().unwrap();
        let (lo, hi) = (fwd.frames[0].t, last.t);
        let back = trace_range(&problem, &last.vertices, hi, lo, 12, &TraceOptions::default()).unwrap();
        let end = &back.frames.last().unwrap().vertices;
        assert!(procrustes_residual(end, start) < 1e-7, "{name}");
    }
}

#[test]
fn closed_flexes_keep_their_volume() {
    for (name, m) in closed_models() {
        let Some(problem) = m.flex_problem(None).unwrap() else { continue };
        let start = m.mesh().vertices();
        let path = short_trace(&problem, start, 0.02, 8);
        let diam = bbox_diameter(start);
        let v0 = path.frames[0].diag.volume.unwrap();
        assert!(path.is_complete(), "{name}");
        let drift = path.volume_drift().unwrap();
        assert!(drift < 1e-8 * (1.0 + v0.abs()) * diam.powi(3), "{name}: drift {drift:e}");
    }
}

#[test]
fn twins_are_symmetric_at_construction() {
    for (name, m) in twins() {
        let info = m.twin_info().unwrap();
        let mesh = m.mesh();
        assert!(equator_residual(mesh.vertices(), info).unwrap() < 1e-10, "{name}");
        if info.kind == SymmetryKind::TypeI {
            let d = bbox_diameter(mesh.vertices());
            assert!(signed_volume(mesh).unwrap().abs() < 1e-10 * d.powi(3), "{name}");
        }
    }
}

//! Fixtures shared by the benchmarks.

use twinflex_core::flexion::FlexProblem;
use twinflex_core::twinning::catalog::{build_default, random_hull, Model};
use twinflex_core::TriMesh;

pub fn model(name: &str) -> Model {
    build_default(name).expect("catalog model builds")
}

/// Convex hull of `n` random points.
pub fn hull(n: usize, seed: u64) -> TriMesh {
    random_hull(n, seed).expect("hull builds")
}

/// The default flex problem of a catalog model.
pub fn problem(name: &str) -> (Model, FlexProblem) {
    let m = model(name);
    let p = m.flex_problem(None).expect("setup is valid").expect("model flexes");
    (m, p)
}

#![allow(dead_code)]

use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use twinflex_core::twinning::catalog::{build_default, models, Model, ModelKind};
use twinflex_core::{Point3, TriMesh};

/// A rotation and a translation.
#[derive(Clone, Debug)]
pub struct Motion {
    pub rot: Rotation3<f64>,
    pub shift: Vector3<f64>,
}

impl Motion {
    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rot * p + self.shift
    }

    pub fn apply_all(&self, ps: &[Point3]) -> Vec<Point3> {
        ps.iter().map(|p| self.apply(p)).collect()
    }

    pub fn mesh(&self, m: &TriMesh) -> TriMesh {
        m.with_vertices(self.apply_all(m.vertices())).unwrap()
    }
}

pub fn motion() -> impl Strategy<Value = Motion> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        0.0f64..std::f64::consts::PI,
        prop::array::uniform3(-10.0f64..10.0),
    )
        .prop_filter("axis", |(a, _, _)| Vector3::from(*a).norm() > 0.1)
        .prop_map(|(a, angle, t)| Motion {
            rot: Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(a)), angle),
            shift: Vector3::from(t),
        })
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Default builds of every closed catalog model.
pub fn closed_models() -> Vec<(&'static str, Model)> {
    models()
        .into_iter()
        .map(|s| (s.name, build_default(s.name).unwrap()))
        .filter(|(_, m)| m.mesh().is_closed())
        .collect()
}

pub fn twins() -> Vec<(&'static str, Model)> {
    models()
        .into_iter()
        .filter(|s| s.kind == ModelKind::Twin)
        .map(|s| (s.name, build_default(s.name).unwrap()))
        .collect()
}

/// Edge-plane clipping oracle for two triangles in general position.
///
/// Returns the crossing points of each triangle's edges with the other
/// triangle's interior, and the smallest margin (vertex-plane distance or
/// barycentric coordinate) that a perturbation would have to overcome to change
/// the answer.
pub fn clip_oracle(t1: &[Point3; 3], t2: &[Point3; 3]) -> (Vec<Point3>, f64) {
    let mut points = Vec::new();
    let mut margin = f64::INFINITY;
    for (a, b) in [(t1, t2), (t2, t1)] {
        let n = (b[1] - b[0]).cross(&(b[2] - b[0]));
        let area2 = n.norm();
        let n = n / area2;
        let d: Vec<f64> = a.iter().map(|p| n.dot(&(p - b[0]))).collect();
        for &x in &d {
            margin = margin.min(x.abs());
        }
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            if d[i] * d[j] >= 0.0 {
                continue;
            }
            let s = d[i] / (d[i] - d[j]);
            let x = a[i] + (a[j] - a[i]) * s;
            let bary: Vec<f64> = (0..3)
                .map(|k| {
                    let (u, v) = (b[(k + 1) % 3], b[(k + 2) % 3]);
                    n.dot(&(u - x).cross(&(v - x))) / area2
                })
                .collect();
            for &w in &bary {
                margin = margin.min(w.abs());
            }
            if bary.iter().all(|&w| w > 0.0) {
                points.push(x);
            }
        }
    }
    (points, margin)
}

/// Smallest distance from `x` to the triangle's plane plus how far outside it lies.
pub fn outside(t: &[Point3; 3], x: &Point3) -> f64 {
    let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
    let area2 = n.norm();
    let n = n / area2;
    let off = n.dot(&(x - t[0])).abs();
    let worst = (0..3)
        .map(|k| n.dot(&(t[(k + 1) % 3] - x).cross(&(t[(k + 2) % 3] - x))) / area2)
        .fold(0.0f64, |m, w| m.max(-w));
    off + worst
}

/// Two random triangles in the cube `[-1, 1]^3`.
pub fn random_pair(rng: &mut impl rand::Rng) -> ([Point3; 3], [Point3; 3]) {
    let mut p = || Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let t1 = [p(), p(), p()];
    let t2 = [p(), p(), p()];
    (t1, t2)
}

/// Compares `intersect_triangles` with [`clip_oracle`]. `None` when the pair is
/// closer than `sep` to a decision boundary; otherwise whether they agree.
pub fn oracle_agrees(t1: &[Point3; 3], t2: &[Point3; 3], sep: f64) -> Option<bool> {
    use twinflex_core::collision::{intersect_triangles, TriContact};
    let (points, margin) = clip_oracle(t1, t2);
    if margin <= sep {
        return None;
    }
    let got = intersect_triangles(t1, t2, 1e-12).ok()?;
    Some(match (got, points.len()) {
        (None, 0) => true,
        (Some(TriContact::Transversal { segment, .. }), 2) => {
            let [a, b] = segment;
            let [p, q] = [points[0], points[1]];
            let same = ((a - p).norm() < 1e-9 && (b - q).norm() < 1e-9) || ((a - q).norm() < 1e-9 && (b - p).norm() < 1e-9);
            // sampled points of the segment must lie in both triangles
            let inside = (0..=16).all(|k| {
                let x = a + (b - a) * (k as f64 / 16.0);
                outside(t1, &x) < 1e-9 && outside(t2, &x) < 1e-9
            });
            same && inside
        }
        _ => false,
    })
}

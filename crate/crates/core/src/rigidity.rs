//! Bar-joint rigidity: degree-of-freedom counts, the rigidity matrix, and
//! infinitesimal flexes modulo rigid motions.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{bbox_diameter, centroid, edge_key, Edge, Point3, TriMesh, Vec3};

/// Default rank threshold, relative to the largest singular value.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Framework {
    joints: Vec<Point3>,
    bars: Vec<Edge>,
}

impl Framework {
    pub fn new(joints: Vec<Point3>, bars: Vec<Edge>) -> Result<Self> {
        if let Some(i) = joints
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::NonFinite(i));
        }
        let mut seen = BTreeSet::new();
        let mut norm = Vec::with_capacity(bars.len());
        for (k, &(a, b)) in bars.iter().enumerate() {
            if a == b {
                return Err(Error::Structural {
                    face: k,
                    reason: format!("bar {k} joins joint {a} to itself"),
                });
            }
            if a >= joints.len() || b >= joints.len() {
                return Err(Error::Structural {
                    face: k,
                    reason: format!("bar {k} references a missing joint"),
                });
            }
            let e = edge_key(a, b);
            if !seen.insert(e) {
                return Err(Error::Structural {
                    face: k,
                    reason: format!("duplicate bar ({a}, {b})"),
                });
            }
            norm.push(e);
        }
        Ok(Self {
            joints,
            bars: norm,
        })
    }

    pub fn from_mesh(mesh: &TriMesh) -> Self {
        Self {
            joints: mesh.vertices().to_vec(),
            bars: mesh.edges(),
        }
    }

    pub fn joints(&self) -> &[Point3] {
        &self.joints
    }

    pub fn bars(&self) -> &[Edge] {
        &self.bars
    }

    /// Same bars at new joint positions.
    pub fn at(&self, joints: Vec<Point3>) -> Self {
        assert_eq!(joints.len(), self.joints.len());
        Self {
            joints,
            bars: self.bars.clone(),
        }
    }

    pub fn without_bar(&self, a: usize, b: usize) -> Self {
        let e = edge_key(a, b);
        Self {
            joints: self.joints.clone(),
            bars: self.bars.iter().copied().filter(|&x| x != e).collect(),
        }
    }

    pub fn with_bars(&self, extra: &[Edge]) -> Result<Self> {
        let mut bars = self.bars.clone();
        bars.extend_from_slice(extra);
        Self::new(self.joints.clone(), bars)
    }
}

/// `3V - E`: the naive degree-of-freedom count.
pub fn dof_count(framework: &Framework) -> i64 {
    3 * framework.joints.len() as i64 - framework.bars.len() as i64
}

/// E x 3V matrix whose row for bar (i, j) holds `p_i - p_j` in block i and
/// `p_j - p_i` in block j.
pub fn rigidity_matrix(framework: &Framework) -> DMatrix<f64> {
    rigidity_matrix_at(framework.bars(), framework.joints())
}

pub(crate) fn rigidity_matrix_at(bars: &[Edge], joints: &[Point3]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(bars.len(), 3 * joints.len());
    for (row, &(i, j)) in bars.iter().enumerate() {
        let d = joints[i] - joints[j];
        for k in 0..3 {
            m[(row, 3 * i + k)] = d[k];
            m[(row, 3 * j + k)] = -d[k];
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityReport {
    #[serde(rename = "dof")]
    pub dof_count: i64,
    #[serde(rename = "rank")]
    pub matrix_rank: usize,
    #[serde(rename = "trivial")]
    pub trivial_motions: usize,
    /// Orthonormal per-joint velocity fields (flattened xyz) orthogonal to rigid motions.
    pub flex_modes: Vec<Vec<f64>>,
    #[serde(rename = "isostatic")]
    pub is_isostatic: bool,
    /// Singular values of the rigidity matrix, descending.
    pub singular_values: Vec<f64>,
}

impl RigidityReport {
    pub fn num_flex_modes(&self) -> usize {
        self.flex_modes.len()
    }
}

/// Orthonormal basis (as columns) of the infinitesimal rigid motions at `joints`.
pub fn trivial_motion_basis(joints: &[Point3]) -> DMatrix<f64> {
    let n = joints.len();
    let c = centroid(joints);
    let mut m = DMatrix::zeros(3 * n, 6);
    for (i, p) in joints.iter().enumerate() {
        let r = p - c;
        for k in 0..3 {
            m[(3 * i + k, k)] = 1.0;
            let mut axis = Vec3::zeros();
            axis[k] = 1.0;
            let v = axis.cross(&r);
            for d in 0..3 {
                m[(3 * i + d, 3 + k)] = v[d];
            }
        }
    }
    let svd = m.svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
        .collect();
    DMatrix::from_fn(3 * n, keep.len(), |r, c| u[(r, keep[c])])
}

/// SVD-based rank and flex-mode analysis. `tol` is relative to the largest
/// singular value and must lie in (0, 1e-3).
pub fn analyze(framework: &Framework, tol: f64) -> Result<RigidityReport> {
    if !(tol > 0.0 && tol < 1e-3) {
        return Err(Error::InvalidParam {
            name: "tol".into(),
            reason: format!("{tol} outside (0, 1e-3)"),
        });
    }
    let joints = framework.joints();
    let n = joints.len();
    if n == 0 || bbox_diameter(joints) == 0.0 {
        return Err(Error::Degenerate("all joints coincide".into()));
    }
    let cols = 3 * n;
    let r = rigidity_matrix(framework);
    let e = r.nrows();
    // pad with zero rows so the SVD returns a full right basis
    let rows = e.max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (e, cols)).copy_from(&r);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sorted: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = sorted.first().copied().unwrap_or(0.0);
    let cutoff = tol * smax;
    let rank = if smax == 0.0 {
        0
    } else {
        sorted.iter().filter(|&&s| s > cutoff).count()
    };

    let null_idx: Vec<usize> = order.iter().copied().skip(rank).collect();
    let null = DMatrix::from_fn(cols, null_idx.len(), |row, c| vt[(null_idx[c], row)]);
    let trivial = trivial_motion_basis(joints);
    let t = trivial.ncols();
    let projected = &null - &trivial * (trivial.transpose() * &null);
    let expected = null_idx.len().saturating_sub(t);
    let mut flex_modes = Vec::new();
    if expected > 0 {
        // eigenvectors of the Gram matrix keep each mode an exact combination of
        // null vectors; the left vectors of a thin SVD here can drift off it
        let gram = projected.transpose() * &projected;
        let eig = SymmetricEigen::new(gram);
        let mut pord: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        pord.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for &k in pord.iter().take(expected) {
            if eig.eigenvalues[k] > 0.25 {
                let m = &projected * eig.eigenvectors.column(k);
                let mut v: Vec<f64> = (m / eig.eigenvalues[k].sqrt()).iter().copied().collect();
                canonical_sign(&mut v);
                flex_modes.push(v);
            }
        }
    }
    Ok(RigidityReport {
        dof_count: dof_count(framework),
        matrix_rank: rank,
        trivial_motions: t,
        is_isostatic: rank == e && flex_modes.is_empty(),
        flex_modes,
        singular_values: sorted.into_iter().take(e.min(cols)).collect(),
    })
}

fn canonical_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-9 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Largest `|(p_i - p_j) . (m_i - m_j)|` over bars, relative to `|p_i - p_j|`.
pub fn mode_residual(framework: &Framework, mode: &[f64]) -> f64 {
    let v = DVector::from_column_slice(mode);
    let r = rigidity_matrix(framework) * v;
    framework
        .bars()
        .iter()
        .zip(r.iter())
        .map(|(&(i, j), x)| x.abs() / (framework.joints()[i] - framework.joints()[j]).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::closed_outward;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    fn tetra() -> Framework {
        let v = vec![p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(0., 0., 1.)];
        Framework::new(v, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap()
    }

    fn octahedron() -> TriMesh {
        let v = vec![
            p(1., 0., 0.),
            p(-1., 0., 0.),
            p(0., 1., 0.),
            p(0., -1., 0.),
            p(0., 0., 1.),
            p(0., 0., -1.),
        ];
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
        closed_outward(v, &f).unwrap()
    }

    #[test]
    fn dof_counts() {
        assert_eq!(dof_count(&Framework::from_mesh(&octahedron())), 6);
        let quad = Framework::new(
            vec![p(0., 0., 0.), p(1., 0., 0.), p(1., 1., 0.), p(0., 1., 0.3)],
            vec![(0, 1), (1, 2), (2, 3), (3, 0)],
        )
        .unwrap();
        assert_eq!(dof_count(&quad), 8);
        let bar = Framework::new(vec![p(0., 0., 0.), p(1., 0., 0.)], vec![(0, 1)]).unwrap();
        assert_eq!(dof_count(&bar), 5);
    }

    #[test]
    fn single_bar_row() {
        let bar = Framework::new(vec![p(1., 0., 0.), p(0., 0., 0.)], vec![(0, 1)]).unwrap();
        let m = rigidity_matrix(&bar);
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![1., 0., 0., -1., 0., 0.]);
    }

    #[test]
    fn tetrahedron_is_isostatic() {
        let r = analyze(&tetra(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.matrix_rank, 6);
        assert_eq!(r.trivial_motions, 6);
        assert!(r.flex_modes.is_empty() && r.is_isostatic);
    }

    #[test]
    fn octahedron_is_rigid() {
        let r = analyze(&Framework::from_mesh(&octahedron()), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.matrix_rank, 12);
        assert!(r.is_isostatic);
    }

    #[test]
    fn removing_a_bar_frees_one_mode() {
        let fw = Framework::from_mesh(&octahedron()).without_bar(0, 2);
        let r = analyze(&fw, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.flex_modes.len(), 1);
        assert!(mode_residual(&fw, &r.flex_modes[0]) < 1e-9);
    }

    #[test]
    fn collinear_joints_have_five_trivial_motions() {
        let fw = Framework::new(
            vec![p(0., 0., 0.), p(1., 0., 0.), p(2., 0., 0.)],
            vec![(0, 1), (1, 2)],
        )
        .unwrap();
        let r = analyze(&fw, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.trivial_motions, 5);
        // the middle joint can move sideways (2 directions) and the chain can bend
        assert_eq!(r.flex_modes.len(), 9 - r.matrix_rank - 5);
    }

    #[test]
    fn coincident_joints_are_degenerate() {
        let fw = Framework::new(vec![p(1., 1., 1.), p(1., 1., 1.)], vec![]).unwrap();
        assert!(matches!(analyze(&fw, 1e-8), Err(Error::Degenerate(_))));
        assert!(analyze(&tetra(), 0.1).is_err());
    }

    #[test]
    fn invalid_frameworks() {
        assert!(Framework::new(vec![p(0., 0., 0.), p(1., 0., 0.)], vec![(0, 0)]).is_err());
        assert!(Framework::new(vec![p(0., 0., 0.), p(1., 0., 0.)], vec![(0, 1), (1, 0)]).is_err());
    }
}

mod common;

use common::{closed_models, motion, rel_close, twins};
use proptest::prelude::*;
use twinflex_core::geom::{edge_lengths, mesh_stats, signed_volume};
use twinflex_core::rigidity::{analyze, mode_residual, Framework, DEFAULT_RANK_TOL};
use twinflex_core::twinning::catalog::random_hull;

#[test]
fn closed_catalog_models_are_spheres() {
    for (name, m) in closed_models() {
        let s = mesh_stats(m.mesh());
        assert_eq!(s.euler_characteristic, 2, "{name}");
        assert_eq!(3 * s.f, 2 * s.e, "{name}");
        assert!(s.is_triangulated_sphere, "{name}");
    }
}

#[test]
fn twins_flex_and_seeds_do_not() {
    for (name, m) in twins() {
        let r = analyze(&Framework::from_mesh(m.mesh()), DEFAULT_RANK_TOL).unwrap();
        assert!(r.num_flex_modes() >= 1, "{name}");
    }
    for name in ["tetrahedron", "octahedron", "cube", "pyramid"] {
        let m = twinflex_core::twinning::catalog::build_default(name).unwrap();
        if !m.mesh().is_closed() {
            continue;
        }
        let r = analyze(&Framework::from_mesh(m.mesh()), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.num_flex_modes(), 0, "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn volume_and_lengths_survive_rigid_motion(n in 5usize..20, seed in 0u64..1000, m in motion()) {
        let mesh = random_hull(n, seed).unwrap();
        let moved = m.mesh(&mesh);
        let (v0, v1) = (signed_volume(&mesh).unwrap(), signed_volume(&moved).unwrap());
        prop_assert!(rel_close(v0, v1, 1e-12), "{v0} vs {v1}");
        let (l0, l1) = (edge_lengths(&mesh).unwrap(), edge_lengths(&moved).unwrap());
        for ((e0, a), (e1, b)) in l0.iter().zip(l1.iter()) {
            prop_assert_eq!(e0, e1);
            prop_assert!(rel_close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn volume_negates_when_flipped(n in 5usize..20, seed in 0u64..1000) {
        let mesh = random_hull(n, seed).unwrap();
        let v = signed_volume(&mesh).unwrap();
        prop_assert!(v > 0.0);
        prop_assert_eq!(signed_volume(&mesh.flipped()).unwrap(), -v);
    }

    #[test]
    fn rank_is_invariant_under_rigid_motion(n in 5usize..16, seed in 0u64..1000, m in motion(), drop in 0usize..100) {
        let mesh = random_hull(n, seed).unwrap();
        let fw = Framework::from_mesh(&mesh);
        let (a, b) = fw.bars()[drop % fw.bars().len()];
        for fw in [fw.clone(), fw.without_bar(a, b)] {
            let moved = fw.at(m.apply_all(fw.joints()));
            let (r0, r1) = (analyze(&fw, DEFAULT_RANK_TOL).unwrap(), analyze(&moved, DEFAULT_RANK_TOL).unwrap());
            prop_assert_eq!(r0.matrix_rank, r1.matrix_rank);
            prop_assert_eq!(r0.num_flex_modes(), r1.num_flex_modes());
        }
    }

    #[test]
    fn flex_modes_annihilate_the_rigidity_matrix(seed in 0u64..1000, drop in 0usize..100) {
        let mesh = random_hull(9, seed).unwrap();
        let fw = Framework::from_mesh(&mesh);
        let (a, b) = fw.bars()[drop % fw.bars().len()];
        let fw = fw.without_bar(a, b);
        let r = analyze(&fw, DEFAULT_RANK_TOL).unwrap();
        prop_assert_eq!(r.num_flex_modes(), 1);
        for mode in &r.flex_modes {
            prop_assert!(mode_residual(&fw, mode) <= 1e-9);
        }
    }
}

#[test]
fn twin_flex_modes_annihilate_the_rigidity_matrix() {
    for (name, m) in twins() {
        let fw = Framework::from_mesh(m.mesh());
        let r = analyze(&fw, DEFAULT_RANK_TOL).unwrap();
        for mode in &r.flex_modes {
            assert!(mode_residual(&fw, mode) <= 1e-9, "{name}");
        }
    }
}

mod common;

use common::motion;
use proptest::prelude::*;
use twinflex_core::flexion::{trace_auto, TraceOptions};
use twinflex_core::geom::bbox_diameter;
use twinflex_core::netexport::{export_svg, unfold, unfold_with_tree, Fold, SvgOptions};
use twinflex_core::twinning::catalog::{build, build_default, crinkle_fan_tree, models, preset, random_hull};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hull_nets_are_congruent_and_refold(n in 4usize..30, seed in 0u64..10_000, root in 0usize..100, mv in motion()) {
        let hull = mv.mesh(&random_hull(n, seed).unwrap());
        let coords = hull.vertices();
        let net = unfold(&hull, coords, Some(root % hull.faces().len())).unwrap();
        prop_assert!(net.congruence_error(coords) < 1e-9);
        prop_assert!(net.refold_residual(coords) < 1e-7 * bbox_diameter(coords));
        // convex: every crease is a mountain
        prop_assert!(net.creases.iter().all(|c| c.fold == Fold::Mountain));
        prop_assert_eq!(net.creases.len() + 1, hull.faces().len());
        prop_assert_eq!(net.creases.len() + net.cuts.len(), hull.num_edges());
    }
}

#[test]
fn catalog_nets_along_flexes() {
    for spec in models() {
        let m = build_default(spec.name).unwrap();
        let mut frames = vec![m.mesh().vertices().to_vec()];
        if let Some(problem) = m.flex_problem(None).unwrap() {
            if let Ok(path) = trace_auto(&problem, m.mesh().vertices(), 5, &TraceOptions::default()) {
                frames.extend(path.frames.into_iter().map(|f| f.vertices));
            }
        }
        for coords in &frames {
            let net = unfold(m.mesh(), coords, None).unwrap();
            let d = bbox_diameter(coords);
            assert!(net.congruence_error(coords) < 1e-9, "{}", spec.name);
            assert!(net.refold_residual(coords) < 1e-7 * d, "{}", spec.name);
        }
    }
}

#[test]
fn flat_new_crinkle_net_has_no_overlaps() {
    let m = build("new_crinkle", &preset("new_crinkle", "flat_laying").unwrap()).unwrap();
    let mesh = m.mesh();
    let (root, tree) = crinkle_fan_tree(mesh).unwrap();
    let net = unfold_with_tree(mesh, mesh.vertices(), root, &tree).unwrap();
    assert!(net.overlaps.is_empty(), "{:?}", net.overlaps);
    assert!(net.congruence_error(mesh.vertices()) < 1e-9);
    assert!(net.refold_residual(mesh.vertices()) < 1e-7);
    assert_eq!(net.creases.len() + net.cuts.len() + net.boundary.len(), mesh.num_edges());
    assert!(export_svg(&net, &SvgOptions::default()).unwrap().contains("<svg"));
}

#[test]
fn explicit_trees_must_span() {
    let m = build("new_crinkle", &preset("new_crinkle", "flat_laying").unwrap()).unwrap();
    let (root, tree) = crinkle_fan_tree(m.mesh()).unwrap();
    assert!(unfold_with_tree(m.mesh(), m.mesh().vertices(), root, &tree[1..]).is_err());
    assert!(crinkle_fan_tree(random_hull(8, 0).as_ref().unwrap()).is_err());
}

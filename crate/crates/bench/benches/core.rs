use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use twinflex_bench::{hull, model, problem};
use twinflex_core::collision::{default_eps, self_intersections, self_intersections_brute};
use twinflex_core::flexion::{trace_range, TraceOptions};
use twinflex_core::netexport::unfold;
use twinflex_core::rigidity::{analyze, Framework, DEFAULT_RANK_TOL};

fn rigidity(c: &mut Criterion) {
    let mut group = c.benchmark_group("analyze");
    for n in [8, 14, 40] {
        let fw = Framework::from_mesh(&hull(n, 3));
        group.bench_with_input(BenchmarkId::new("hull", n), &fw, |b, fw| {
            b.iter(|| analyze(black_box(fw), DEFAULT_RANK_TOL).unwrap())
        });
    }
    let fw = Framework::from_mesh(model("star_dodecahedron").mesh());
    group.bench_function("star_dodecahedron", |b| {
        b.iter(|| analyze(black_box(&fw), DEFAULT_RANK_TOL).unwrap())
    });
    group.finish();
}

fn trace(c: &mut Criterion) {
    let mut group = c.benchmark_group("trace");
    group.sample_size(10);
    for name in ["bricard1", "twinned_anticupola"] {
        let (m, p) = problem(name);
        let start = m.mesh().vertices().to_vec();
        let t0 = p.driver_values(&start)[0];
        group.bench_function(BenchmarkId::new(name, "50 frames"), |b| {
            b.iter(|| trace_range(&p, &start, t0, 1.05 * t0, 50, &TraceOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn collision(c: &mut Criterion) {
    let mut group = c.benchmark_group("self_intersections");
    for n in [20, 80] {
        let mesh = hull(n, 5);
        let eps = default_eps(mesh.vertices());
        group.bench_with_input(BenchmarkId::new("sweep", n), &mesh, |b, m| {
            b.iter(|| self_intersections(m, m.vertices(), eps).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("brute", n), &mesh, |b, m| {
            b.iter(|| self_intersections_brute(m, m.vertices(), eps).unwrap())
        });
    }
    let star = model("star_dodecahedron");
    let m = star.mesh();
    group.bench_function("star_dodecahedron", |b| {
        b.iter(|| self_intersections(m, m.vertices(), default_eps(m.vertices())).unwrap())
    });
    group.finish();
}

fn nets(c: &mut Criterion) {
    let mut group = c.benchmark_group("unfold");
    for n in [14, 60] {
        let mesh = hull(n, 7);
        group.bench_with_input(BenchmarkId::new("hull", n), &mesh, |b, m| {
            b.iter(|| unfold(m, m.vertices(), None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, rigidity, trace, collision, nets);
criterion_main!(benches);

use std::hint::black_box;

use acl_core::decomposition::{certify_geometric, decompose};
use acl_core::extremal::compute_cm;
use acl_core::jacobian::{assemble_g_sigma, count_preimages_2d, BiPoly};
use acl_core::refinement::chart::{select_case, SigmaChart};
use acl_core::refinement::useq::build_u_sequence;
use acl_core::refinement::{random_instance, RefineConfig};
use acl_core::{PolyCurve, PreColor, WeightedMeasure};
use criterion::{criterion_group, criterion_main, Criterion};

fn operator(c: &mut Criterion) {
    let curve = PolyCurve::moment(2);
    let measure = WeightedMeasure::moment(2);
    let cfg = RefineConfig::for_dim(2);
    let op = cfg.operator(&curve, &measure);
    let (e, f) = random_instance(&op, 1, 0).unwrap();
    c.bench_function("apply_set d=2 64²×16", |b| b.iter(|| op.apply_set(black_box(&e))));
    c.bench_function("adjoint_set d=2 64²×16", |b| b.iter(|| op.adjoint_set(black_box(&f))));
    c.bench_function("u_sequence d=2", |b| b.iter(|| build_u_sequence(&op, &measure, &e, &f).unwrap()));
}

fn jacobians(c: &mut Criterion) {
    let curve = PolyCurve::moment(3);
    let pre = [PreColor::PreAchromatic, PreColor::PreRed, PreColor::PreAchromatic, PreColor::PreRed];
    let chart = SigmaChart::new(select_case(&pre, 3).unwrap(), &curve, &[0.1, 0.2, 0.3], 1.2, 0.05, 0.0, vec![]);
    c.bench_function("assemble_g_sigma model chart", |b| {
        b.iter(|| assemble_g_sigma(&curve, &chart, black_box(&[1.4]), black_box(&[0.3, 0.8])).unwrap())
    });
    let sx = BiPoly::new(vec![vec![0.0], vec![0.0], vec![1.0]]);
    let sy = BiPoly::new(vec![vec![0.0, 0.0, 1.0]]);
    c.bench_function("count_preimages_2d squares", |b| {
        b.iter(|| count_preimages_2d((&sx, &sy), black_box([1.0, 1.0]), 32).unwrap())
    });
}

fn constants(c: &mut Criterion) {
    let mut g = c.benchmark_group("constants");
    g.sample_size(10);
    g.bench_function("compute_cm M=4", |b| b.iter(|| compute_cm(black_box(4), 256, 6).unwrap()));
    let curve = PolyCurve::from_int_rows(&[&[0, 1, 0, 1], &[0, 0, 1, 0, -1]]).unwrap();
    let pieces = decompose(&curve, 8.0, 64).unwrap();
    g.bench_function("certify_geometric 1e4 samples", |b| {
        b.iter(|| certify_geometric(&curve, &pieces[0], 10_000, 3).unwrap())
    });
    g.finish();
}

criterion_group!(benches, operator, jacobians, constants);
criterion_main!(benches);

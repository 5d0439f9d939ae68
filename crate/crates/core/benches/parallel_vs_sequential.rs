use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use shrinkstab::basis::BasisOptions;
use shrinkstab::models::ShrinkerModel;
use shrinkstab::par;
use shrinkstab::quadrature::{build_grid, Resolution};
use shrinkstab::spectrum::{assemble, OperatorKind};
use shrinkstab::variation::{random_field, second_variation, NormalVariation};

fn modes() -> [(&'static str, bool); 2] {
    [("sequential", true), ("parallel", false)]
}

fn bench_assembly(c: &mut Criterion) {
    let grid = build_grid(&ShrinkerModel::clifford_torus().unwrap(), Resolution::uniform(24), 10.0).unwrap();
    let mut group = c.benchmark_group("assemble_full_L_clifford");
    group.sample_size(10);
    for (label, seq) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(label), &seq, |b, &seq| {
            par::force_sequential(seq);
            b.iter(|| assemble(black_box(&grid), OperatorKind::FullL, BasisOptions::default()).unwrap());
        });
    }
    group.finish();
    par::force_sequential(false);
}

fn bench_second_variation(c: &mut Criterion) {
    let grid = build_grid(&ShrinkerModel::cylinder(1, 2, 1).unwrap(), Resolution::uniform(64), 10.0).unwrap();
    let v = NormalVariation::new(random_field(&grid, 1), vec![0.1, -0.2, 0.3], 0.2);
    let mut group = c.benchmark_group("second_variation_cylinder");
    for (label, seq) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(label), &seq, |b, &seq| {
            par::force_sequential(seq);
            b.iter(|| second_variation(black_box(&grid), black_box(&v)).unwrap());
        });
    }
    group.finish();
    par::force_sequential(false);
}

criterion_group!(benches, bench_assembly, bench_second_variation);
criterion_main!(benches);

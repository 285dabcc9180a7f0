use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use msstokes_bench::fixture;
use msstokes_core::mssolver::{solve_multiscale, solve_reference};
use msstokes_core::offline::{assemble_global_offline, reduce_all};
use msstokes_core::snapshots::{build_oversampled_snapshots, build_snapshots, build_standard_snapshots};
use msstokes_core::{DgContext, SnapshotSettings, SpectralVariant};

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    for r in [8, 16] {
        let (mesh, part, _) = fixture(r);
        group.bench_with_input(BenchmarkId::from_parameter(r), &r, |b, _| {
            b.iter(|| DgContext::new(&mesh, &part, 4.0).unwrap().assemble().unwrap())
        });
    }
    group.finish();
}

fn snapshots(c: &mut Criterion) {
    let (mesh, part, _) = fixture(8);
    let mut group = c.benchmark_group("snapshots");
    group.bench_function("standard_block", |b| b.iter(|| build_standard_snapshots(&mesh, &part, 5).unwrap()));
    group.bench_function("oversampled_block", |b| {
        b.iter(|| build_oversampled_snapshots(&mesh, &part, 5, 4, true, 1e-10).unwrap())
    });
    group.finish();
}

fn solves(c: &mut Criterion) {
    let (mesh, part, problem) = fixture(8);
    let ctx = DgContext::new(&mesh, &part, 4.0).unwrap();
    let ops = ctx.assemble().unwrap();
    let snaps = build_snapshots(&mesh, &part, &SnapshotSettings::default()).unwrap();
    let mut group = c.benchmark_group("solve");
    group.sample_size(20);
    group.bench_function("offline_reduce_l8", |b| {
        b.iter(|| reduce_all(&mesh, &part, &ctx.layout, &snaps, &vec![8; snaps.len()], SpectralVariant::Block, 1e-10).unwrap())
    });
    let bases = reduce_all(&mesh, &part, &ctx.layout, &snaps, &vec![8; snaps.len()], SpectralVariant::Block, 1e-10).unwrap();
    let (space, _) = assemble_global_offline(&ctx, &bases).unwrap();
    group.bench_function("multiscale_l8", |b| b.iter(|| solve_multiscale(&ctx, &ops, &space, &problem).unwrap()));
    group.bench_function("reference", |b| b.iter(|| solve_reference(&ctx, &ops, &problem).unwrap()));
    group.finish();
}

criterion_group!(benches, assembly, snapshots, solves);
criterion_main!(benches);

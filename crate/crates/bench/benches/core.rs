use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use spherewaist::equalizer::section_f;
use spherewaist::spatial::KdTree;
use spherewaist::waist::WaistSampler;
use spherewaist::{tube_fraction, CenterMap, MapSpec, RngStream, SampleCloud, TubeSpec};
use spherewaist_bench::{random_partition, uniform_points};

fn tube(c: &mut Criterion) {
    let spec = TubeSpec::new(5, 2, 0.7).unwrap();
    c.bench_function("tube_fraction n=5 k=2", |b| b.iter(|| tube_fraction(black_box(&spec))));
}

fn cells(c: &mut Criterion) {
    let p = random_partition(3, 2, 1);
    let cloud = SampleCloud::antithetic(2, 200_000, RngStream::new(1, 0));
    c.bench_function("leaf_statistics depth=3 200k", |b| {
        b.iter(|| cloud.leaf_statistics(black_box(&p), CenterMap::Centroid))
    });
    let f = MapSpec::projection(2, 1).build().unwrap();
    c.bench_function("section_f depth=2 100k", |b| {
        let p = random_partition(2, 2, 2);
        b.iter(|| section_f(black_box(&p), &f, CenterMap::Centroid, 100_000, RngStream::new(2, 0)).unwrap())
    });
}

fn tubes_of_fibers(c: &mut Criterion) {
    let pts = uniform_points(3, 20_000, 3);
    let tree = KdTree::new(&pts, 4);
    let queries = uniform_points(3, 1_000, 4);
    c.bench_function("kdtree any_within 20k x 1k", |b| {
        b.iter(|| queries.chunks(4).filter(|q| tree.any_within(q, 0.2)).count())
    });
    let f = MapSpec::projection(3, 2).build().unwrap();
    let sampler = WaistSampler::new(&f, 400_000, 20_000, RngStream::new(5, 0));
    c.bench_function("tube_fraction_at S^3->R^2", |b| {
        b.iter(|| sampler.tube_fraction_at(black_box(&[0.0, 0.0]), 0.3, 0.03, 20_000).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = tube, cells, tubes_of_fibers
}
criterion_main!(benches);

//! Fixtures shared by the benchmarks under `benches/`.

use spherewaist::sphere::sample_uniform;
use spherewaist::{OrientedPartition, RngStream};

/// A partition of `S^n` with random normals at every node.
pub fn random_partition(depth: usize, n: usize, seed: u64) -> OrientedPartition {
    let mut rng = RngStream::new(seed, 0xbe).rng();
    let nodes = (1usize << depth) - 1;
    OrientedPartition::new((0..nodes).map(|_| sample_uniform(&mut rng, n)).collect()).expect("valid depth")
}

/// `count` uniform points of `S^n`, flattened.
pub fn uniform_points(n: usize, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed, 0xbf).rng();
    (0..count).flat_map(|_| sample_uniform(&mut rng, n).coords().to_vec()).collect()
}

//! Seeded inputs shared by the benchmarks.

use qgw::harness::{blobs, uniform_cloud};
use qgw::ot::Atoms1D;
use qgw::partitioning::{voronoi_partition, BlockCount, PartitionConfig};
use qgw::{MmSpace, PointedPartition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random 1D atoms with positive masses summing to one.
pub fn atoms(n: usize, seed: u64) -> Atoms1D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Atoms1D::new(positions, raw.iter().map(|m| m / total).collect()).expect("valid atoms")
}

/// Uniform planar cloud.
pub fn planar(n: usize, seed: u64) -> MmSpace {
    MmSpace::from_points(uniform_cloud(n, seed), None).expect("valid cloud")
}

/// Three-cluster blob cloud.
pub fn blob_space(n: usize, seed: u64) -> MmSpace {
    MmSpace::from_points(blobs(n, seed).0, None).expect("valid cloud")
}

pub fn voronoi(space: &MmSpace, m: usize, seed: u64) -> PointedPartition {
    voronoi_partition(space, &PartitionConfig::voronoi(BlockCount::Count(m), seed)).expect("valid partition")
}

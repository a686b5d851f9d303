//! Desk-scale experiment harness: synthetic clouds, the relative-error
//! protocol against a full GW solve, and the scaling/memory sweep.

use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::alloc_probe;
use crate::diagnostics::relative_error;
use crate::error::{Error, Result};
use crate::gw::{solve_gw, GwConfig};
use crate::partitioning::{voronoi_partition, BlockCount, PartitionConfig};
use crate::qgw::{match_qgw, QgwConfig};
use crate::space::MmSpace;

pub const BLOB_CLUSTERS: usize = 3;
pub const BLOB_BOX: f64 = 10.0;
pub const BLOB_SPREAD: f64 = 1.0;

/// Mixes a base seed with experiment coordinates (SplitMix64 finalizer).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Planar Gaussian blobs: 3 clusters with centers uniform in `[0, 10]^2` and
/// unit standard deviation. Points are split as evenly as possible between
/// clusters, in cluster order. Returns coordinates and cluster labels.
pub fn blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<[f64; 2]> = (0..BLOB_CLUSTERS)
        .map(|_| [rng.random_range(0.0..BLOB_BOX), rng.random_range(0.0..BLOB_BOX)])
        .collect();
    let normal = Normal::new(0.0, BLOB_SPREAD).expect("valid spread");
    let mut coords = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    let mut i = 0;
    for (c, center) in centers.iter().enumerate() {
        let size = n / BLOB_CLUSTERS + usize::from(c < n % BLOB_CLUSTERS);
        for _ in 0..size {
            coords[[i, 0]] = center[0] + normal.sample(&mut rng);
            coords[[i, 1]] = center[1] + normal.sample(&mut rng);
            labels.push(c);
            i += 1;
        }
    }
    (coords, labels)
}

/// Points uniform in the unit square.
pub fn uniform_cloud(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, 2), || rng.random::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelErrRow {
    pub n: usize,
    pub method: &'static str,
    pub sample_frac: f64,
    pub trial: usize,
    pub m: usize,
    /// GW loss of the qGW coupling.
    pub loss: f64,
    pub relative_error: Option<f64>,
    pub reference_loss: f64,
    pub product_loss: f64,
    pub seconds: f64,
    pub peak_values_allocated: Option<usize>,
}

pub const RELERR_HEADER: [&str; 11] = [
    "N",
    "method",
    "sample_frac",
    "trial",
    "m",
    "loss",
    "relative_error",
    "reference_loss",
    "product_loss",
    "seconds",
    "peak_values_allocated",
];

/// Relative-error protocol: two independent blob clouds of size `N` per
/// trial, qGW with Voronoi partitions at each sampling fraction, compared
/// against a full conditional-gradient GW solve from the product coupling.
pub fn relerr_suite(sizes: &[usize], fracs: &[f64], trials: usize, seed: u64) -> Result<Vec<RelErrRow>> {
    let mut rows = Vec::new();
    for &n in sizes {
        for trial in 0..trials {
            let s = derive_seed(seed, &[n as u64, trial as u64]);
            let x = MmSpace::from_points(blobs(n, derive_seed(s, &[0])).0, None)?;
            let y = MmSpace::from_points(blobs(n, derive_seed(s, &[1])).0, None)?;
            let dx = x.distance_matrix()?;
            let dy = y.distance_matrix()?;
            let reference = solve_gw(dx.view(), dy.view(), x.measure(), y.measure(), &GwConfig::default())?;
            for (k, &frac) in fracs.iter().enumerate() {
                let probe = alloc_probe::is_installed();
                if probe {
                    alloc_probe::reset(usize::MAX);
                }
                let base = alloc_probe::stats().current;
                let start = Instant::now();
                let size = BlockCount::Fraction(frac);
                let px = voronoi_partition(&x, &PartitionConfig::voronoi(size, derive_seed(s, &[2, k as u64])))?;
                let py = voronoi_partition(&y, &PartitionConfig::voronoi(size, derive_seed(s, &[3, k as u64])))?;
                let config = QgwConfig {
                    diagnostics: false,
                    ..QgwConfig::default()
                };
                let (qc, _) = match_qgw(&x, &px, &y, &py, &config)?;
                let seconds = start.elapsed().as_secs_f64();
                let peak = probe.then(|| alloc_probe::stats().peak.saturating_sub(base) / 8);
                let dense = qc.densify_small()?;
                let rel = relative_error(dx.view(), dy.view(), dense.view(), reference.coupling.view())?;
                rows.push(RelErrRow {
                    n,
                    method: "qgw",
                    sample_frac: frac,
                    trial,
                    m: px.len(),
                    loss: rel.qgw_loss,
                    relative_error: rel.value,
                    reference_loss: rel.reference_loss,
                    product_loss: rel.product_loss,
                    seconds,
                    peak_values_allocated: peak,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub method: &'static str,
    pub m: usize,
    /// GW loss of the global coupling on the representatives.
    pub loss: f64,
    /// Fastest of the repetitions, partitioning included.
    pub seconds: f64,
    pub peak_values_allocated: Option<usize>,
    pub max_single_allocation_values: Option<usize>,
    /// Allocations of at least `N * N` values; must be zero.
    pub nxn_allocations: Option<usize>,
}

pub const SCALING_HEADER: [&str; 8] = [
    "N",
    "method",
    "m",
    "loss",
    "seconds",
    "peak_values_allocated",
    "max_single_allocation_values",
    "nxn_allocations",
];

/// Scaling sweep: uniform planar clouds with `m = ceil(N^(1/3))`.
pub fn scaling_suite(sizes: &[usize], repetitions: usize, seed: u64) -> Result<Vec<ScalingRow>> {
    if repetitions == 0 {
        return Err(Error::invalid("repetitions must be positive"));
    }
    let mut rows = Vec::new();
    for &n in sizes {
        let s = derive_seed(seed, &[n as u64]);
        let x = MmSpace::from_points(uniform_cloud(n, derive_seed(s, &[0])), None)?;
        let y = MmSpace::from_points(uniform_cloud(n, derive_seed(s, &[1])), None)?;
        let m = scaling_blocks(n);
        let probe = alloc_probe::is_installed();
        let mut best = f64::INFINITY;
        let mut loss = 0.0;
        let (mut peak, mut single, mut hits) = (0usize, 0usize, 0usize);
        for _ in 0..repetitions {
            let watch = n.saturating_mul(n).saturating_mul(std::mem::size_of::<f64>());
            alloc_probe::reset(watch);
            let base = alloc_probe::stats().current;
            let start = Instant::now();
            let px = voronoi_partition(&x, &PartitionConfig::voronoi(BlockCount::Count(m), derive_seed(s, &[2])))?;
            let py = voronoi_partition(&y, &PartitionConfig::voronoi(BlockCount::Count(m), derive_seed(s, &[3])))?;
            let config = QgwConfig {
                diagnostics: false,
                ..QgwConfig::default()
            };
            let (_, report) = match_qgw(&x, &px, &y, &py, &config)?;
            best = best.min(start.elapsed().as_secs_f64());
            let st = alloc_probe::stats();
            peak = peak.max(st.peak.saturating_sub(base));
            single = single.max(st.max_single);
            hits += st.watch_hits;
            loss = report.global.loss;
        }
        rows.push(ScalingRow {
            n,
            method: "qgw",
            m,
            loss,
            seconds: best,
            peak_values_allocated: probe.then_some(peak / 8),
            max_single_allocation_values: probe.then_some(single / 8),
            nxn_allocations: probe.then_some(hits),
        });
    }
    Ok(rows)
}

/// `ceil(N^(1/3))`, exact for perfect cubes.
pub fn scaling_blocks(n: usize) -> usize {
    let mut m = (n as f64).cbrt().round() as usize;
    while m.pow(3) < n {
        m += 1;
    }
    while m > 1 && (m - 1).pow(3) >= n {
        m -= 1;
    }
    m.max(1)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_relerr_csv<W: Write>(out: W, rows: &[RelErrRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RELERR_HEADER).map_err(csv_io)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.method.to_string(),
            r.sample_frac.to_string(),
            r.trial.to_string(),
            r.m.to_string(),
            r.loss.to_string(),
            opt(r.relative_error),
            r.reference_loss.to_string(),
            r.product_loss.to_string(),
            r.seconds.to_string(),
            opt(r.peak_values_allocated),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scaling_csv<W: Write>(out: W, rows: &[ScalingRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCALING_HEADER).map_err(csv_io)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.method.to_string(),
            r.m.to_string(),
            r.loss.to_string(),
            r.seconds.to_string(),
            opt(r.peak_values_allocated),
            opt(r.max_single_allocation_values),
            opt(r.nxn_allocations),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

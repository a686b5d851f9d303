//! Finite metric measure spaces.
//!
//! A space pairs a distance oracle with a probability measure. Three oracles
//! are supported: a dense symmetric matrix, Euclidean point coordinates and
//! graph geodesics. Euclidean and graph spaces compute distances on demand,
//! so matching never needs the full N x N matrix.

mod graph;
mod partition;

pub use graph::Graph;
pub use partition::{
    quantized_representation, radial_profile, radial_profiles, BlockRadialProfile,
    PointedPartition, QuantizedRepresentation,
};

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{accurate_sum, normalize};

/// Default size above which no N x N matrix is materialized for lazy spaces.
pub const DEFAULT_DENSE_THRESHOLD: usize = 5000;

const TRIANGLE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Dense,
    Euclidean,
    Graph,
}

/// Construction options shared by all space kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceOptions {
    /// Accept points with zero mass. They stay in their blocks but carry no
    /// coupling mass.
    pub allow_zero_mass: bool,
    /// Replace unreachable graph distances by `c * (max finite distance)`.
    pub inf_replace: Option<f64>,
    /// Largest size for which lazy spaces may materialize a full matrix.
    pub dense_threshold: usize,
}

impl Default for SpaceOptions {
    fn default() -> Self {
        SpaceOptions {
            allow_zero_mass: false,
            inf_replace: None,
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone)]
enum Metric {
    Dense(Array2<f64>),
    Euclidean(Array2<f64>),
    Graph(Graph),
}

/// A finite metric measure space.
#[derive(Debug, Clone)]
pub struct MmSpace {
    metric: Metric,
    measure: Vec<f64>,
    options: SpaceOptions,
}

impl MmSpace {
    /// Euclidean space on the rows of `coords` (N x d).
    pub fn from_points(coords: Array2<f64>, weights: Option<&[f64]>) -> Result<Self> {
        Self::from_points_with(coords, weights, SpaceOptions::default())
    }

    pub fn from_points_with(
        coords: Array2<f64>,
        weights: Option<&[f64]>,
        options: SpaceOptions,
    ) -> Result<Self> {
        let (n, d) = coords.dim();
        if n == 0 || d == 0 {
            return Err(Error::invalid("point cloud is empty"));
        }
        if let Some(bad) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate at point {}",
                bad / d
            )));
        }
        let measure = build_measure(n, weights, &options)?;
        Ok(MmSpace {
            metric: Metric::Euclidean(coords),
            measure,
            options,
        })
    }

    /// Graph space on `n` nodes; geodesics are computed lazily.
    pub fn from_graph(
        n: usize,
        edges: &[(usize, usize, f64)],
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        Self::from_graph_with(n, edges, weights, SpaceOptions::default())
    }

    pub fn from_graph_with(
        n: usize,
        edges: &[(usize, usize, f64)],
        weights: Option<&[f64]>,
        options: SpaceOptions,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("graph has no nodes"));
        }
        if let Some(c) = options.inf_replace {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::invalid("inf_replace factor must be positive"));
            }
        }
        let graph = Graph::new(n, edges)?;
        let measure = build_measure(n, weights, &options)?;
        Ok(MmSpace {
            metric: Metric::Graph(graph),
            measure,
            options,
        })
    }

    /// Space given by an explicit distance matrix.
    ///
    /// The matrix must be finite, nonnegative, symmetric (to 1e-9 relative,
    /// then symmetrized exactly) with zero diagonal. The triangle inequality
    /// is checked on sampled triples.
    pub fn from_distance_matrix(dist: Array2<f64>, weights: Option<&[f64]>) -> Result<Self> {
        Self::from_distance_matrix_with(dist, weights, SpaceOptions::default())
    }

    pub fn from_distance_matrix_with(
        mut dist: Array2<f64>,
        weights: Option<&[f64]>,
        options: SpaceOptions,
    ) -> Result<Self> {
        let (n, k) = dist.dim();
        if n == 0 {
            return Err(Error::invalid("distance matrix is empty"));
        }
        if n != k {
            return Err(Error::DimensionMismatch(format!(
                "distance matrix is {n}x{k}"
            )));
        }
        let scale = dist.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let tol = 1e-9 * scale.max(1.0);
        for i in 0..n {
            if dist[[i, i]] != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let (a, b) = (dist[[i, j]], dist[[j, i]]);
                if !a.is_finite() || !b.is_finite() || a < 0.0 || b < 0.0 {
                    return Err(Error::invalid(format!(
                        "invalid distance at ({i}, {j})"
                    )));
                }
                if (a - b).abs() > tol {
                    return Err(Error::invalid(format!("asymmetric at ({i}, {j})")));
                }
                let avg = 0.5 * (a + b);
                dist[[i, j]] = avg;
                dist[[j, i]] = avg;
            }
        }
        if n >= 3 {
            let mut rng = ChaCha8Rng::seed_from_u64(0x7121);
            for _ in 0..TRIANGLE_SAMPLES {
                let (i, j, l) = (
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                );
                if dist[[i, l]] > dist[[i, j]] + dist[[j, l]] + tol {
                    return Err(Error::invalid(format!(
                        "triangle inequality fails on ({i}, {j}, {l})"
                    )));
                }
            }
        }
        let measure = build_measure(n, weights, &options)?;
        Ok(MmSpace {
            metric: Metric::Dense(dist),
            measure,
            options,
        })
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measure.is_empty()
    }

    pub fn kind(&self) -> SpaceKind {
        match self.metric {
            Metric::Dense(_) => SpaceKind::Dense,
            Metric::Euclidean(_) => SpaceKind::Euclidean,
            Metric::Graph(_) => SpaceKind::Graph,
        }
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn options(&self) -> &SpaceOptions {
        &self.options
    }

    pub fn graph(&self) -> Option<&Graph> {
        match &self.metric {
            Metric::Graph(g) => Some(g),
            _ => None,
        }
    }

    pub fn coordinates(&self) -> Option<&Array2<f64>> {
        match &self.metric {
            Metric::Euclidean(c) => Some(c),
            _ => None,
        }
    }

    /// Returns a copy of the space carrying a different measure.
    pub fn with_measure(&self, weights: &[f64]) -> Result<Self> {
        let measure = build_measure(self.len(), Some(weights), &self.options)?;
        Ok(MmSpace {
            metric: self.metric.clone(),
            measure,
            options: self.options,
        })
    }

    /// Returns a copy of the space with all distances multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::invalid("scale must be positive"));
        }
        let metric = match &self.metric {
            Metric::Dense(d) => Metric::Dense(d * c),
            Metric::Euclidean(x) => Metric::Euclidean(x * c),
            Metric::Graph(_) => {
                return Err(Error::invalid("scaling graph spaces is not supported"))
            }
        };
        Ok(MmSpace {
            metric,
            measure: self.measure.clone(),
            options: self.options,
        })
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Distance between two points. For graphs this runs a shortest-path
    /// search from the lower index, so the result is exactly symmetric.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Ok(0.0);
        }
        let (a, b) = (i.min(j), i.max(j));
        match &self.metric {
            Metric::Dense(d) => Ok(d[[a, b]]),
            Metric::Euclidean(x) => Ok(euclid(x.row(a), x.row(b))),
            Metric::Graph(_) => Ok(self.rep_row_distances(a, &[b])?[0]),
        }
    }

    /// Distances from `rep` to each of `targets`.
    ///
    /// Graph spaces run one shortest-path search that stops as soon as all
    /// targets are settled. Memory is O(N) for the search state.
    pub fn rep_row_distances(&self, rep: usize, targets: &[usize]) -> Result<Vec<f64>> {
        self.check_index(rep)?;
        for &t in targets {
            self.check_index(t)?;
        }
        match &self.metric {
            Metric::Dense(d) => Ok(targets.iter().map(|&t| d[[rep, t]]).collect()),
            Metric::Euclidean(x) => {
                let r = x.row(rep);
                Ok(targets.iter().map(|&t| euclid(r, x.row(t))).collect())
            }
            Metric::Graph(g) => {
                let dist = g.dijkstra(rep, Some(targets));
                self.resolve_unreachable(rep, targets, &dist)
            }
        }
    }

    /// Distances from `source` to every point.
    pub fn distances_from(&self, source: usize) -> Result<Vec<f64>> {
        self.check_index(source)?;
        match &self.metric {
            Metric::Dense(d) => Ok(d.row(source).to_vec()),
            Metric::Euclidean(x) => {
                let r = x.row(source);
                Ok(x.rows().into_iter().map(|row| euclid(r, row)).collect())
            }
            Metric::Graph(g) => {
                let dist = g.dijkstra(source, None);
                let all: Vec<usize> = (0..self.len()).collect();
                self.resolve_unreachable(source, &all, &dist)
            }
        }
    }

    fn resolve_unreachable(&self, source: usize, targets: &[usize], dist: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(targets.len());
        let mut max_finite: Option<f64> = None;
        for &t in targets {
            let d = dist[t];
            if d.is_finite() {
                out.push(d);
                continue;
            }
            let c = self.options.inf_replace.ok_or(Error::Disconnected { from: source, target: t })?;
            let m = *max_finite.get_or_insert_with(|| {
                dist.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max)
            });
            out.push(c * m);
        }
        Ok(out)
    }

    /// Full N x N distance matrix. Lazy spaces refuse above the configured
    /// dense threshold.
    pub fn distance_matrix(&self) -> Result<Array2<f64>> {
        let n = self.len();
        if let Metric::Dense(d) = &self.metric {
            return Ok(d.clone());
        }
        if n > self.options.dense_threshold {
            return Err(Error::SizeCap {
                what: "full distance matrix",
                size: n,
                cap: self.options.dense_threshold,
            });
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| self.distances_from(i))
            .collect::<Result<_>>()?;
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            out[[i, i]] = 0.0;
            for j in (i + 1)..n {
                // upper triangle from the lower index, mirrored
                out[[i, j]] = rows[i][j];
                out[[j, i]] = rows[i][j];
            }
        }
        Ok(out)
    }
}

fn euclid(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn build_measure(n: usize, weights: Option<&[f64]>, options: &SpaceOptions) -> Result<Vec<f64>> {
    let Some(w) = weights else {
        return Ok(vec![1.0 / n as f64; n]);
    };
    if w.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {n} points",
            w.len()
        )));
    }
    if let Some(i) = w.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("invalid weight at point {i}")));
    }
    if !options.allow_zero_mass {
        if let Some(i) = w.iter().position(|&v| v == 0.0) {
            return Err(Error::invalid(format!("point {i} has zero mass")));
        }
    }
    let measure = normalize(w).ok_or_else(|| Error::invalid("weights sum to zero"))?;
    debug_assert!((accurate_sum(measure.iter().copied()) - 1.0).abs() < 1e-12);
    Ok(measure)
}

//! Quantized (fused) GW matching: global alignment of representatives,
//! local linear matchings between block pairs, and the assembled sparse
//! quantization coupling.

use std::ops::Range;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::diagnostics::{bound_report, BoundReport};
use crate::error::{Error, Result};
use crate::gw::{gw_loss, gw_loss_sparse, solve_fgw, solve_gw, GwConfig, GwSolution};
use crate::ot::{network_simplex, solve_1d_ot, Atoms1D, DiscreteCoupling, SparsePlan, DEFAULT_MAX_PIVOTS};
use crate::report::{ChainCheck, FeatureMatchingReport, GlobalReport, LocalReport, MatchReport, ReportParams, SideReport, Timings};
use crate::space::{quantized_representation, radial_profiles, BlockRadialProfile, MmSpace, PointedPartition, SpaceKind};
use crate::util::argmax_lowest;

/// Largest `N_X * N_Y` for which dense couplings and full losses are formed.
pub const DENSE_CAP: usize = 1_000_000;

/// Block size up to which the local feature matching is solved exactly.
pub const EXACT_FEATURE_BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct QgwConfig {
    pub gw: GwConfig,
    /// Global metric/feature blend (qFGW only).
    pub alpha: f64,
    /// Local metric/feature blend (qFGW only).
    pub beta: f64,
    /// Global coupling entries at or below this are dropped before the
    /// local step; the rest is renormalized to total mass 1.
    pub support_threshold: f64,
    /// Compute the full coupling loss (small inputs), eccentricities, block
    /// diameters and bound values.
    pub diagnostics: bool,
}

impl Default for QgwConfig {
    fn default() -> Self {
        QgwConfig {
            gw: GwConfig::default(),
            alpha: 0.0,
            beta: 0.0,
            support_threshold: 1e-12,
            diagnostics: true,
        }
    }
}

impl QgwConfig {
    pub fn validate(&self) -> Result<()> {
        self.gw.validate()?;
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.support_threshold >= 0.0) {
            return Err(Error::invalid("support threshold must be nonnegative"));
        }
        Ok(())
    }
}

/// Sparse coupling `sum_{p,q} mu_m(p, q) * local_{p,q}` where each local plan
/// couples the normalized block measures in block-local indices.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationCoupling {
    global: SparsePlan,
    locals: Vec<SparsePlan>,
    source: PointedPartition,
    target: PointedPartition,
}

/// One expanded coupling row as `(target index, mass)` pairs sorted by target.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedRow {
    /// Coupling entries; they sum to the source point's mass.
    pub raw: Vec<(usize, f64)>,
    /// The same row scaled to sum to 1 (empty for a zero-mass point).
    pub normalized: Vec<(usize, f64)>,
}

impl QuantizationCoupling {
    /// Assembles a coupling; `locals[t]` belongs to the `t`-th global triplet.
    pub fn from_parts(
        global: SparsePlan,
        locals: Vec<SparsePlan>,
        source: PointedPartition,
        target: PointedPartition,
    ) -> Result<Self> {
        if locals.len() != global.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} global entries but {} local plans",
                global.len(),
                locals.len()
            )));
        }
        for (&(p, q, _), local) in global.triplets().iter().zip(&locals) {
            if p >= source.len() || q >= target.len() {
                return Err(Error::invalid(format!("global entry ({p}, {q}) is outside the partitions")));
            }
            let (nu, nv) = (source.block(p).len(), target.block(q).len());
            if local.triplets().iter().any(|&(i, j, _)| i >= nu || j >= nv) {
                return Err(Error::invalid(format!("local plan ({p}, {q}) indexes outside its blocks")));
            }
        }
        Ok(QuantizationCoupling {
            global,
            locals,
            source,
            target,
        })
    }

    pub fn global(&self) -> &SparsePlan {
        &self.global
    }

    pub fn locals(&self) -> &[SparsePlan] {
        &self.locals
    }

    pub fn source(&self) -> &PointedPartition {
        &self.source
    }

    pub fn target(&self) -> &PointedPartition {
        &self.target
    }

    /// Local plan for block pair `(p, q)`, if that pair is in the support.
    pub fn local(&self, p: usize, q: usize) -> Option<&SparsePlan> {
        self.global
            .triplets()
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&(p, q)))
            .ok()
            .map(|t| &self.locals[t])
    }

    fn global_row(&self, p: usize) -> Range<usize> {
        let t = self.global.triplets();
        let lo = t.partition_point(|&(a, _, _)| a < p);
        let hi = t.partition_point(|&(a, _, _)| a <= p);
        lo..hi
    }

    /// Number of nonzero entries of the expanded coupling.
    pub fn nnz(&self) -> usize {
        self.locals.iter().map(SparsePlan::len).sum()
    }

    /// `sum over supported (p, q) of |U^p| + |V^q| - 1`.
    pub fn support_bound(&self) -> usize {
        self.global
            .triplets()
            .iter()
            .map(|&(p, q, _)| self.source.block(p).len() + self.target.block(q).len() - 1)
            .sum()
    }

    /// Row `x` of the coupling, touching only the global row of its block
    /// and the corresponding local plans.
    pub fn expand_row(&self, x: usize) -> ExpandedRow {
        let p = self.source.block_of(x);
        let xl = self.source.local_index(x);
        let mut raw = Vec::new();
        for t in self.global_row(p) {
            let (_, q, w) = self.global.triplets()[t];
            let block = self.target.block(q);
            for &(_, j, m) in self.locals[t].row(xl) {
                raw.push((block[j], w * m));
            }
        }
        raw.sort_unstable_by_key(|&(y, _)| y);
        let total: f64 = raw.iter().map(|&(_, m)| m).sum();
        let normalized = if total > 0.0 {
            raw.iter().map(|&(y, m)| (y, m / total)).collect()
        } else {
            Vec::new()
        };
        ExpandedRow { raw, normalized }
    }

    /// Target with the largest coupling mass in row `x`; ties go to the lowest
    /// target index. `None` for a zero-mass point.
    pub fn argmax_match(&self, x: usize) -> Option<usize> {
        let row = self.expand_row(x).raw;
        let masses: Vec<f64> = row.iter().map(|&(_, m)| m).collect();
        argmax_lowest(&masses).map(|k| row[k].0)
    }

    /// Argmax match of every source point. A zero-mass point inherits the
    /// match of its block representative.
    pub fn argmax_matches(&self) -> Vec<usize> {
        let n = self.source.num_points();
        let direct: Vec<Option<usize>> = (0..n).into_par_iter().map(|x| self.argmax_match(x)).collect();
        direct
            .iter()
            .enumerate()
            .map(|(x, m)| {
                m.or_else(|| direct[self.source.representative(self.source.block_of(x))])
                    .expect("representatives carry mass")
            })
            .collect()
    }

    /// All nonzero entries in global indices, sorted by `(x, y)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for (&(p, q, w), local) in self.global.triplets().iter().zip(&self.locals) {
            let (u, v) = (self.source.block(p), self.target.block(q));
            out.extend(local.triplets().iter().map(|&(i, j, m)| (u[i], v[j], w * m)));
        }
        out.sort_unstable_by_key(|&(x, y, _)| (x, y));
        out
    }

    /// Row and column sums of the expanded coupling.
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut rows = vec![0.0; self.source.num_points()];
        let mut cols = vec![0.0; self.target.num_points()];
        for (x, y, m) in self.triplets() {
            rows[x] += m;
            cols[y] += m;
        }
        (rows, cols)
    }

    /// Dense matrix of the coupling; refuses above `N_X * N_Y = 10^6`.
    pub fn densify_small(&self) -> Result<DiscreteCoupling> {
        let (n, k) = (self.source.num_points(), self.target.num_points());
        if n.saturating_mul(k) > DENSE_CAP {
            return Err(Error::SizeCap {
                what: "densify_small",
                size: n * k,
                cap: DENSE_CAP,
            });
        }
        let mut out = Array2::zeros((n, k));
        for (x, y, m) in self.triplets() {
            out[[x, y]] += m;
        }
        Ok(DiscreteCoupling(out))
    }

    /// GW loss of the expanded coupling.
    ///
    /// Sums over pairs of support entries, unless the support is so dense
    /// that the matrix decomposition on small inputs is cheaper. Graph spaces
    /// need their distance matrix either way.
    pub fn full_gw_loss(&self, x: &MmSpace, y: &MmSpace) -> Result<f64> {
        let support = self.triplets();
        let (n, k) = (x.len() as f64, y.len() as f64);
        let s = support.len() as f64;
        if s * s > n * k * (n + k) && n * n + k * k <= 4.0 * DENSE_CAP as f64 {
            let dense = self.densify_small()?;
            return gw_loss(x.distance_matrix()?.view(), y.distance_matrix()?.view(), dense.view());
        }
        let dx = DistanceLookup::new(x)?;
        let dy = DistanceLookup::new(y)?;
        Ok(gw_loss_sparse(|i, k| dx.get(i, k), |j, l| dy.get(j, l), &support))
    }
}

// Pairwise distances for quadratic-cost evaluations.
pub(crate) enum DistanceLookup<'a> {
    Matrix(Array2<f64>),
    Direct(&'a MmSpace),
}

impl<'a> DistanceLookup<'a> {
    pub(crate) fn new(space: &'a MmSpace) -> Result<Self> {
        match space.kind() {
            SpaceKind::Graph => Ok(DistanceLookup::Matrix(space.distance_matrix()?)),
            _ => Ok(DistanceLookup::Direct(space)),
        }
    }

    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            DistanceLookup::Matrix(d) => d[[i, j]],
            DistanceLookup::Direct(s) => s.distance(i, j).expect("indices checked by caller"),
        }
    }
}

/// Local linear matching of two blocks: 1D OT between the radial profiles.
///
/// The representative is moved to the front before the stable sort, so it is
/// first among points at radius 0 and the (representative, representative)
/// pair always receives mass.
pub fn local_linear_match(px: &BlockRadialProfile, py: &BlockRadialProfile) -> Result<SparsePlan> {
    let (ox, ax) = rep_first_atoms(px)?;
    let (oy, ay) = rep_first_atoms(py)?;
    let (plan, _) = solve_1d_ot(&ax, &ay)?;
    Ok(SparsePlan::from_triplets(
        plan.triplets().iter().map(|&(i, j, m)| (ox[i], oy[j], m)).collect(),
    ))
}

fn rep_first_atoms(p: &BlockRadialProfile) -> Result<(Vec<usize>, Atoms1D)> {
    let mut order = Vec::with_capacity(p.radii.len());
    order.push(p.rep_local);
    order.extend((0..p.radii.len()).filter(|&i| i != p.rep_local));
    let atoms = Atoms1D::new(
        order.iter().map(|&i| p.radii[i]).collect(),
        order.iter().map(|&i| p.masses[i]).collect(),
    )?;
    Ok((order, atoms))
}

/// Cost of a local plan under the radial cost `(r_i - s_j)^2`.
pub fn local_linear_cost(plan: &SparsePlan, px: &BlockRadialProfile, py: &BlockRadialProfile) -> f64 {
    plan.cost_with(|i, j| (px.radii[i] - py.radii[j]).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FeatureRule {
    Exact,
    NormProfile,
}

/// Local matching between block features: exact OT under squared Euclidean
/// cost for blocks of at most 256 points, else 1D OT on feature norms.
fn local_feature_match(
    fx: ArrayView2<f64>,
    fy: ArrayView2<f64>,
    px: &BlockRadialProfile,
    py: &BlockRadialProfile,
    members_x: &[usize],
    members_y: &[usize],
) -> Result<(SparsePlan, FeatureRule)> {
    let (nu, nv) = (members_x.len(), members_y.len());
    if nu <= EXACT_FEATURE_BLOCK && nv <= EXACT_FEATURE_BLOCK {
        let cost = Array2::from_shape_fn((nu, nv), |(i, j)| sq_dist(fx.row(members_x[i]), fy.row(members_y[j])));
        let sol = network_simplex(&px.masses, &py.masses, cost.view(), DEFAULT_MAX_PIVOTS)?;
        return Ok((SparsePlan::from_triplets(sol.flows), FeatureRule::Exact));
    }
    let norm = |f: ArrayView2<f64>, m: &[usize]| -> Vec<f64> { m.iter().map(|&x| f.row(x).dot(&f.row(x)).sqrt()).collect() };
    let a = Atoms1D::new(norm(fx, members_x), px.masses.clone())?;
    let b = Atoms1D::new(norm(fy, members_y), py.masses.clone())?;
    Ok((solve_1d_ot(&a, &b)?.0, FeatureRule::NormProfile))
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared Euclidean feature distances between two row sets.
pub fn feature_cost(fx: ArrayView2<f64>, rows_x: &[usize], fy: ArrayView2<f64>, rows_y: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows_x.len(), rows_y.len()), |(i, j)| sq_dist(fx.row(rows_x[i]), fy.row(rows_y[j])))
}

/// qGW matching of two partitioned spaces.
pub fn match_qgw(
    x: &MmSpace,
    px: &PointedPartition,
    y: &MmSpace,
    py: &PointedPartition,
    config: &QgwConfig,
) -> Result<(QuantizationCoupling, MatchReport)> {
    if config.alpha != 0.0 || config.beta != 0.0 {
        return Err(Error::invalid("alpha and beta require features"));
    }
    run(x, px, y, py, None, config)
}

/// qFGW matching; features are rows aligned with the points of each space.
pub fn match_qfgw(
    x: &MmSpace,
    px: &PointedPartition,
    fx: ArrayView2<f64>,
    y: &MmSpace,
    py: &PointedPartition,
    fy: ArrayView2<f64>,
    config: &QgwConfig,
) -> Result<(QuantizationCoupling, MatchReport)> {
    if fx.nrows() != x.len() || fy.nrows() != y.len() {
        return Err(Error::DimensionMismatch("feature tables must have one row per point".into()));
    }
    if fx.ncols() != fy.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "feature dimensions differ: {} vs {}",
            fx.ncols(),
            fy.ncols()
        )));
    }
    if fx.iter().chain(fy.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    run(x, px, y, py, Some((fx, fy)), config)
}

fn run(
    x: &MmSpace,
    px: &PointedPartition,
    y: &MmSpace,
    py: &PointedPartition,
    features: Option<(ArrayView2<f64>, ArrayView2<f64>)>,
    config: &QgwConfig,
) -> Result<(QuantizationCoupling, MatchReport)> {
    config.validate()?;
    let start = Instant::now();
    let qx = quantized_representation(x, px)?;
    let qy = quantized_representation(y, py)?;

    let gw = &config.gw;
    let solution: GwSolution = match features {
        None => solve_gw(qx.rep_distances.view(), qy.rep_distances.view(), &qx.rep_measure, &qy.rep_measure, gw)?,
        Some((fx, fy)) => {
            let cost = feature_cost(fx, px.representatives(), fy, py.representatives());
            solve_fgw(
                qx.rep_distances.view(),
                qy.rep_distances.view(),
                cost.view(),
                &qx.rep_measure,
                &qy.rep_measure,
                config.alpha,
                gw,
            )?
        }
    };
    let (global, dropped) = threshold_global(&solution.coupling, config.support_threshold)?;
    let global_loss = gw_loss(qx.rep_distances.view(), qy.rep_distances.view(), global.to_dense(px.len(), py.len()).view())?;
    let global_s = start.elapsed().as_secs_f64();

    let local_start = Instant::now();
    let prof_x = radial_profiles(x, px)?;
    let prof_y = radial_profiles(y, py)?;
    let results: Vec<(SparsePlan, Option<FeatureRule>)> = global
        .triplets()
        .par_iter()
        .map(|&(p, q, _)| {
            let metric = local_linear_match(&prof_x[p], &prof_y[q])?;
            match features {
                Some((fx, fy)) if config.beta > 0.0 => {
                    let (feat, rule) = local_feature_match(fx, fy, &prof_x[p], &prof_y[q], px.block(p), py.block(q))?;
                    Ok((SparsePlan::blend(&metric, &feat, config.beta), Some(rule)))
                }
                _ => Ok((metric, None)),
            }
        })
        .collect::<Result<_>>()?;
    let feature_matching = features.map(|_| {
        let exact = results.iter().filter(|r| r.1 == Some(FeatureRule::Exact)).count();
        let norm = results.iter().filter(|r| r.1 == Some(FeatureRule::NormProfile)).count();
        FeatureMatchingReport {
            rule: format!(
                "exact OT on squared Euclidean feature cost when both blocks have at most {EXACT_FEATURE_BLOCK} points, else 1D OT on feature norms"
            ),
            exact_pairs: exact,
            norm_profile_pairs: norm,
        }
    });
    let locals = results.into_iter().map(|r| r.0).collect();
    let qc = QuantizationCoupling::from_parts(global, locals, px.clone(), py.clone())?;
    let local_s = local_start.elapsed().as_secs_f64();

    let diag_start = Instant::now();
    let full_gw_loss = if config.diagnostics && x.len().saturating_mul(y.len()) <= DENSE_CAP {
        Some(qc.full_gw_loss(x, y)?)
    } else {
        None
    };
    let bounds: Option<BoundReport> = if config.diagnostics {
        Some(bound_report(x, px, y, py)?)
    } else {
        None
    };
    let thm3_chain = match (full_gw_loss, &bounds) {
        (Some(full), Some(b)) => {
            let lhs = full.sqrt();
            let rhs = global_loss.sqrt() + 8.0 * b.eps_x.max(b.eps_y);
            Some(ChainCheck {
                lhs,
                rhs,
                holds: lhs <= rhs + 1e-8,
            })
        }
        _ => None,
    };
    let diagnostics_s = diag_start.elapsed().as_secs_f64();

    let report = MatchReport {
        schema_version: crate::report::SCHEMA_VERSION,
        method: if features.is_some() { "qfgw" } else { "qgw" }.to_string(),
        params: ReportParams::from_config(config),
        source: SideReport::new(x, px),
        target: SideReport::new(y, py),
        global: GlobalReport {
            loss: global_loss,
            objective: solution.loss,
            feature_loss: solution.feature_loss,
            iterations: solution.iterations,
            converged: solution.converged,
            support: qc.global().len(),
            dropped_mass: dropped,
        },
        local: LocalReport {
            pairs: qc.global().len(),
            nnz: qc.nnz(),
            support_bound: qc.support_bound(),
            feature_matching,
        },
        full_gw_loss,
        bounds,
        thm3_chain,
        metric_interpretation_available: px.len() == py.len(),
        timings: Timings {
            partition_s: None,
            global_s,
            local_s,
            diagnostics_s,
            total_s: start.elapsed().as_secs_f64(),
        },
    };
    Ok((qc, report))
}

/// Drops global entries at or below `threshold` and renormalizes.
/// Returns the sparse plan and the dropped mass.
pub fn threshold_global(coupling: &DiscreteCoupling, threshold: f64) -> Result<(SparsePlan, f64)> {
    let mut kept = Vec::new();
    let mut dropped = 0.0;
    for ((p, q), &m) in coupling.matrix().indexed_iter() {
        if m > threshold {
            kept.push((p, q, m));
        } else {
            dropped += m.max(0.0);
        }
    }
    let total: f64 = kept.iter().map(|t| t.2).sum();
    if kept.is_empty() || !(total > 0.0) {
        return Err(Error::numerical("global coupling has empty support after thresholding"));
    }
    if total != 1.0 {
        kept.iter_mut().for_each(|t| t.2 /= total);
    }
    Ok((SparsePlan::from_triplets(kept), dropped))
}

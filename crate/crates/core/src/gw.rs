//! Gromov-Wasserstein losses and the conditional-gradient solver used for
//! the global alignment of quantized representations.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::{network_simplex, round_to_marginals, sinkhorn, DiscreteCoupling, SinkhornConfig, DEFAULT_MAX_PIVOTS};
use crate::util::accurate_sum;

/// Largest `n * k` accepted by [`gw_loss_brute`].
pub const BRUTE_CAP: usize = 200;

/// Largest side accepted by the global solvers.
pub const GLOBAL_CAP: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerSolver {
    Exact,
    Entropic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GwInit {
    Product,
    /// Diagonal coupling when both sides have the same measure, else product.
    IdentityIfSquare,
    Provided(DiscreteCoupling),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwConfig {
    pub inner: InnerSolver,
    /// Absolute entropic weight; `None` uses `1e-2 * median(|gradient|)`.
    pub epsilon: Option<f64>,
    pub max_outer_iter: usize,
    /// Relative loss change that stops the outer loop.
    pub conv_tol: f64,
    pub init: GwInit,
    pub sinkhorn_max_iter: usize,
}

impl Default for GwConfig {
    fn default() -> Self {
        GwConfig {
            inner: InnerSolver::Exact,
            epsilon: None,
            max_outer_iter: 200,
            conv_tol: 1e-9,
            init: GwInit::Product,
            sinkhorn_max_iter: 10_000,
        }
    }
}

impl GwConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilon {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::invalid("epsilon must be positive"));
            }
        }
        if !(self.conv_tol >= 0.0) {
            return Err(Error::invalid("conv_tol must be nonnegative"));
        }
        Ok(())
    }
}

/// Result of a (fused) GW solve.
#[derive(Debug, Clone)]
pub struct GwSolution {
    pub coupling: DiscreteCoupling,
    /// Objective value: GW loss, or the fused loss for FGW solves.
    pub loss: f64,
    pub gw_loss: f64,
    /// Feature (Wasserstein) term for FGW solves.
    pub feature_loss: Option<f64>,
    pub iterations: usize,
    /// Objective after initialization and after every accepted step.
    pub loss_history: Vec<f64>,
    pub converged: bool,
}

fn check_dims(dx: ArrayView2<f64>, dy: ArrayView2<f64>, mu: ArrayView2<f64>) -> Result<(usize, usize)> {
    let (n, n2) = dx.dim();
    let (k, k2) = dy.dim();
    if n != n2 || k != k2 {
        return Err(Error::DimensionMismatch("distance matrices must be square".into()));
    }
    if mu.dim() != (n, k) {
        return Err(Error::DimensionMismatch(format!(
            "coupling is {:?} but spaces have {n} and {k} points",
            mu.dim()
        )));
    }
    Ok((n, k))
}

/// GW loss `sum (dX[i,k] - dY[j,l])^2 mu[i,j] mu[k,l]`.
///
/// Sparse couplings are summed directly over pairs of support entries, which
/// is exact term by term; dense couplings use the quadratic decomposition
/// `a'(dX∘dX)a + b'(dY∘dY)b - 2 <dX mu dY, mu>` with `a`, `b` the marginals
/// of `mu`, costing O(n^2 k + n k^2).
pub fn gw_loss(dx: ArrayView2<f64>, dy: ArrayView2<f64>, mu: ArrayView2<f64>) -> Result<f64> {
    let (n, k) = check_dims(dx, dy, mu)?;
    let support: Vec<(usize, usize, f64)> = mu
        .indexed_iter()
        .filter(|(_, &m)| m != 0.0)
        .map(|((i, j), &m)| (i, j, m))
        .collect();
    let s = support.len();
    if (s as f64) * (s as f64) <= (n * k) as f64 * (n + k) as f64 {
        return Ok(gw_loss_sparse(|i, l| dx[[i, l]], |j, l| dy[[j, l]], &support));
    }
    Ok(gw_loss_decomposed(dx, dy, mu))
}

fn gw_loss_decomposed(dx: ArrayView2<f64>, dy: ArrayView2<f64>, mu: ArrayView2<f64>) -> f64 {
    let a = mu.sum_axis(ndarray::Axis(1));
    let b = mu.sum_axis(ndarray::Axis(0));
    let cx = quad_form(dx, &a);
    let cy = quad_form(dy, &b);
    let cross = (dx.dot(&mu).dot(&dy) * mu).sum();
    (cx + cy - 2.0 * cross).max(0.0)
}

// a' (d∘d) a
fn quad_form(d: ArrayView2<f64>, a: &Array1<f64>) -> f64 {
    let mut total = 0.0;
    for (i, row) in d.rows().into_iter().enumerate() {
        if a[i] == 0.0 {
            continue;
        }
        let s: f64 = row.iter().zip(a.iter()).map(|(x, w)| x * x * w).sum();
        total += a[i] * s;
    }
    total
}

/// GW loss of a sparse coupling given as triplets, with distances supplied by
/// closures. O(nnz^2) distance evaluations; never touches a full matrix.
pub fn gw_loss_sparse(
    dx: impl Fn(usize, usize) -> f64 + Sync,
    dy: impl Fn(usize, usize) -> f64 + Sync,
    support: &[(usize, usize, f64)],
) -> f64 {
    // the (idx, idx) term vanishes; off-diagonal pairs appear twice
    let rows: Vec<f64> = (0..support.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j, m) = support[idx];
            let mut row = 0.0;
            for &(k, l, w) in &support[idx + 1..] {
                let d = dx(i, k) - dy(j, l);
                row += d * d * w;
            }
            2.0 * m * row
        })
        .collect();
    accurate_sum(rows)
}

/// Literal four-index sum (test oracle); requires `n * k <= 200`.
pub fn gw_loss_brute(dx: ArrayView2<f64>, dy: ArrayView2<f64>, mu: ArrayView2<f64>) -> Result<f64> {
    let (n, k) = check_dims(dx, dy, mu)?;
    if n * k > BRUTE_CAP {
        return Err(Error::SizeCap {
            what: "gw_loss_brute",
            size: n * k,
            cap: BRUTE_CAP,
        });
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..k {
            for p in 0..n {
                for q in 0..k {
                    let d = dx[[i, p]] - dy[[j, q]];
                    total += d * d * mu[[i, j]] * mu[[p, q]];
                }
            }
        }
    }
    Ok(total)
}

/// Linear (Wasserstein) term `<cost, mu>`.
pub fn linear_loss(cost: ArrayView2<f64>, mu: ArrayView2<f64>) -> f64 {
    accurate_sum(cost.iter().zip(mu.iter()).map(|(c, m)| c * m))
}

/// Conditional-gradient GW solve. Returns a local minimizer.
pub fn solve_gw(dx: ArrayView2<f64>, dy: ArrayView2<f64>, mu_x: &[f64], mu_y: &[f64], config: &GwConfig) -> Result<GwSolution> {
    conditional_gradient(dx, dy, None, mu_x, mu_y, 0.0, config)
}

/// Fused GW solve of `(1 - alpha) GW + alpha <feature_cost, mu>`.
///
/// `alpha == 0` is exactly [`solve_gw`]; `alpha == 1` is a single linear OT
/// solve on `feature_cost`.
pub fn solve_fgw(
    dx: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    feature_cost: ArrayView2<f64>,
    mu_x: &[f64],
    mu_y: &[f64],
    alpha: f64,
    config: &GwConfig,
) -> Result<GwSolution> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must be in [0, 1], got {alpha}")));
    }
    if feature_cost.dim() != (mu_x.len(), mu_y.len()) {
        return Err(Error::DimensionMismatch(format!(
            "feature cost is {:?} for {} x {} points",
            feature_cost.dim(),
            mu_x.len(),
            mu_y.len()
        )));
    }
    if alpha == 0.0 {
        return solve_gw(dx, dy, mu_x, mu_y, config);
    }
    if alpha == 1.0 {
        check_dims(dx, dy, feature_cost)?;
        let coupling = linear_step(feature_cost, mu_x, mu_y, config)?;
        let gw = gw_loss(dx, dy, coupling.view())?;
        let w = linear_loss(feature_cost, coupling.view());
        return Ok(GwSolution {
            coupling,
            loss: w,
            gw_loss: gw,
            feature_loss: Some(w),
            iterations: 1,
            loss_history: vec![w],
            converged: true,
        });
    }
    conditional_gradient(dx, dy, Some(feature_cost), mu_x, mu_y, alpha, config)
}

struct Direction {
    dense: Array2<f64>,
    sparse: Option<Vec<(usize, usize, f64)>>,
}

fn inner_solve(cost: ArrayView2<f64>, a: &[f64], b: &[f64], config: &GwConfig) -> Result<Direction> {
    match config.inner {
        InnerSolver::Exact => {
            let sol = network_simplex(a, b, cost, DEFAULT_MAX_PIVOTS)?;
            Ok(Direction {
                dense: sol.dense_plan(a.len(), b.len()),
                sparse: Some(sol.flows),
            })
        }
        InnerSolver::Entropic => {
            let cfg = SinkhornConfig {
                epsilon: config.epsilon,
                max_iter: config.sinkhorn_max_iter,
                tol: 1e-9,
            };
            let r = sinkhorn(cost, a, b, &cfg)?;
            // keep iterates feasible even when scaling stops early
            Ok(Direction {
                dense: round_to_marginals(r.coupling.matrix(), a, b),
                sparse: None,
            })
        }
    }
}

fn linear_step(cost: ArrayView2<f64>, a: &[f64], b: &[f64], config: &GwConfig) -> Result<DiscreteCoupling> {
    Ok(DiscreteCoupling(inner_solve(cost, a, b, config)?.dense))
}

// dX * T * dY, using the sparse support of T when available.
fn sandwich(dx: ArrayView2<f64>, dy: ArrayView2<f64>, t: &Direction) -> Array2<f64> {
    match &t.sparse {
        Some(flows) => {
            let (n, k) = t.dense.dim();
            let mut left = Array2::<f64>::zeros((n, k));
            for &(j, l, m) in flows {
                let col = dx.column(j);
                let mut out = left.column_mut(l);
                Zip::from(&mut out).and(&col).for_each(|o, &d| *o += m * d);
            }
            left.dot(&dy)
        }
        None => dx.dot(&t.dense).dot(&dy),
    }
}

fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}

fn conditional_gradient(
    dx: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    feature_cost: Option<ArrayView2<f64>>,
    mu_x: &[f64],
    mu_y: &[f64],
    alpha: f64,
    config: &GwConfig,
) -> Result<GwSolution> {
    config.validate()?;
    let (n, k) = (mu_x.len(), mu_y.len());
    if n == 0 || k == 0 {
        return Err(Error::invalid("empty measure"));
    }
    if n > GLOBAL_CAP || k > GLOBAL_CAP {
        return Err(Error::SizeCap {
            what: "global GW solve",
            size: n.max(k),
            cap: GLOBAL_CAP,
        });
    }
    if dx.dim() != (n, n) || dy.dim() != (k, k) {
        return Err(Error::DimensionMismatch(format!(
            "distance matrices {:?} and {:?} for measures of length {n} and {k}",
            dx.dim(),
            dy.dim()
        )));
    }
    let a = Array1::from(mu_x.to_vec());
    let b = Array1::from(mu_y.to_vec());
    let dx2 = dx.mapv(|v| v * v);
    let dy2 = dy.mapv(|v| v * v);
    let row_term = dx2.dot(&a);
    let col_term = dy2.dot(&b);
    let constant = a.dot(&row_term) + b.dot(&col_term);
    // separable part of the gradient, 2 * (row_term_i + col_term_j)
    let separable = Array2::from_shape_fn((n, k), |(i, j)| 2.0 * (row_term[i] + col_term[j]));

    let (mut mu, mut gm) = match &config.init {
        GwInit::Product => product_start(dx, dy, &a, &b),
        GwInit::IdentityIfSquare => {
            if n == k && mu_x == mu_y {
                let mut scaled = dx.to_owned();
                for (mut col, &w) in scaled.columns_mut().into_iter().zip(mu_x) {
                    col *= w;
                }
                (DiscreteCoupling::diagonal(mu_x).into_inner(), scaled.dot(&dy))
            } else {
                product_start(dx, dy, &a, &b)
            }
        }
        GwInit::Provided(c) => {
            if c.dim() != (n, k) {
                return Err(Error::DimensionMismatch("initial coupling has wrong shape".into()));
            }
            if c.marginal_error(mu_x, mu_y) > 1e-8 {
                return Err(Error::invalid("initial coupling does not match the marginals"));
            }
            let m = c.matrix().clone();
            let g = dx.dot(&m).dot(&dy);
            (m, g)
        }
    };

    let gw_part = |mu: &Array2<f64>, gm: &Array2<f64>| (constant - 2.0 * inner(gm, mu)).max(0.0);
    let objective = |mu: &Array2<f64>, gm: &Array2<f64>| {
        let gw = gw_part(mu, gm);
        match feature_cost {
            Some(m) => (1.0 - alpha) * gw + alpha * linear_loss(m, mu.view()),
            None => gw,
        }
    };

    let mut f = objective(&mu, &gm);
    if !f.is_finite() {
        return Err(Error::numerical("initial loss is not finite"));
    }
    let mut history = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let scale = f.abs().max(constant.abs()).max(f64::MIN_POSITIVE);

    for _ in 0..config.max_outer_iter {
        iterations += 1;
        let mut grad = &separable - &(gm.mapv(|g| 4.0 * g));
        if let Some(m) = feature_cost {
            grad.mapv_inplace(|g| (1.0 - alpha) * g);
            grad.zip_mut_with(&m, |g, &c| *g += alpha * c);
        }
        let dir = inner_solve(grad.view(), mu_x, mu_y, config)?;
        let gt = sandwich(dx, dy, &dir);
        let t = &dir.dense;

        let delta = t - &mu;
        let gm_delta = inner(&gm, &delta);
        let quad = inner(&gt, t) - 2.0 * inner(&gm, t) + inner(&gm, &mu);
        let w = 1.0 - alpha;
        let qa = -2.0 * w * quad;
        let mut qb = -4.0 * w * gm_delta;
        if let Some(m) = feature_cost {
            qb += alpha * linear_loss(m, delta.view());
        }
        // Frank-Wolfe gap is -qb
        if -qb <= config.conv_tol * scale {
            converged = true;
            break;
        }
        let step = if qa > 0.0 {
            (-qb / (2.0 * qa)).clamp(0.0, 1.0)
        } else if qa + qb < 0.0 {
            1.0
        } else {
            0.0
        };
        if step == 0.0 {
            converged = true;
            break;
        }
        let new_mu = &mu + &(&delta * step);
        let new_gm = &gm + &((&gt - &gm) * step);
        let new_f = objective(&new_mu, &new_gm);
        if !new_f.is_finite() {
            return Err(Error::numerical("loss became non-finite"));
        }
        if new_f > f {
            // rounding only; the exact line search cannot increase the loss
            debug_assert!(new_f - f <= 1e-9 * scale, "loss increased from {f} to {new_f}");
            converged = true;
            break;
        }
        mu = new_mu;
        gm = new_gm;
        let change = (f - new_f).abs();
        f = new_f;
        history.push(f);
        if change <= config.conv_tol * f.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    let gw = gw_loss(dx, dy, mu.view())?;
    let (loss, feature_loss) = match feature_cost {
        Some(m) => {
            let wl = linear_loss(m, mu.view());
            ((1.0 - alpha) * gw + alpha * wl, Some(wl))
        }
        None => (gw, None),
    };
    if !loss.is_finite() {
        return Err(Error::numerical("final loss is not finite"));
    }
    Ok(GwSolution {
        coupling: DiscreteCoupling(mu),
        loss,
        gw_loss: gw,
        feature_loss,
        iterations,
        loss_history: history,
        converged,
    })
}

fn product_start(dx: ArrayView2<f64>, dy: ArrayView2<f64>, a: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, Array2<f64>) {
    let mu = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j]);
    // dX (a b') dY = (dX a)(dY b)'
    let left = dx.dot(a);
    let right = dy.dot(b);
    let gm = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| left[i] * right[j]);
    (mu, gm)
}

//! Entropic optimal transport by Sinkhorn scaling.

use ndarray::{Array2, ArrayView2};

use super::plan::DiscreteCoupling;
use crate::error::{Error, Result};
use crate::util::median;

/// Relative default regularization: `epsilon = 1e-2 * median(cost)`.
pub const DEFAULT_EPSILON_FACTOR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Absolute regularization; `None` picks `1e-2 * median(|cost|)`.
    pub epsilon: Option<f64>,
    pub max_iter: usize,
    /// Stop once the L1 marginal error drops below this.
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            epsilon: None,
            max_iter: 10_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub coupling: DiscreteCoupling,
    pub converged: bool,
    pub iterations: usize,
    /// L1 marginal error of the returned plan.
    pub marginal_error: f64,
    pub epsilon: f64,
    pub log_domain: bool,
}

/// Resolves the regularization for a cost matrix.
pub fn resolve_epsilon(cost: ArrayView2<f64>, epsilon: Option<f64>) -> f64 {
    epsilon.unwrap_or_else(|| {
        let abs: Vec<f64> = cost.iter().map(|c| c.abs()).collect();
        let med = median(&abs);
        if med > 0.0 {
            DEFAULT_EPSILON_FACTOR * med
        } else {
            DEFAULT_EPSILON_FACTOR
        }
    })
}

/// Sinkhorn iterations on `cost` with marginals `mu`, `nu`.
///
/// Switches to log-domain updates when `epsilon < 1e-2 * median(|cost|)` or
/// when the Gibbs kernel would underflow. Non-convergence is reported through
/// `converged`, with the last iterate returned.
pub fn sinkhorn(cost: ArrayView2<f64>, mu: &[f64], nu: &[f64], config: &SinkhornConfig) -> Result<SinkhornResult> {
    let (n, k) = cost.dim();
    if mu.len() != n || nu.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "cost is {n}x{k} but marginals have {} and {} entries",
            mu.len(),
            nu.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cost matrix has non-finite entries"));
    }
    let eps = resolve_epsilon(cost, config.epsilon);
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let abs: Vec<f64> = cost.iter().map(|c| c.abs()).collect();
    let med = median(&abs);
    let (cmin, cmax) = cost
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    let log_domain = eps < DEFAULT_EPSILON_FACTOR * med || (cmax - cmin) / eps > 500.0;

    // work on the positive-mass sub-problem
    let rows: Vec<usize> = (0..n).filter(|&i| mu[i] > 0.0).collect();
    let cols: Vec<usize> = (0..k).filter(|&j| nu[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::invalid("marginals carry no mass"));
    }
    let c = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| cost[[rows[i], cols[j]]] - cmin);
    let a: Vec<f64> = rows.iter().map(|&i| mu[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| nu[j]).collect();

    let (plan, iterations, err, converged) = if log_domain {
        run_log(&c, &a, &b, eps, config)
    } else {
        run_scaling(&c, &a, &b, eps, config)
    };
    if plan.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("sinkhorn produced non-finite values"));
    }
    let mut full = Array2::zeros((n, k));
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            full[[i, j]] = plan[[ri, cj]];
        }
    }
    Ok(SinkhornResult {
        coupling: DiscreteCoupling(full),
        converged,
        iterations,
        marginal_error: err,
        epsilon: eps,
        log_domain,
    })
}

/// Projects a nonnegative plan onto the couplings of `a` and `b`: rows and
/// columns are scaled down to their targets, then the leftover mass is
/// spread by a rank-one correction (Altschuler, Weed and Rigollet, 2017).
pub fn round_to_marginals(plan: &Array2<f64>, a: &[f64], b: &[f64]) -> Array2<f64> {
    let mut p = plan.clone();
    for (mut row, &ai) in p.rows_mut().into_iter().zip(a) {
        let s = row.sum();
        if s > ai {
            row *= ai / s;
        }
    }
    for (mut col, &bj) in p.columns_mut().into_iter().zip(b) {
        let s = col.sum();
        if s > bj {
            col *= bj / s;
        }
    }
    let er: Vec<f64> = p.rows().into_iter().zip(a).map(|(r, &ai)| (ai - r.sum()).max(0.0)).collect();
    let ec: Vec<f64> = p.columns().into_iter().zip(b).map(|(c, &bj)| (bj - c.sum()).max(0.0)).collect();
    let total: f64 = er.iter().sum();
    if total > 0.0 {
        for ((i, j), v) in p.indexed_iter_mut() {
            *v += er[i] * ec[j] / total;
        }
    }
    p
}

fn row_error(plan: &Array2<f64>, a: &[f64]) -> f64 {
    plan.rows().into_iter().zip(a).map(|(r, &ai)| (r.sum() - ai).abs()).sum()
}

fn run_scaling(c: &Array2<f64>, a: &[f64], b: &[f64], eps: f64, cfg: &SinkhornConfig) -> (Array2<f64>, usize, f64, bool) {
    let kernel = c.mapv(|x| (-x / eps).exp());
    let (n, k) = kernel.dim();
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; k];
    let mut plan = Array2::zeros((n, k));
    let mut err = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        for i in 0..n {
            let s: f64 = kernel.row(i).iter().zip(&v).map(|(kk, vv)| kk * vv).sum();
            u[i] = a[i] / s;
        }
        for j in 0..k {
            let s: f64 = kernel.column(j).iter().zip(&u).map(|(kk, uu)| kk * uu).sum();
            v[j] = b[j] / s;
        }
        plan = Array2::from_shape_fn((n, k), |(i, j)| u[i] * kernel[[i, j]] * v[j]);
        err = row_error(&plan, a);
        if err < cfg.tol {
            return (plan, it, err, true);
        }
    }
    (plan, cfg.max_iter, err, false)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn run_log(c: &Array2<f64>, a: &[f64], b: &[f64], eps: f64, cfg: &SinkhornConfig) -> (Array2<f64>, usize, f64, bool) {
    let (n, k) = c.dim();
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; k];
    let mut plan = Array2::zeros((n, k));
    let mut err = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        for i in 0..n {
            let row = c.row(i);
            let lse = log_sum_exp(row.iter().zip(&g).map(|(cij, gj)| (gj - cij) / eps));
            f[i] = eps * (log_a[i] - lse);
        }
        for j in 0..k {
            let col = c.column(j);
            let lse = log_sum_exp(col.iter().zip(&f).map(|(cij, fi)| (fi - cij) / eps));
            g[j] = eps * (log_b[j] - lse);
        }
        plan = Array2::from_shape_fn((n, k), |(i, j)| ((f[i] + g[j] - c[[i, j]]) / eps).exp());
        err = row_error(&plan, a);
        if err < cfg.tol {
            return (plan, it, err, true);
        }
    }
    (plan, cfg.max_iter, err, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rounding_restores_marginals() {
        let p = ndarray::array![[0.6, 0.0], [0.0, 0.3]];
        let r = round_to_marginals(&p, &[0.5, 0.5], &[0.55, 0.45]);
        let c = DiscreteCoupling(r);
        assert!(c.marginal_error(&[0.5, 0.5], &[0.55, 0.45]) < 1e-15);
        assert!(c.0.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn one_by_one() {
        let r = sinkhorn(array![[3.0]].view(), &[1.0], &[1.0], &SinkhornConfig::default()).unwrap();
        assert!((r.coupling.0[[0, 0]] - 1.0).abs() < 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn zero_cost_gives_product() {
        let cfg = SinkhornConfig { epsilon: Some(1.0), ..Default::default() };
        let r = sinkhorn(Array2::zeros((2, 2)).view(), &[0.5, 0.5], &[0.5, 0.5], &cfg).unwrap();
        for v in r.coupling.0.iter() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_fixed_point() {
        // closed form: diagonal mass 0.5 / (1 + exp(-1/eps)) per entry
        let cost = array![[0.0, 1.0], [1.0, 0.0]];
        for eps in [0.5, 0.1, 0.01] {
            let cfg = SinkhornConfig { epsilon: Some(eps), tol: 1e-13, ..Default::default() };
            let r = sinkhorn(cost.view(), &[0.5, 0.5], &[0.5, 0.5], &cfg).unwrap();
            let z = (-1.0f64 / eps).exp();
            let diag = 0.5 / (1.0 + z);
            assert!((r.coupling.0[[0, 0]] - diag).abs() < 1e-12, "eps {eps}");
            let transport: f64 = (&r.coupling.0 * &cost).sum();
            assert!((transport - z / (1.0 + z)).abs() < 1e-12);
        }
    }

    #[test]
    fn log_domain_handles_tiny_epsilon() {
        let cost = array![[0.0, 50.0, 100.0], [50.0, 0.0, 50.0], [100.0, 50.0, 0.0]];
        let mu = [0.2, 0.3, 0.5];
        let cfg = SinkhornConfig { epsilon: Some(0.01), ..Default::default() };
        let r = sinkhorn(cost.view(), &mu, &mu, &cfg).unwrap();
        assert!(r.log_domain);
        assert!(r.converged);
        assert!(r.coupling.marginal_error(&mu, &mu) < 1e-9);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let cost = array![[0.0, 1.0], [1.0, 0.0], [0.5, 0.2]];
        let cfg = SinkhornConfig { epsilon: Some(0.001), max_iter: 1, tol: 1e-15 };
        let r = sinkhorn(cost.view(), &[0.2, 0.3, 0.5], &[0.9, 0.1], &cfg).unwrap();
        assert!(!r.converged);
    }
}

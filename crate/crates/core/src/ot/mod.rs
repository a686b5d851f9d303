//! Optimal transport primitives.

mod network_simplex;
mod one_d;
mod plan;
mod sinkhorn;

pub use network_simplex::{network_simplex, ExactSolution, DEFAULT_MAX_PIVOTS};
pub use one_d::{solve_1d_ot, BALANCE_TOL};
pub use plan::{Atoms1D, DiscreteCoupling, SparsePlan};
pub use sinkhorn::{resolve_epsilon, round_to_marginals, sinkhorn, SinkhornConfig, SinkhornResult, DEFAULT_EPSILON_FACTOR};

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Largest `n_a * n_b` accepted by [`exact_ot_small`].
pub const EXACT_SMALL_CAP: usize = 10_000;

/// Exact linear OT for small instances (oracle scale).
pub fn exact_ot_small(cost: ArrayView2<f64>, mu: &[f64], nu: &[f64]) -> Result<(DiscreteCoupling, f64)> {
    let (n, k) = cost.dim();
    if n * k > EXACT_SMALL_CAP {
        return Err(Error::SizeCap {
            what: "exact_ot_small",
            size: n * k,
            cap: EXACT_SMALL_CAP,
        });
    }
    let sol = network_simplex(mu, nu, cost, DEFAULT_MAX_PIVOTS)?;
    Ok((DiscreteCoupling(sol.dense_plan(n, k)), sol.cost))
}

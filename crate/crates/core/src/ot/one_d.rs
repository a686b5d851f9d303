//! Exact optimal transport on the real line for quadratic ground cost.

use super::plan::{Atoms1D, SparsePlan};
use crate::error::{Error, Result};

/// Mass-balance tolerance between the two atom sets.
pub const BALANCE_TOL: f64 = 1e-9;

// Remaining mass below this is treated as exhausted by the sweep.
const EXHAUSTED: f64 = 1e-15;

/// Solves 1D OT by sorting both sides and running the northwest-corner sweep.
///
/// Sorting is stable: atoms at equal positions keep their input order. The
/// returned plan indexes atoms in input order; the cost is
/// `sum (pos_a - pos_b)^2 * mass`. The plan has at most `k_a + k_b - 1`
/// entries and is optimal for any convex ground cost.
pub fn solve_1d_ot(a: &Atoms1D, b: &Atoms1D) -> Result<(SparsePlan, f64)> {
    let (ta, tb) = (a.total_mass(), b.total_mass());
    if (ta - tb).abs() > BALANCE_TOL {
        return Err(Error::Unbalanced(ta - tb));
    }
    let order_a = sorted_order(&a.positions);
    let order_b = sorted_order(&b.positions);
    let mut triplets = Vec::with_capacity(a.len() + b.len());
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut ra = a.masses[order_a[0]];
    let mut rb = b.masses[order_b[0]];
    let mut cost = 0.0;
    loop {
        let m = ra.min(rb);
        let (i, j) = (order_a[ia], order_b[ib]);
        if m > 0.0 {
            triplets.push((i, j, m));
            let d = a.positions[i] - b.positions[j];
            cost += d * d * m;
        }
        ra -= m;
        rb -= m;
        let step_a = ra <= EXHAUSTED;
        let step_b = rb <= EXHAUSTED;
        if step_a {
            ia += 1;
        }
        if step_b {
            ib += 1;
        }
        if ia == a.len() || ib == b.len() {
            break;
        }
        if step_a {
            ra = a.masses[order_a[ia]];
        }
        if step_b {
            rb = b.masses[order_b[ib]];
        }
    }
    Ok((SparsePlan::from_triplets(triplets), cost))
}

fn sorted_order(positions: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&x, &y| positions[x].total_cmp(&positions[y]));
    order
}

//! Primal network simplex for balanced dense transport problems.
//!
//! The transport problem is a min-cost flow on the bipartite graph
//! `sources -> targets` plus an artificial root node. The spanning tree is
//! kept as parent pointers with explicit child lists; after each pivot the
//! moved subtree is re-rooted and its potentials shifted. Entering arcs are
//! chosen with block search, and the leaving arc follows the strongly
//! feasible tree rule so degenerate pivots cannot cycle.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::util::accurate_sum;

/// Default pivot cap.
pub const DEFAULT_MAX_PIVOTS: usize = 50_000_000;

/// Optimal solution with dual potentials.
///
/// Dual feasibility reads `cost[i][j] >= row_potentials[i] + col_potentials[j]`
/// with equality on the support; strong duality gives
/// `cost == sum a_i u_i + sum b_j v_j`.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    /// Support of the optimal vertex as `(i, j, mass)`, sorted by `(i, j)`.
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
    pub pivots: usize,
}

impl ExactSolution {
    pub fn dense_plan(&self, n: usize, k: usize) -> Array2<f64> {
        let mut out = Array2::zeros((n, k));
        for &(i, j, m) in &self.flows {
            out[[i, j]] = m;
        }
        out
    }
}

struct Tree {
    n1: usize,
    n2: usize,
    root: usize,
    cost: Vec<f64>,
    art_cost: f64,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_up: Vec<bool>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
    pi: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl Tree {
    fn num_transport_arcs(&self) -> usize {
        self.n1 * self.n2
    }

    fn endpoints(&self, e: usize) -> (usize, usize) {
        let nt = self.num_transport_arcs();
        if e < nt {
            (e / self.n2, self.n1 + e % self.n2)
        } else {
            let u = e - nt;
            if u < self.n1 {
                (u, self.root)
            } else {
                (self.root, u)
            }
        }
    }

    fn arc_cost(&self, e: usize) -> f64 {
        let nt = self.num_transport_arcs();
        if e < nt {
            self.cost[e]
        } else if e - nt < self.n1 {
            0.0
        } else {
            self.art_cost
        }
    }

    fn reduced_cost(&self, e: usize) -> f64 {
        let (s, t) = self.endpoints(e);
        self.arc_cost(e) + self.pi[s] - self.pi[t]
    }

    fn remove_child(&mut self, parent: usize, child: usize) {
        let list = &mut self.children[parent];
        let pos = list
            .iter()
            .position(|&c| c == child)
            .expect("tree child lists out of sync");
        list.swap_remove(pos);
    }

    fn pivot(&mut self, in_arc: usize) -> Result<()> {
        let (first, second) = self.endpoints(in_arc);

        // join node of the cycle
        let (mut u, mut v) = (first, second);
        while u != v {
            if self.depth[u] >= self.depth[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        let join = u;

        // leaving arc: last blocking arc in cycle order starting at join
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut on_first = true;
        let mut x = first;
        while x != join {
            if self.pred_up[x] {
                let d = self.flow[self.pred[x]];
                if d < delta {
                    delta = d;
                    u_out = x;
                    on_first = true;
                }
            }
            x = self.parent[x];
        }
        x = second;
        while x != join {
            if !self.pred_up[x] {
                let d = self.flow[self.pred[x]];
                if d <= delta {
                    delta = d;
                    u_out = x;
                    on_first = false;
                }
            }
            x = self.parent[x];
        }
        if u_out == NONE {
            return Err(Error::numerical("transport problem is unbounded"));
        }
        let delta = delta.max(0.0);

        if delta > 0.0 {
            self.flow[in_arc] += delta;
            let mut x = first;
            while x != join {
                let e = self.pred[x];
                if self.pred_up[x] {
                    self.flow[e] -= delta;
                } else {
                    self.flow[e] += delta;
                }
                x = self.parent[x];
            }
            x = second;
            while x != join {
                let e = self.pred[x];
                if self.pred_up[x] {
                    self.flow[e] += delta;
                } else {
                    self.flow[e] -= delta;
                }
                x = self.parent[x];
            }
        }
        let out_arc = self.pred[u_out];
        self.flow[out_arc] = 0.0;
        self.in_tree[out_arc] = false;
        self.in_tree[in_arc] = true;

        let (u_in, v_in) = if on_first { (first, second) } else { (second, first) };

        // re-root the detached subtree at u_in by reversing the stem
        let mut stem = vec![u_in];
        while *stem.last().unwrap() != u_out {
            let last = *stem.last().unwrap();
            stem.push(self.parent[last]);
        }
        let old: Vec<(usize, bool)> = stem.iter().map(|&s| (self.pred[s], self.pred_up[s])).collect();
        let v_out = self.parent[u_out];
        self.remove_child(v_out, u_out);
        for t in 0..stem.len() - 1 {
            self.remove_child(stem[t + 1], stem[t]);
        }
        let (src_in, _) = self.endpoints(in_arc);
        self.parent[u_in] = v_in;
        self.pred[u_in] = in_arc;
        self.pred_up[u_in] = u_in == src_in;
        self.children[v_in].push(u_in);
        for t in 1..stem.len() {
            let (s, prev) = (stem[t], stem[t - 1]);
            self.parent[s] = prev;
            self.pred[s] = old[t - 1].0;
            self.pred_up[s] = !old[t - 1].1;
            self.children[prev].push(s);
        }

        let c = self.arc_cost(in_arc);
        let sigma = if self.pred_up[u_in] {
            self.pi[v_in] - c - self.pi[u_in]
        } else {
            self.pi[v_in] + c - self.pi[u_in]
        };
        let mut stack = vec![u_in];
        while let Some(x) = stack.pop() {
            self.pi[x] += sigma;
            self.depth[x] = self.depth[self.parent[x]] + 1;
            stack.extend_from_slice(&self.children[x]);
        }
        Ok(())
    }
}

/// Solves `min <cost, P>` over couplings of `a` and `b`.
///
/// Zero-mass rows and columns are removed before solving; their potentials
/// are filled in afterwards so the dual certificate covers the full matrix.
pub fn network_simplex(a: &[f64], b: &[f64], cost: ArrayView2<f64>, max_pivots: usize) -> Result<ExactSolution> {
    let (na, nb) = cost.dim();
    if a.len() != na || b.len() != nb {
        return Err(Error::DimensionMismatch(format!(
            "cost is {na}x{nb} but marginals have {} and {} entries",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|m| !(*m >= 0.0) || !m.is_finite()) {
        return Err(Error::invalid("marginals must be nonnegative"));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cost matrix has non-finite entries"));
    }
    let (sa, sb) = (accurate_sum(a.iter().copied()), accurate_sum(b.iter().copied()));
    if (sa - sb).abs() > 1e-9 * sa.max(sb).max(1.0) {
        return Err(Error::Unbalanced(sa - sb));
    }
    let rows: Vec<usize> = (0..na).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..nb).filter(|&j| b[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::invalid("marginals carry no mass"));
    }
    let (n1, n2) = (rows.len(), cols.len());
    let n = n1 + n2;
    let root = n;
    let mut compact = Vec::with_capacity(n1 * n2);
    for &i in &rows {
        for &j in &cols {
            compact.push(cost[[i, j]]);
        }
    }
    let max_abs = compact.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let art_cost = (max_abs + 1.0) * (n as f64 + 1.0);
    let eps = 64.0 * f64::EPSILON * max_abs.max(1e-300);

    let nt = n1 * n2;
    let mut tree = Tree {
        n1,
        n2,
        root,
        cost: compact,
        art_cost,
        flow: vec![0.0; nt + n],
        in_tree: vec![false; nt + n],
        parent: vec![root; n + 1],
        pred: vec![NONE; n + 1],
        pred_up: vec![false; n + 1],
        depth: vec![1; n + 1],
        children: vec![Vec::new(); n + 1],
        pi: vec![0.0; n + 1],
    };
    tree.parent[root] = NONE;
    tree.depth[root] = 0;
    tree.children[root] = (0..n).collect();
    for u in 0..n {
        let e = nt + u;
        tree.pred[u] = e;
        tree.in_tree[e] = true;
        if u < n1 {
            tree.pred_up[u] = true;
            tree.flow[e] = a[rows[u]];
            tree.pi[u] = 0.0;
        } else {
            tree.pred_up[u] = false;
            tree.flow[e] = b[cols[u - n1]];
            tree.pi[u] = art_cost;
        }
    }

    let block = ((nt as f64).sqrt().ceil() as usize).max(10);
    let mut next_arc = 0usize;
    let mut pivots = 0usize;
    loop {
        // block search for the entering arc
        let mut best = NONE;
        let mut best_val = -eps;
        let mut scanned = 0usize;
        let mut count = 0usize;
        let mut e = next_arc;
        while scanned < nt {
            if !tree.in_tree[e] {
                let rc = tree.reduced_cost(e);
                if rc < best_val {
                    best_val = rc;
                    best = e;
                }
            }
            scanned += 1;
            count += 1;
            e += 1;
            if e == nt {
                e = 0;
            }
            if count == block {
                if best != NONE {
                    break;
                }
                count = 0;
            }
        }
        if best == NONE {
            break;
        }
        next_arc = e;
        if pivots >= max_pivots {
            return Err(Error::numerical(format!(
                "network simplex hit the pivot cap of {max_pivots}"
            )));
        }
        tree.pivot(best)?;
        pivots += 1;
    }

    let residual: f64 = (nt..nt + n).map(|e| tree.flow[e].abs()).sum();
    if residual > 1e-8 * sa.max(1.0) {
        return Err(Error::numerical(format!(
            "artificial arcs carry {residual:e} mass at optimum"
        )));
    }

    let mut flows = Vec::new();
    let mut total = Vec::new();
    for e in 0..nt {
        if tree.in_tree[e] && tree.flow[e] > 0.0 {
            let (i, j) = (rows[e / n2], cols[e % n2]);
            flows.push((i, j, tree.flow[e]));
            total.push(tree.flow[e] * cost[[i, j]]);
        }
    }

    let mut u = vec![f64::NAN; na];
    let mut v = vec![f64::NAN; nb];
    for (r, &i) in rows.iter().enumerate() {
        u[i] = -tree.pi[r];
    }
    for (c, &j) in cols.iter().enumerate() {
        v[j] = tree.pi[n1 + c];
    }
    for i in 0..na {
        if u[i].is_nan() {
            u[i] = cols.iter().map(|&j| cost[[i, j]] - v[j]).fold(f64::INFINITY, f64::min);
        }
    }
    for j in 0..nb {
        if v[j].is_nan() {
            v[j] = (0..na).map(|i| cost[[i, j]] - u[i]).fold(f64::INFINITY, f64::min);
        }
    }

    Ok(ExactSolution {
        flows,
        cost: accurate_sum(total),
        row_potentials: u,
        col_potentials: v,
        pivots,
    })
}

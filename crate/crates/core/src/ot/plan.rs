use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::util::accurate_sum;

/// Weighted atoms on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct Atoms1D {
    pub positions: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Atoms1D {
    pub fn new(positions: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if positions.len() != masses.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} positions but {} masses",
                positions.len(),
                masses.len()
            )));
        }
        if positions.is_empty() {
            return Err(Error::invalid("no atoms"));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite atom position"));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::invalid("atom masses must be nonnegative"));
        }
        Ok(Atoms1D { positions, masses })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        accurate_sum(self.masses.iter().copied())
    }
}

/// Sparse transport plan as `(source, target, mass)` triplets sorted by
/// `(source, target)`, every mass strictly positive.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparsePlan {
    triplets: Vec<(usize, usize, f64)>,
}

impl SparsePlan {
    /// Sorts, merges duplicate entries and drops non-positive masses.
    pub fn from_triplets(mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (i, j, m) in triplets {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += m,
                _ => merged.push((i, j, m)),
            }
        }
        merged.retain(|t| t.2 > 0.0);
        SparsePlan { triplets: merged }
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Entries of source row `i`.
    pub fn row(&self, i: usize) -> &[(usize, usize, f64)] {
        let start = self.triplets.partition_point(|t| t.0 < i);
        let end = self.triplets.partition_point(|t| t.0 <= i);
        &self.triplets[start..end]
    }

    pub fn mass_at(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .find(|t| t.1 == j)
            .map_or(0.0, |t| t.2)
    }

    pub fn total_mass(&self) -> f64 {
        accurate_sum(self.triplets.iter().map(|t| t.2))
    }

    pub fn row_sums(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(i, _, m) in &self.triplets {
            out[i] += m;
        }
        out
    }

    pub fn col_sums(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; k];
        for &(_, j, m) in &self.triplets {
            out[j] += m;
        }
        out
    }

    /// `sum cost(i, j) * mass` over the support.
    pub fn cost_with(&self, mut cost: impl FnMut(usize, usize) -> f64) -> f64 {
        accurate_sum(self.triplets.iter().map(|&(i, j, m)| cost(i, j) * m))
    }

    /// `(1 - beta) * a + beta * b`. `beta == 0` and `beta == 1` return exact copies.
    pub fn blend(a: &SparsePlan, b: &SparsePlan, beta: f64) -> SparsePlan {
        if beta == 0.0 {
            return a.clone();
        }
        if beta == 1.0 {
            return b.clone();
        }
        let mut t: Vec<_> = a.triplets.iter().map(|&(i, j, m)| (i, j, (1.0 - beta) * m)).collect();
        t.extend(b.triplets.iter().map(|&(i, j, m)| (i, j, beta * m)));
        SparsePlan::from_triplets(t)
    }

    pub fn to_dense(&self, n: usize, k: usize) -> Array2<f64> {
        let mut out = Array2::zeros((n, k));
        for &(i, j, m) in &self.triplets {
            out[[i, j]] += m;
        }
        out
    }
}

/// Dense coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCoupling(pub Array2<f64>);

impl DiscreteCoupling {
    pub fn product(mu: &[f64], nu: &[f64]) -> Self {
        DiscreteCoupling(Array2::from_shape_fn((mu.len(), nu.len()), |(i, j)| mu[i] * nu[j]))
    }

    /// Diagonal coupling of a measure with itself.
    pub fn diagonal(mu: &[f64]) -> Self {
        let mut m = Array2::zeros((mu.len(), mu.len()));
        for (i, &w) in mu.iter().enumerate() {
            m[[i, i]] = w;
        }
        DiscreteCoupling(m)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.0.rows().into_iter().map(|r| accurate_sum(r.iter().copied())).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.0.columns().into_iter().map(|c| accurate_sum(c.iter().copied())).collect()
    }

    pub fn total_mass(&self) -> f64 {
        accurate_sum(self.0.iter().copied())
    }

    /// Nonzero entries as a sparse plan.
    pub fn to_sparse(&self) -> SparsePlan {
        let mut t = Vec::new();
        for ((i, j), &m) in self.0.indexed_iter() {
            if m > 0.0 {
                t.push((i, j, m));
            }
        }
        SparsePlan { triplets: t }
    }

    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|&&m| m != 0.0).count()
    }

    /// Largest absolute deviation of the marginals from `(mu, nu)`.
    pub fn marginal_error(&self, mu: &[f64], nu: &[f64]) -> f64 {
        let r = self.row_sums();
        let c = self.col_sums();
        r.iter()
            .zip(mu)
            .chain(c.iter().zip(nu))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

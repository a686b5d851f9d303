//! Pointed partitions: random Voronoi cells for any space, fluid communities
//! with PageRank representatives for graphs.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Graph, MmSpace, PointedPartition, SpaceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMethod {
    Voronoi,
    Fluid,
}

/// Requested number of blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockCount {
    Count(usize),
    /// `m = floor(p * N)`, raised to 1 when that would be 0.
    Fraction(f64),
}

impl BlockCount {
    pub fn resolve(self, n: usize) -> Result<usize> {
        let m = match self {
            BlockCount::Count(m) => m,
            BlockCount::Fraction(p) => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::invalid(format!("sample fraction must be in (0, 1], got {p}")));
                }
                ((p * n as f64).floor() as usize).max(1)
            }
        };
        if m == 0 || m > n {
            return Err(Error::invalid(format!("block count {m} must be in [1, {n}]")));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub method: PartitionMethod,
    pub size: BlockCount,
    pub seed: u64,
    pub pagerank_damping: f64,
    pub pagerank_tol: f64,
    pub fluid_max_iter: usize,
}

impl PartitionConfig {
    pub fn new(method: PartitionMethod, size: BlockCount, seed: u64) -> Self {
        PartitionConfig {
            method,
            size,
            seed,
            pagerank_damping: 0.85,
            pagerank_tol: 1e-8,
            fluid_max_iter: 100,
        }
    }

    pub fn voronoi(size: BlockCount, seed: u64) -> Self {
        Self::new(PartitionMethod::Voronoi, size, seed)
    }

    pub fn fluid(size: BlockCount, seed: u64) -> Self {
        Self::new(PartitionMethod::Fluid, size, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pagerank_damping > 0.0 && self.pagerank_damping < 1.0) {
            return Err(Error::invalid("pagerank damping must be in (0, 1)"));
        }
        if !(self.pagerank_tol > 0.0) {
            return Err(Error::invalid("pagerank tolerance must be positive"));
        }
        Ok(())
    }
}

/// Dispatches on `config.method`.
pub fn partition(space: &MmSpace, config: &PartitionConfig) -> Result<PointedPartition> {
    match config.method {
        PartitionMethod::Voronoi => voronoi_partition(space, config),
        PartitionMethod::Fluid => fluid_partition(space, config),
    }
}

// Seeded draw of `m` distinct indices among points with positive mass.
fn draw_points(space: &MmSpace, m: usize, seed: u64) -> Result<Vec<usize>> {
    let eligible: Vec<usize> = (0..space.len()).filter(|&i| space.measure()[i] > 0.0).collect();
    if m > eligible.len() {
        return Err(Error::invalid(format!(
            "block count {m} exceeds the {} points with positive mass",
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, eligible.len(), m).into_iter().map(|i| eligible[i]).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Voronoi partition around `m` representatives sampled without replacement.
pub fn voronoi_partition(space: &MmSpace, config: &PartitionConfig) -> Result<PointedPartition> {
    config.validate()?;
    let m = config.size.resolve(space.len())?;
    let reps = draw_points(space, m, config.seed)?;
    voronoi_with_representatives(space, &reps)
}

/// Voronoi partition around given representatives. Representatives are sorted
/// by point index; ties between cells go to the lower one.
pub fn voronoi_with_representatives(space: &MmSpace, representatives: &[usize]) -> Result<PointedPartition> {
    let n = space.len();
    let mut reps = representatives.to_vec();
    reps.sort_unstable();
    if reps.is_empty() || reps.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("representatives must be nonempty and distinct"));
    }
    if let Some(&r) = reps.iter().find(|&&r| r >= n) {
        return Err(Error::IndexOutOfRange { index: r, len: n });
    }

    let assignment: Vec<usize> = if space.kind() == SpaceKind::Graph {
        // one shortest-path sweep per representative, merged in order
        let rows: Vec<Vec<f64>> = reps.par_iter().map(|&r| space.distances_from(r)).collect::<Result<_>>()?;
        let mut best = vec![(f64::INFINITY, 0usize); n];
        for (p, row) in rows.iter().enumerate() {
            for (b, &d) in best.iter_mut().zip(row) {
                if d < b.0 {
                    *b = (d, p);
                }
            }
        }
        best.into_iter().map(|(_, p)| p).collect()
    } else {
        (0..n)
            .into_par_iter()
            .map(|x| {
                let mut best = (f64::INFINITY, 0usize);
                for (p, &r) in reps.iter().enumerate() {
                    let d = space.distance(x, r)?;
                    if d < best.0 {
                        best = (d, p);
                    }
                }
                Ok(best.1)
            })
            .collect::<Result<_>>()?
    };
    let mut assignment = assignment;
    for (p, &r) in reps.iter().enumerate() {
        assignment[r] = p;
    }
    PointedPartition::from_assignment(space.measure(), &assignment, reps)
}

/// Fluid-communities partition of a connected graph with PageRank
/// representatives.
pub fn fluid_partition(space: &MmSpace, config: &PartitionConfig) -> Result<PointedPartition> {
    config.validate()?;
    let graph = require_connected_graph(space)?;
    let m = config.size.resolve(space.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seeds: Vec<usize> = sample(&mut rng, graph.num_nodes(), m).into_vec();
    seeds.sort_unstable();
    fluid_with_seeds(space, &seeds, config)
}

/// Fluid communities from explicit seed nodes.
pub fn fluid_with_seeds(space: &MmSpace, seeds: &[usize], config: &PartitionConfig) -> Result<PointedPartition> {
    config.validate()?;
    let graph = require_connected_graph(space)?;
    let labels = fluid_communities(graph, seeds, config.fluid_max_iter)?;
    let scores = pagerank(space, config.pagerank_damping, config.pagerank_tol)?;
    let count = labels.iter().copied().max().map_or(0, |c| c + 1);
    let mut reps: Vec<Option<usize>> = vec![None; count];
    for (x, &c) in labels.iter().enumerate() {
        if space.measure()[x] <= 0.0 {
            continue;
        }
        match reps[c] {
            Some(r) if scores[x] <= scores[r] => {}
            _ => reps[c] = Some(x),
        }
    }
    let reps = reps
        .into_iter()
        .enumerate()
        .map(|(c, r)| r.ok_or_else(|| Error::invalid(format!("community {c} has no point with positive mass"))))
        .collect::<Result<Vec<_>>>()?;
    PointedPartition::from_assignment(space.measure(), &labels, reps)
}

fn require_connected_graph(space: &MmSpace) -> Result<&Graph> {
    let graph = space
        .graph()
        .ok_or_else(|| Error::invalid("fluid partitioning needs a graph space"))?;
    if !graph.is_connected() {
        let comp = graph.components();
        let t = comp.iter().position(|&c| c != comp[0]).unwrap_or(0);
        return Err(Error::Disconnected { from: 0, target: t });
    }
    Ok(graph)
}

/// Fluid-communities label propagation with a fixed node-index sweep order.
///
/// Each community has density `1 / size`. A node scores every community by
/// summing densities over itself and its neighbors, keeps its community when
/// that is among the maxima and otherwise joins the lowest-index maximizer.
/// Stops after a sweep without changes or `max_iter` sweeps. Nodes still
/// unlabeled are then attached by breadth-first search. Returns compact
/// community labels ordered by first seed.
pub fn fluid_communities(graph: &Graph, seeds: &[usize], max_iter: usize) -> Result<Vec<usize>> {
    let n = graph.num_nodes();
    const NONE: usize = usize::MAX;
    let mut label = vec![NONE; n];
    let mut size = vec![0usize; seeds.len()];
    for (c, &s) in seeds.iter().enumerate() {
        if s >= n {
            return Err(Error::IndexOutOfRange { index: s, len: n });
        }
        if label[s] != NONE {
            return Err(Error::invalid(format!("seed {s} repeated")));
        }
        label[s] = c;
        size[c] = 1;
    }
    let mut score = vec![0.0f64; seeds.len()];
    let mut touched: Vec<usize> = Vec::new();
    for _ in 0..max_iter {
        let mut changed = false;
        for v in 0..n {
            touched.clear();
            let add = |c: usize, score: &mut [f64], touched: &mut Vec<usize>| {
                if c != NONE {
                    if score[c] == 0.0 {
                        touched.push(c);
                    }
                    score[c] += 1.0 / size[c] as f64;
                }
            };
            add(label[v], &mut score, &mut touched);
            for (u, _) in graph.neighbors(v) {
                if u != v {
                    add(label[u], &mut score, &mut touched);
                }
            }
            if touched.is_empty() {
                continue;
            }
            let best = touched.iter().map(|&c| score[c]).fold(f64::NEG_INFINITY, f64::max);
            let current = label[v];
            let keep = current != NONE && score[current] == best;
            if !keep {
                let target = touched.iter().copied().filter(|&c| score[c] == best).min().expect("nonempty");
                if current != NONE {
                    size[current] -= 1;
                }
                size[target] += 1;
                label[v] = target;
                changed = true;
            }
            for &c in &touched {
                score[c] = 0.0;
            }
        }
        if !changed {
            break;
        }
    }

    // attach leftovers breadth-first from labeled nodes, in index order
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| label[v] != NONE).collect();
    while let Some(v) = queue.pop_front() {
        for (u, _) in graph.neighbors(v) {
            if label[u] == NONE {
                label[u] = label[v];
                queue.push_back(u);
            }
        }
    }
    if label.contains(&NONE) {
        return Err(Error::invalid("graph has nodes unreachable from every seed"));
    }

    // compact, dropping empty communities
    let mut remap = vec![NONE; seeds.len()];
    let mut next = 0;
    for &s in seeds {
        let c = label[s];
        if remap[c] == NONE {
            remap[c] = next;
            next += 1;
        }
    }
    for l in &mut label {
        if remap[*l] == NONE {
            remap[*l] = next;
            next += 1;
        }
        *l = remap[*l];
    }
    Ok(label)
}

/// PageRank by power iteration on the unweighted, undirected adjacency.
///
/// Dangling nodes spread their mass uniformly. Iterates until the L1 change
/// drops below `tol`.
pub fn pagerank(space: &MmSpace, damping: f64, tol: f64) -> Result<Vec<f64>> {
    let graph = space.graph().ok_or_else(|| Error::invalid("pagerank needs a graph space"))?;
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::invalid("damping must be in (0, 1)"));
    }
    let n = graph.num_nodes();
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    const MAX_ITER: usize = 100_000;
    for _ in 0..MAX_ITER {
        let mut dangling = 0.0;
        next.iter_mut().for_each(|v| *v = 0.0);
        for v in 0..n {
            let deg = graph.degree(v);
            if deg == 0 {
                dangling += x[v];
                continue;
            }
            let share = x[v] / deg as f64;
            for (u, _) in graph.neighbors(v) {
                next[u] += share;
            }
        }
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        let mut change = 0.0;
        for (nv, &xv) in next.iter_mut().zip(&x) {
            *nv = damping * *nv + base;
            change += (*nv - xv).abs();
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        std::mem::swap(&mut x, &mut next);
        if change < tol {
            return Ok(x);
        }
    }
    Err(Error::numerical("pagerank did not converge"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> MmSpace {
        let coords = ndarray::Array2::from_shape_vec((points.len(), 1), points.to_vec()).unwrap();
        MmSpace::from_points(coords, None).unwrap()
    }

    fn graph(n: usize, edges: &[(usize, usize)]) -> MmSpace {
        let e: Vec<_> = edges.iter().map(|&(u, v)| (u, v, 1.0)).collect();
        MmSpace::from_graph(n, &e, None).unwrap()
    }

    #[test]
    fn block_count_resolution() {
        assert_eq!(BlockCount::Fraction(0.1).resolve(100).unwrap(), 10);
        assert_eq!(BlockCount::Fraction(0.001).resolve(100).unwrap(), 1);
        assert!(BlockCount::Count(5).resolve(4).is_err());
        assert!(BlockCount::Count(0).resolve(4).is_err());
        assert!(BlockCount::Fraction(0.0).resolve(4).is_err());
    }

    #[test]
    fn voronoi_saturated_and_trivial() {
        let s = line(&[0.0, 1.0, 2.0, 3.0, 7.0]);
        let p = voronoi_partition(&s, &PartitionConfig::voronoi(BlockCount::Count(5), 3)).unwrap();
        assert_eq!(p, PointedPartition::identity(&s).unwrap());
        let p = voronoi_partition(&s, &PartitionConfig::voronoi(BlockCount::Count(1), 3)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.block(0), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn voronoi_forced_reps() {
        let s = line(&[0.0, 1.0, 2.0, 3.0]);
        let p = voronoi_with_representatives(&s, &[3, 0]).unwrap();
        assert_eq!(p.blocks(), &[vec![0, 1], vec![2, 3]]);
        assert_eq!(p.representatives(), &[0, 3]);
        // midpoint tie goes to the lower representative
        let s = line(&[0.0, 1.0, 2.0]);
        let p = voronoi_with_representatives(&s, &[0, 2]).unwrap();
        assert_eq!(p.blocks(), &[vec![0, 1], vec![2]]);
    }

    #[test]
    fn voronoi_deterministic() {
        let s = line(&(0..50).map(|i| (i * i % 17) as f64).collect::<Vec<_>>());
        let c = PartitionConfig::voronoi(BlockCount::Count(7), 11);
        assert_eq!(voronoi_partition(&s, &c).unwrap(), voronoi_partition(&s, &c).unwrap());
    }

    #[test]
    fn graph_voronoi_matches_dense() {
        let g = graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)]);
        let dense = MmSpace::from_distance_matrix(g.distance_matrix().unwrap(), None).unwrap();
        let a = voronoi_with_representatives(&g, &[1, 4]).unwrap();
        let b = voronoi_with_representatives(&dense, &[1, 4]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pagerank_examples() {
        let pr = pagerank(&graph(2, &[(0, 1)]), 0.85, 1e-12).unwrap();
        assert!((pr[0] - 0.5).abs() < 1e-12 && (pr[1] - 0.5).abs() < 1e-12);
        let pr = pagerank(&graph(3, &[(0, 1), (1, 2), (0, 2)]), 0.85, 1e-12).unwrap();
        assert!(pr.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        let d = 0.85;
        let end = (d / 2.0 + (1.0 - d) / 3.0) / (1.0 + d);
        let pr = pagerank(&graph(3, &[(0, 1), (1, 2)]), d, 1e-12).unwrap();
        assert!((pr[0] - end).abs() < 1e-10 && (pr[2] - end).abs() < 1e-10);
        assert!((pr[1] - (1.0 - 2.0 * end)).abs() < 1e-10);
        let pr = pagerank(&graph(1, &[]), 0.85, 1e-12).unwrap();
        assert_eq!(pr, vec![1.0]);
    }

    #[test]
    fn fluid_two_triangles() {
        let g = graph(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]);
        let cfg = PartitionConfig::fluid(BlockCount::Count(2), 0);
        let p = fluid_with_seeds(&g, &[0, 3], &cfg).unwrap();
        assert_eq!(p.blocks(), &[vec![0, 1, 2], vec![3, 4, 5]]);
        // bridge endpoints have the highest PageRank in each triangle
        assert_eq!(p.representatives(), &[2, 3]);
        let p = fluid_partition(&g, &cfg).unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn fluid_single_block_star() {
        let g = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let p = fluid_partition(&g, &PartitionConfig::fluid(BlockCount::Count(1), 9)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.representatives(), &[0]);
    }

    #[test]
    fn fluid_rejects_disconnected_and_points() {
        let g = graph(4, &[(0, 1), (2, 3)]);
        let cfg = PartitionConfig::fluid(BlockCount::Count(2), 0);
        assert!(matches!(fluid_partition(&g, &cfg), Err(Error::Disconnected { .. })));
        let s = line(&[0.0, 1.0]);
        assert!(fluid_partition(&s, &cfg).is_err());
    }
}

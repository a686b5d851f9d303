//! Undirected weighted graphs stored in CSR form, with lazy geodesics.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Undirected graph with nonnegative edge lengths.
#[derive(Debug, Clone)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    lengths: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Graph {
    /// Builds a graph on `n` nodes from `(u, v, length)` triples. Each edge is
    /// stored in both directions.
    pub fn new(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut degree = vec![0usize; n];
        for &(u, v, w) in edges {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::IndexOutOfRange { index: x, len: n });
                }
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) has invalid length {w}"
                )));
            }
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let total = *offsets.last().unwrap();
        let mut neighbors = vec![0usize; total];
        let mut lengths = vec![0f64; total];
        let mut cursor = offsets[..n].to_vec();
        for &(u, v, w) in edges {
            neighbors[cursor[u]] = v;
            lengths[cursor[u]] = w;
            cursor[u] += 1;
            neighbors[cursor[v]] = u;
            lengths[cursor[v]] = w;
            cursor[v] += 1;
        }
        Ok(Graph {
            offsets,
            neighbors,
            lengths,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of stored undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    /// Neighbors of `u` with edge lengths.
    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[u]..self.offsets[u + 1];
        self.neighbors[range.clone()]
            .iter()
            .copied()
            .zip(self.lengths[range].iter().copied())
    }

    /// Single-source shortest paths. Unreached nodes are `f64::INFINITY`.
    ///
    /// When `targets` is given the search stops once every target is settled;
    /// distances of nodes not yet settled at that point are upper bounds only.
    pub fn dijkstra(&self, source: usize, targets: Option<&[usize]>) -> Vec<f64> {
        let n = self.num_nodes();
        let mut dist = vec![f64::INFINITY; n];
        let mut settled = vec![false; n];
        let mut remaining = match targets {
            Some(t) => {
                let mut want = vec![false; n];
                let mut count = 0usize;
                for &x in t {
                    if !want[x] {
                        want[x] = true;
                        count += 1;
                    }
                }
                Some((want, count))
            }
            None => None,
        };
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            node: source,
        });
        while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
            if settled[u] {
                continue;
            }
            settled[u] = true;
            if let Some((want, count)) = remaining.as_mut() {
                if want[u] {
                    *count -= 1;
                    if *count == 0 {
                        break;
                    }
                }
            }
            for (v, w) in self.neighbors(u) {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapEntry { dist: nd, node: v });
                }
            }
        }
        dist
    }

    /// Connected-component labels (BFS order, lowest node first).
    pub fn components(&self) -> Vec<usize> {
        let n = self.num_nodes();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut queue = std::collections::VecDeque::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for (v, _) in self.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_geodesics() {
        let g = Graph::new(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        assert_eq!(g.dijkstra(1, None), vec![1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn shortcut_through_middle_vertex() {
        let g = Graph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 5.0)]).unwrap();
        assert_eq!(g.dijkstra(0, None)[2], 2.0);
    }

    #[test]
    fn early_exit_still_settles_targets() {
        let g = Graph::new(5, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0)]).unwrap();
        let d = g.dijkstra(0, Some(&[1]));
        assert_eq!(d[1], 1.0);
    }

    #[test]
    fn rejects_out_of_range_and_negative() {
        assert!(matches!(
            Graph::new(2, &[(0, 2, 1.0)]),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
        assert!(Graph::new(2, &[(0, 1, -1.0)]).is_err());
    }

    #[test]
    fn components_split() {
        let g = Graph::new(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert_eq!(g.components(), vec![0, 0, 1, 1]);
        assert!(!g.is_connected());
    }
}

use ndarray::Array2;
use rayon::prelude::*;

use super::MmSpace;
use crate::error::{Error, Result};
use crate::util::accurate_sum;

/// Disjoint blocks covering a space, each with a distinguished representative.
///
/// Block members are kept in ascending point order; "block-local" indices
/// used by local plans are positions in that list.
#[derive(Debug, Clone, PartialEq)]
pub struct PointedPartition {
    blocks: Vec<Vec<usize>>,
    representatives: Vec<usize>,
    block_measure: Vec<f64>,
    assignment: Vec<usize>,
    local_index: Vec<usize>,
}

impl PointedPartition {
    /// Validates and builds a partition of a space with the given measure.
    pub fn new(measure: &[f64], blocks: Vec<Vec<usize>>, representatives: Vec<usize>) -> Result<Self> {
        let n = measure.len();
        if blocks.is_empty() {
            return Err(Error::invalid("partition has no blocks"));
        }
        if blocks.len() != representatives.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} blocks but {} representatives",
                blocks.len(),
                representatives.len()
            )));
        }
        let mut assignment = vec![usize::MAX; n];
        let mut local_index = vec![usize::MAX; n];
        let mut sorted_blocks = Vec::with_capacity(blocks.len());
        for (p, mut block) in blocks.into_iter().enumerate() {
            if block.is_empty() {
                return Err(Error::invalid(format!("block {p} is empty")));
            }
            block.sort_unstable();
            for (pos, &x) in block.iter().enumerate() {
                if x >= n {
                    return Err(Error::IndexOutOfRange { index: x, len: n });
                }
                if assignment[x] != usize::MAX {
                    return Err(Error::invalid(format!("point {x} is in two blocks")));
                }
                assignment[x] = p;
                local_index[x] = pos;
            }
            sorted_blocks.push(block);
        }
        if let Some(x) = assignment.iter().position(|&a| a == usize::MAX) {
            return Err(Error::invalid(format!("point {x} is not covered")));
        }
        for (p, &r) in representatives.iter().enumerate() {
            if r >= n || assignment[r] != p {
                return Err(Error::invalid(format!(
                    "representative {r} is not a member of block {p}"
                )));
            }
            if measure[r] <= 0.0 {
                return Err(Error::invalid(format!(
                    "representative {r} of block {p} has zero mass"
                )));
            }
        }
        let block_measure: Vec<f64> = sorted_blocks
            .iter()
            .map(|b| accurate_sum(b.iter().map(|&x| measure[x])))
            .collect();
        Ok(PointedPartition {
            blocks: sorted_blocks,
            representatives,
            block_measure,
            assignment,
            local_index,
        })
    }

    /// Builds a partition from a point-to-block assignment.
    pub fn from_assignment(measure: &[f64], assignment: &[usize], representatives: Vec<usize>) -> Result<Self> {
        if assignment.len() != measure.len() {
            return Err(Error::DimensionMismatch(format!(
                "assignment has {} entries for {} points",
                assignment.len(),
                measure.len()
            )));
        }
        let m = representatives.len();
        let mut blocks = vec![Vec::new(); m];
        for (x, &p) in assignment.iter().enumerate() {
            if p >= m {
                return Err(Error::IndexOutOfRange { index: p, len: m });
            }
            blocks[p].push(x);
        }
        Self::new(measure, blocks, representatives)
    }

    /// Every point its own block.
    pub fn identity(space: &MmSpace) -> Result<Self> {
        let n = space.len();
        Self::new(space.measure(), (0..n).map(|x| vec![x]).collect(), (0..n).collect())
    }

    /// One block holding every point.
    pub fn single_block(space: &MmSpace, representative: usize) -> Result<Self> {
        Self::new(space.measure(), vec![(0..space.len()).collect()], vec![representative])
    }

    /// Number of blocks `m`.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn num_points(&self) -> usize {
        self.assignment.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, p: usize) -> &[usize] {
        &self.blocks[p]
    }

    pub fn representatives(&self) -> &[usize] {
        &self.representatives
    }

    pub fn representative(&self, p: usize) -> usize {
        self.representatives[p]
    }

    /// Pushforward of the measure onto the representatives.
    pub fn block_measure(&self) -> &[f64] {
        &self.block_measure
    }

    pub fn block_of(&self, x: usize) -> usize {
        self.assignment[x]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Position of `x` inside its block.
    pub fn local_index(&self, x: usize) -> usize {
        self.local_index[x]
    }

    /// Block-local position of the representative of block `p`.
    pub fn representative_local(&self, p: usize) -> usize {
        self.local_index[self.representatives[p]]
    }

    pub fn max_block_size(&self) -> usize {
        self.blocks.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// The representatives with the restricted metric and pushforward measure.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedRepresentation {
    pub rep_distances: Array2<f64>,
    pub rep_measure: Vec<f64>,
}

/// Builds the quantized representation; costs `m` rep-row queries.
pub fn quantized_representation(space: &MmSpace, partition: &PointedPartition) -> Result<QuantizedRepresentation> {
    check_partition(space, partition)?;
    let reps = partition.representatives();
    let m = reps.len();
    let rows: Vec<Vec<f64>> = reps
        .par_iter()
        .enumerate()
        .map(|(p, &r)| space.rep_row_distances(r, &reps[p..]))
        .collect::<Result<_>>()?;
    let mut rep_distances = Array2::zeros((m, m));
    for p in 0..m {
        for q in (p + 1)..m {
            let d = rows[p][q - p];
            rep_distances[[p, q]] = d;
            rep_distances[[q, p]] = d;
        }
    }
    Ok(QuantizedRepresentation {
        rep_distances,
        rep_measure: partition.block_measure().to_vec(),
    })
}

/// Radial distances from a block representative to the block members, with
/// the normalized block measure. Both vectors follow block-local order.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRadialProfile {
    pub block: usize,
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
    /// Block-local position of the representative (its radius is 0).
    pub rep_local: usize,
}

pub fn radial_profile(space: &MmSpace, partition: &PointedPartition, p: usize) -> Result<BlockRadialProfile> {
    let members = partition.block(p);
    let rep = partition.representative(p);
    let mut radii = space.rep_row_distances(rep, members)?;
    let rep_local = partition.representative_local(p);
    radii[rep_local] = 0.0;
    let total = partition.block_measure()[p];
    let measure = space.measure();
    let masses = members.iter().map(|&x| measure[x] / total).collect();
    Ok(BlockRadialProfile {
        block: p,
        radii,
        masses,
        rep_local,
    })
}

/// Radial profiles of every block, computed in parallel.
pub fn radial_profiles(space: &MmSpace, partition: &PointedPartition) -> Result<Vec<BlockRadialProfile>> {
    check_partition(space, partition)?;
    (0..partition.len())
        .into_par_iter()
        .map(|p| radial_profile(space, partition, p))
        .collect()
}

pub(crate) fn check_partition(space: &MmSpace, partition: &PointedPartition) -> Result<()> {
    if partition.num_points() != space.len() {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {} points but the space has {}",
            partition.num_points(),
            space.len()
        )));
    }
    Ok(())
}

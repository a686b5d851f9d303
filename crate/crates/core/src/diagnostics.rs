//! Theory checks and evaluation metrics.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gw::{gw_loss, gw_loss_sparse};
use crate::ot::DiscreteCoupling;
use crate::qgw::{DistanceLookup, QuantizationCoupling, DENSE_CAP};
use crate::space::{quantized_representation, radial_profiles, MmSpace, PointedPartition};
use crate::util::accurate_sum;

/// Eccentricities, block diameters and the bound values built from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Quantized eccentricity of the source partition; an upper bound on the
    /// minimum over all partitions with the same block count.
    pub q_px: f64,
    pub q_py: f64,
    /// Largest block diameter on each side.
    pub eps_x: f64,
    pub eps_y: f64,
    /// `2 (q_px + q_py)`, with the supplied partitions.
    pub thm2_bound: f64,
    /// `2 (q_px + q_py) + 8 max(eps_x, eps_y)`.
    pub thm3_bound: f64,
    /// `2 q_px`: bound on the GW distance between X and its quantization.
    pub lemma1_bound_x: f64,
    pub lemma1_bound_y: f64,
}

/// `s(x) = (sum_x' d(x, x')^2 mu(x'))^(1/2)`.
pub fn eccentricity(space: &MmSpace, x: usize) -> Result<f64> {
    let d = space.distances_from(x)?;
    Ok(accurate_sum(d.iter().zip(space.measure()).map(|(d, m)| d * d * m)).sqrt())
}

/// `q(P) = (sum_p mu(U^p) s_{U^p}(x^p)^2)^(1/2)`, with `s_{U^p}` taken under
/// the normalized block measure.
pub fn quantized_eccentricity(space: &MmSpace, partition: &PointedPartition) -> Result<f64> {
    let profiles = radial_profiles(space, partition)?;
    let total = accurate_sum(profiles.iter().map(|pr| {
        let s2 = accurate_sum(pr.radii.iter().zip(&pr.masses).map(|(r, m)| r * r * m));
        partition.block_measure()[pr.block] * s2
    }));
    Ok(total.sqrt())
}

/// Exact diameter of every block by an intra-block pairwise scan.
pub fn block_diameters(space: &MmSpace, partition: &PointedPartition) -> Result<Vec<f64>> {
    (0..partition.len())
        .into_par_iter()
        .map(|p| {
            let members = partition.block(p);
            let mut best = 0.0f64;
            for (k, &i) in members.iter().enumerate() {
                if k + 1 == members.len() {
                    break;
                }
                let row = space.rep_row_distances(i, &members[k + 1..])?;
                best = row.into_iter().fold(best, f64::max);
            }
            Ok(best)
        })
        .collect()
}

/// Exact diameter of a space (pairwise scan).
pub fn diameter(space: &MmSpace) -> Result<f64> {
    let n = space.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let targets: Vec<usize> = (i + 1..n).collect();
            Ok(space.rep_row_distances(i, &targets)?.into_iter().fold(0.0, f64::max))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Coupling between X and its quantized representation that sends each
/// point to its block: `mu(x, p) = mu_X(x)` for `x` in `U^p`.
pub fn lemma1_projection_coupling(space: &MmSpace, partition: &PointedPartition) -> Result<DiscreteCoupling> {
    let (n, m) = (space.len(), partition.len());
    if n.saturating_mul(m) > DENSE_CAP {
        return Err(Error::SizeCap {
            what: "lemma1_projection_coupling",
            size: n * m,
            cap: DENSE_CAP,
        });
    }
    let mut c = Array2::zeros((n, m));
    for (x, &w) in space.measure().iter().enumerate() {
        c[[x, partition.block_of(x)]] = w;
    }
    Ok(DiscreteCoupling(c))
}

/// GW loss of the projection coupling between X and its quantization,
/// without forming the coupling or the N x N distance matrix.
pub fn lemma1_loss(space: &MmSpace, partition: &PointedPartition) -> Result<f64> {
    let q = quantized_representation(space, partition)?;
    let dx = DistanceLookup::new(space)?;
    let support: Vec<(usize, usize, f64)> = space
        .measure()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(x, &w)| (x, partition.block_of(x), w))
        .collect();
    Ok(gw_loss_sparse(|i, k| dx.get(i, k), |p, r| q.rep_distances[[p, r]], &support))
}

pub fn bound_report(x: &MmSpace, px: &PointedPartition, y: &MmSpace, py: &PointedPartition) -> Result<BoundReport> {
    let q_px = quantized_eccentricity(x, px)?;
    let q_py = quantized_eccentricity(y, py)?;
    let eps_x = block_diameters(x, px)?.into_iter().fold(0.0, f64::max);
    let eps_y = block_diameters(y, py)?.into_iter().fold(0.0, f64::max);
    let thm2_bound = 2.0 * (q_px + q_py);
    Ok(BoundReport {
        q_px,
        q_py,
        eps_x,
        eps_y,
        thm2_bound,
        thm3_bound: thm2_bound + 8.0 * eps_x.max(eps_y),
        lemma1_bound_x: 2.0 * q_px,
        lemma1_bound_y: 2.0 * q_py,
    })
}

fn check_matching(target: &MmSpace, matches: &[usize], ground_truth: &[usize]) -> Result<()> {
    if matches.len() != ground_truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} matches but {} ground-truth entries",
            matches.len(),
            ground_truth.len()
        )));
    }
    if matches.is_empty() {
        return Err(Error::invalid("empty matching"));
    }
    let n = target.len();
    if let Some(&bad) = matches.iter().chain(ground_truth).find(|&&t| t >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    Ok(())
}

/// Mean of `d_Y(ground_truth[x], matches[x])^2` over source points, in squared
/// target-metric units.
pub fn distortion_score(target: &MmSpace, matches: &[usize], ground_truth: &[usize]) -> Result<f64> {
    check_matching(target, matches, ground_truth)?;
    let d: Vec<f64> = matches
        .par_iter()
        .zip(ground_truth)
        .map(|(&m, &g)| target.distance(g, m).map(|d| d * d))
        .collect::<Result<_>>()?;
    Ok(accurate_sum(d) / matches.len() as f64)
}

/// [`distortion_score`] divided by the squared diameter of the target.
pub fn normalized_distortion_score(target: &MmSpace, matches: &[usize], ground_truth: &[usize], target_diameter: f64) -> Result<f64> {
    if !(target_diameter > 0.0) {
        return Err(Error::invalid("target diameter must be positive"));
    }
    Ok(distortion_score(target, matches, ground_truth)? / (target_diameter * target_diameter))
}

/// `100 * sum d(gt, match) / mean_r sum d(gt, random_r)` with graph distances.
///
/// Random matchings are uniform permutations when both sides have the same
/// size and iid uniform targets otherwise.
pub fn distortion_percentage(target: &MmSpace, matches: &[usize], ground_truth: &[usize], n_random: usize, seed: u64) -> Result<f64> {
    check_matching(target, matches, ground_truth)?;
    if n_random == 0 {
        return Err(Error::invalid("n_random must be positive"));
    }
    let (n, k) = (matches.len(), target.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let randoms: Vec<Vec<usize>> = (0..n_random)
        .map(|_| {
            if n == k {
                let mut perm: Vec<usize> = (0..k).collect();
                perm.shuffle(&mut rng);
                perm
            } else {
                (0..n).map(|_| rng.random_range(0..k)).collect()
            }
        })
        .collect();
    // one shortest-path query per source point covers all matchings
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut targets = vec![matches[x]];
            targets.extend(randoms.iter().map(|r| r[x]));
            let d = target.rep_row_distances(ground_truth[x], &targets)?;
            Ok((d[0], d[1..].iter().sum::<f64>()))
        })
        .collect::<Result<_>>()?;
    let matched = accurate_sum(rows.iter().map(|r| r.0));
    let baseline = accurate_sum(rows.iter().map(|r| r.1)) / n_random as f64;
    if !(baseline > 0.0) {
        return Err(Error::numerical("random matching baseline has zero distortion"));
    }
    Ok(100.0 * matched / baseline)
}

/// Fraction of source points whose match carries the same label.
pub fn segment_transfer_score<L: PartialEq>(matches: &[usize], labels_x: &[L], labels_y: &[L]) -> Result<f64> {
    if matches.len() != labels_x.len() {
        return Err(Error::DimensionMismatch("one source label per match is required".into()));
    }
    if matches.is_empty() {
        return Err(Error::invalid("empty matching"));
    }
    let mut hits = 0usize;
    for (&m, lx) in matches.iter().zip(labels_x) {
        let ly = labels_y.get(m).ok_or(Error::IndexOutOfRange {
            index: m,
            len: labels_y.len(),
        })?;
        if ly == lx {
            hits += 1;
        }
    }
    Ok(hits as f64 / matches.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeError {
    /// `(GW(prod) - GW(qgw)) / (GW(prod) - GW(ref))`; `None` when the
    /// denominator vanishes.
    pub value: Option<f64>,
    pub product_loss: f64,
    pub qgw_loss: f64,
    pub reference_loss: f64,
}

/// Relative error of a coupling against a reference GW coupling, both
/// measured from the product coupling.
pub fn relative_error(dx: ArrayView2<f64>, dy: ArrayView2<f64>, qgw: ArrayView2<f64>, reference: ArrayView2<f64>) -> Result<RelativeError> {
    let a = qgw.sum_axis(ndarray::Axis(1));
    let b = qgw.sum_axis(ndarray::Axis(0));
    let product = Array2::from_shape_fn(qgw.dim(), |(i, j)| a[i] * b[j]);
    let product_loss = gw_loss(dx, dy, product.view())?;
    let qgw_loss = gw_loss(dx, dy, qgw)?;
    let reference_loss = gw_loss(dx, dy, reference)?;
    let denom = product_loss - reference_loss;
    let scale = product_loss.abs().max(f64::MIN_POSITIVE);
    let value = if denom.abs() <= 1e-12 * scale { None } else { Some((product_loss - qgw_loss) / denom) };
    Ok(RelativeError {
        value,
        product_loss,
        qgw_loss,
        reference_loss,
    })
}

/// Transfers per-point colors along a coupling: each target receives the
/// average of source colors weighted by incoming mass. Targets with no
/// incoming mass get neutral gray.
pub fn color_transfer(qc: &QuantizationCoupling, source_colors: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = qc.source().num_points();
    if source_colors.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} colors for {n} source points",
            source_colors.nrows()
        )));
    }
    let k = qc.target().num_points();
    let c = source_colors.ncols();
    let mut acc = Array2::<f64>::zeros((k, c));
    let mut weight = vec![0.0; k];
    for (x, y, m) in qc.triplets() {
        weight[y] += m;
        let mut row = acc.row_mut(y);
        row.scaled_add(m, &source_colors.row(x));
    }
    for (mut row, &w) in acc.rows_mut().into_iter().zip(&weight) {
        if w > 0.0 {
            row.mapv_inplace(|v| (v / w).clamp(0.0, 1.0));
        } else {
            row.fill(0.5);
        }
    }
    Ok(acc)
}

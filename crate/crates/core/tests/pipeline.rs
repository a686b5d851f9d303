//! End-to-end properties of the quantized matching pipeline.

use ndarray::{Array2, Axis};
use qgw::diagnostics::{
    color_transfer, lemma1_loss, lemma1_projection_coupling, quantized_eccentricity,
};
use qgw::gw::{gw_loss, gw_loss_brute, GwConfig, GwInit, InnerSolver};
use qgw::harness::{blobs, derive_seed, uniform_cloud};
use qgw::ot::exact_ot_small;
use qgw::partitioning::{fluid_partition, voronoi_partition, BlockCount, PartitionConfig};
use qgw::qgw::{local_linear_match, match_qfgw, match_qgw, QgwConfig};
use qgw::space::{quantized_representation, radial_profile, MmSpace, PointedPartition, SpaceOptions};

fn cloud(n: usize, seed: u64) -> MmSpace {
    let coords = if seed.is_multiple_of(2) { blobs(n, seed).0 } else { uniform_cloud(n, seed) * 5.0 };
    MmSpace::from_points(coords, None).unwrap()
}

fn voronoi(space: &MmSpace, m: usize, seed: u64) -> PointedPartition {
    voronoi_partition(space, &PartitionConfig::voronoi(BlockCount::Count(m), seed)).unwrap()
}

fn identity_config() -> QgwConfig {
    QgwConfig {
        gw: GwConfig { init: GwInit::IdentityIfSquare, ..GwConfig::default() },
        ..QgwConfig::default()
    }
}

#[test]
fn quantization_couplings_are_couplings() {
    for trial in 0..50u64 {
        let s = derive_seed(3, &[trial]);
        let (nx, ny) = (20 + (s % 180) as usize, 20 + ((s >> 8) % 180) as usize);
        let x = cloud(nx, s);
        let y = cloud(ny, s + 1);
        let px = voronoi(&x, 1 + (s >> 16) as usize % nx.min(40), s);
        let py = voronoi(&y, 1 + (s >> 24) as usize % ny.min(40), s + 7);
        let (qc, report) = match_qgw(&x, &px, &y, &py, &QgwConfig::default()).unwrap();
        let dense = qc.densify_small().unwrap();
        assert!(dense.marginal_error(x.measure(), y.measure()) <= 1e-8, "trial {trial}");
        assert!(qc.nnz() <= qc.support_bound());
        assert_eq!(dense.nnz(), qc.nnz());
        for (&(p, q, _), local) in qc.global().triplets().iter().zip(qc.locals()) {
            assert!(local.mass_at(px.representative_local(p), py.representative_local(q)) > 0.0);
            let rows = local.row_sums(px.block(p).len());
            let prof = radial_profile(&x, &px, p).unwrap();
            assert!(rows.iter().zip(&prof.masses).all(|(a, b)| (a - b).abs() <= 1e-9));
        }
        let chain = report.thm3_chain.expect("small instance has a chain check");
        assert!(chain.holds, "trial {trial}: {chain:?}");
        let full = report.full_gw_loss.unwrap();
        let densified = gw_loss(x.distance_matrix().unwrap().view(), y.distance_matrix().unwrap().view(), dense.view()).unwrap();
        assert!((full - densified).abs() <= 1e-9 * (1.0 + full));
        assert_eq!(report.metric_interpretation_available, px.len() == py.len());
    }
}

#[test]
fn desk_instance_rows_and_argmax() {
    let x = cloud(6, 10);
    let y = cloud(6, 11);
    let px = voronoi(&x, 2, 1);
    let py = voronoi(&y, 2, 2);
    let (qc, _) = match_qgw(&x, &px, &y, &py, &QgwConfig::default()).unwrap();
    let dense = qc.densify_small().unwrap();
    let mut rebuilt = Array2::<f64>::zeros((6, 6));
    for i in 0..6 {
        let row = qc.expand_row(i);
        for &(j, m) in &row.raw {
            rebuilt[[i, j]] += m;
        }
        let total: f64 = row.normalized.iter().map(|r| r.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let dense_row = dense.0.row(i).to_vec();
        assert_eq!(qc.argmax_match(i), qgw::util::argmax_lowest(&dense_row));
    }
    assert!(rebuilt.iter().zip(dense.0.iter()).all(|(a, b)| (a - b).abs() <= 1e-12));
    assert!(dense.marginal_error(x.measure(), y.measure()) <= 1e-10);
}

#[test]
fn densified_loss_matches_brute() {
    for s in 0..10u64 {
        let x = cloud(10 + (s % 5) as usize, s);
        let y = cloud(14 - (s % 5) as usize, s + 50);
        let px = voronoi(&x, 3, s);
        let py = voronoi(&y, 4, s);
        let (qc, _) = match_qgw(&x, &px, &y, &py, &QgwConfig::default()).unwrap();
        let dense = qc.densify_small().unwrap();
        let (dx, dy) = (x.distance_matrix().unwrap(), y.distance_matrix().unwrap());
        let l = gw_loss(dx.view(), dy.view(), dense.view()).unwrap();
        let brute = gw_loss_brute(dx.view(), dy.view(), dense.view()).unwrap();
        assert!(l >= 0.0 && (l - brute).abs() <= 1e-10);
    }
}

#[test]
fn self_match_recovers_identity() {
    let x = cloud(150, 4);
    let px = voronoi(&x, 20, 9);
    let (qc, report) = match_qgw(&x, &px, &x, &px, &identity_config()).unwrap();
    assert_eq!(report.full_gw_loss, Some(0.0));
    assert_eq!(report.global.loss, 0.0);
    for i in 0..x.len() {
        let row = qc.expand_row(i);
        assert_eq!(row.normalized, vec![(i, 1.0)]);
        assert_eq!(qc.argmax_match(i), Some(i));
    }
    let dense = qc.densify_small().unwrap();
    let diag = qgw::ot::DiscreteCoupling::diagonal(x.measure());
    assert_eq!(dense.nnz(), x.len());
    assert!(dense.0.iter().zip(diag.0.iter()).all(|(a, b)| (a - b).abs() <= 1e-15));
}

#[test]
fn single_block_is_one_local_match() {
    let x = cloud(30, 6);
    let y = cloud(40, 7);
    let px = PointedPartition::single_block(&x, 3).unwrap();
    let py = PointedPartition::single_block(&y, 5).unwrap();
    let (qc, _) = match_qgw(&x, &px, &y, &py, &QgwConfig::default()).unwrap();
    assert_eq!(qc.global().triplets(), &[(0, 0, 1.0)]);
    let direct = local_linear_match(&radial_profile(&x, &px, 0).unwrap(), &radial_profile(&y, &py, 0).unwrap()).unwrap();
    assert_eq!(qc.locals()[0], direct);
    // singleton spaces
    let a = cloud(1, 1);
    let pa = PointedPartition::identity(&a).unwrap();
    let (qc, _) = match_qgw(&a, &pa, &a, &pa, &QgwConfig::default()).unwrap();
    assert_eq!(qc.expand_row(0).raw, vec![(0, 1.0)]);
}

#[test]
fn lemma1_projection_bound() {
    for s in 0..50u64 {
        let n = 5 + (derive_seed(s, &[1]) % 96) as usize;
        let x = cloud(n, s);
        let m = 1 + (derive_seed(s, &[2]) % n as u64) as usize;
        let p = voronoi(&x, m, s);
        let q = quantized_eccentricity(&x, &p).unwrap();
        let coupling = lemma1_projection_coupling(&x, &p).unwrap();
        assert_eq!(coupling.row_sums(), x.measure());
        let rep = quantized_representation(&x, &p).unwrap();
        let loss = gw_loss(x.distance_matrix().unwrap().view(), rep.rep_distances.view(), coupling.view()).unwrap();
        assert!(loss.sqrt() <= 2.0 * q + 1e-8, "seed {s}: {} > {}", loss.sqrt(), 2.0 * q);
        assert!((lemma1_loss(&x, &p).unwrap() - loss).abs() <= 1e-9 * (1.0 + loss));
    }
}

fn features(space: &MmSpace, seed: u64) -> Array2<f64> {
    let noise = uniform_cloud(space.len(), seed);
    let c = space.coordinates().unwrap();
    ndarray::concatenate![Axis(1), c.view(), noise.view()]
}

#[test]
fn fused_degeneracies() {
    let x = cloud(120, 12);
    let y = cloud(100, 13);
    let px = voronoi(&x, 15, 1);
    let py = voronoi(&y, 12, 2);
    let (fx, fy) = (features(&x, 3), features(&y, 4));
    let plain = match_qgw(&x, &px, &y, &py, &QgwConfig::default()).unwrap().0;
    let fused = match_qfgw(&x, &px, fx.view(), &y, &py, fy.view(), &QgwConfig::default()).unwrap().0;
    assert_eq!(plain, fused);

    let one = QgwConfig { alpha: 1.0, ..QgwConfig::default() };
    let (qc, report) = match_qfgw(&x, &px, fx.view(), &y, &py, fy.view(), &one).unwrap();
    let cost = qgw::qgw::feature_cost(fx.view(), px.representatives(), fy.view(), py.representatives());
    let (exact, _) = exact_ot_small(cost.view(), px.block_measure(), py.block_measure()).unwrap();
    let global = qc.global().to_dense(px.len(), py.len());
    assert!(global.iter().zip(exact.0.iter()).all(|(a, b)| (a - b).abs() <= 1e-10));
    assert_eq!(report.method, "qfgw");

    // beta = 0 keeps the metric locals for the same global coupling
    let half = QgwConfig { alpha: 0.5, ..QgwConfig::default() };
    let (a, _) = match_qfgw(&x, &px, fx.view(), &y, &py, fy.view(), &half).unwrap();
    for (&(p, q, _), local) in a.global().triplets().iter().zip(a.locals()) {
        let direct = local_linear_match(&radial_profile(&x, &px, p).unwrap(), &radial_profile(&y, &py, q).unwrap()).unwrap();
        assert_eq!(local, &direct);
    }
    let mixed = QgwConfig { alpha: 0.5, beta: 0.5, ..QgwConfig::default() };
    let (b, report) = match_qfgw(&x, &px, fx.view(), &y, &py, fy.view(), &mixed).unwrap();
    assert!(b.densify_small().unwrap().marginal_error(x.measure(), y.measure()) <= 1e-8);
    assert!(report.local.feature_matching.unwrap().exact_pairs > 0);
}

#[test]
fn beta_one_with_permuted_features_costs_nothing() {
    // Y is a permutation of X with identical features per partner
    let x = cloud(40, 20);
    let perm: Vec<usize> = (0..40).map(|i| (i * 17 + 3) % 40).collect();
    let cx = x.coordinates().unwrap();
    let mut cy = Array2::zeros((40, 2));
    for i in 0..40 {
        cy.row_mut(perm[i]).assign(&cx.row(i));
    }
    let y = MmSpace::from_points(cy, None).unwrap();
    let fx = cx.to_owned();
    let fy = y.coordinates().unwrap().to_owned();
    let px = PointedPartition::single_block(&x, 0).unwrap();
    let py = PointedPartition::single_block(&y, perm[0]).unwrap();
    let cfg = QgwConfig { beta: 1.0, ..QgwConfig::default() };
    let (qc, _) = match_qfgw(&x, &px, fx.view(), &y, &py, fy.view(), &cfg).unwrap();
    let cost = qc.locals()[0].cost_with(|i, j| {
        let d = &fx.row(px.block(0)[i]) - &fy.row(py.block(0)[j]);
        d.dot(&d)
    });
    assert!(cost.abs() < 1e-12);
}

#[test]
fn feature_dimension_mismatch() {
    let x = cloud(10, 1);
    let p = voronoi(&x, 2, 1);
    let f2 = Array2::<f64>::zeros((10, 2));
    let f3 = Array2::<f64>::zeros((10, 3));
    assert!(match_qfgw(&x, &p, f2.view(), &x, &p, f3.view(), &QgwConfig::default()).is_err());
    let cfg = QgwConfig { alpha: 0.5, ..QgwConfig::default() };
    assert!(match_qgw(&x, &p, &x, &p, &cfg).is_err());
}

#[test]
fn deterministic_across_thread_counts() {
    let x = cloud(400, 30);
    let y = cloud(350, 31);
    let px = voronoi(&x, 60, 1);
    let py = voronoi(&y, 50, 2);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| match_qgw(&x, &px, &y, &py, &QgwConfig::default()).unwrap())
    };
    let (a, ra) = run(1);
    let (b, rb) = run(1);
    let (c, rc) = run(4);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(ra.without_timings().unwrap(), rb.without_timings().unwrap());
    assert_eq!(ra.without_timings().unwrap(), rc.without_timings().unwrap());
}

#[test]
fn graph_spaces_end_to_end() {
    // 8 x 8 grid graph
    let side = 8;
    let mut edges = Vec::new();
    for r in 0..side {
        for c in 0..side {
            let v = r * side + c;
            if c + 1 < side {
                edges.push((v, v + 1, 1.0));
            }
            if r + 1 < side {
                edges.push((v, v + side, 1.0));
            }
        }
    }
    let g = MmSpace::from_graph(side * side, &edges, None).unwrap();
    let p = fluid_partition(&g, &PartitionConfig::fluid(BlockCount::Count(6), 3)).unwrap();
    let (qc, report) = match_qgw(&g, &p, &g, &p, &identity_config()).unwrap();
    assert_eq!(report.full_gw_loss, Some(0.0));
    assert!((0..g.len()).all(|i| qc.argmax_match(i) == Some(i)));
    let v = voronoi(&g, 5, 8);
    let (qc, _) = match_qgw(&g, &p, &g, &v, &QgwConfig::default()).unwrap();
    assert!(qc.densify_small().unwrap().marginal_error(g.measure(), g.measure()) <= 1e-8);
}

#[test]
fn entropic_inner_solver_pipeline() {
    let x = cloud(150, 40);
    let y = cloud(150, 41);
    let px = voronoi(&x, 25, 1);
    let py = voronoi(&y, 25, 2);
    let cfg = QgwConfig {
        gw: GwConfig { inner: InnerSolver::Entropic, epsilon: Some(0.05), ..GwConfig::default() },
        ..QgwConfig::default()
    };
    let (qc, report) = match_qgw(&x, &px, &y, &py, &cfg).unwrap();
    assert!(qc.densify_small().unwrap().marginal_error(x.measure(), y.measure()) <= 1e-8);
    assert!(report.global.loss.is_finite());
}

#[test]
fn zero_mass_points() {
    let coords = ndarray::array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0]];
    let opts = SpaceOptions { allow_zero_mass: true, ..SpaceOptions::default() };
    let x = MmSpace::from_points_with(coords, Some(&[1.0, 0.0, 1.0, 1.0, 1.0]), opts).unwrap();
    let p = voronoi(&x, 2, 5);
    assert!(p.representatives().iter().all(|&r| r != 1));
    let (qc, _) = match_qgw(&x, &p, &x, &p, &identity_config()).unwrap();
    assert!(qc.expand_row(1).raw.is_empty());
    assert_eq!(qc.argmax_match(1), None);
    let matches = qc.argmax_matches();
    assert_eq!(matches[1], matches[p.representative(p.block_of(1))]);
}

#[test]
fn color_transfer_examples() {
    let x = cloud(50, 2);
    let p = voronoi(&x, 8, 1);
    let (qc, _) = match_qgw(&x, &p, &x, &p, &identity_config()).unwrap();
    let colors = uniform_cloud(50, 9);
    let colors = ndarray::concatenate![Axis(1), colors.view(), colors.column(0).insert_axis(Axis(1))];
    let out = color_transfer(&qc, colors.view()).unwrap();
    assert!(out.iter().zip(colors.iter()).all(|(a, b)| (a - b).abs() < 1e-12));

    let single = PointedPartition::single_block(&x, 0).unwrap();
    let y = MmSpace::from_points(Array2::zeros((1, 2)), None).unwrap();
    let py = PointedPartition::identity(&y).unwrap();
    let (qc, _) = match_qgw(&x, &single, &y, &py, &QgwConfig::default()).unwrap();
    let out = color_transfer(&qc, colors.view()).unwrap();
    let mean = colors.mean_axis(Axis(0)).unwrap();
    assert!(out.row(0).iter().zip(mean.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn report_json_round_trip() {
    let x = cloud(60, 2);
    let p = voronoi(&x, 6, 1);
    let (_, report) = match_qgw(&x, &p, &x, &p, &QgwConfig::default()).unwrap();
    let text = report.to_json().unwrap();
    assert!(text.contains("\"schema_version\": 1"));
    assert_eq!(qgw::MatchReport::from_json(&text).unwrap(), report);
    let bounds = report.bounds.unwrap();
    assert!(bounds.thm3_bound >= 0.0 && bounds.thm3_bound.is_finite());
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary so it can install the counting allocator.

use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ndarray::Array2;
use qgw::alloc_probe::{self, CountingAlloc};
use qgw::diagnostics::{diameter, lemma1_loss, lemma1_projection_coupling, normalized_distortion_score, quantized_eccentricity};
use qgw::gw::{gw_loss, gw_loss_brute};
use qgw::harness::{blobs, relerr_suite, scaling_suite};
use qgw::io::{write_graph, write_points, PointsFile};
use qgw::ot::{exact_ot_small, solve_1d_ot, Atoms1D, DiscreteCoupling};
use qgw::partitioning::{voronoi_partition, BlockCount, PartitionConfig};
use qgw::qgw::{feature_cost, local_linear_cost, local_linear_match};
use qgw::report::MatchReport;
use qgw::space::radial_profile;
use qgw::{match_qfgw, match_qgw, MmSpace, PointedPartition, QgwConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn q<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn normalized(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn planar(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, 2), || rng.random_range(-1.0..1.0))
}

fn random_space(rng: &mut ChaCha8Rng, sizes: RangeInclusive<usize>) -> Result<MmSpace, String> {
    let n = rng.random_range(sizes);
    let coords = planar(rng, n);
    let w = normalized(rng, n);
    q(MmSpace::from_points(coords, Some(&w)))
}

fn random_voronoi(rng: &mut ChaCha8Rng, space: &MmSpace) -> Result<PointedPartition, String> {
    let m = rng.random_range(1..=space.len());
    q(voronoi_partition(space, &PartitionConfig::voronoi(BlockCount::Count(m), rng.random())))
}

fn dense(space: &MmSpace) -> Result<Array2<f64>, String> {
    q(space.distance_matrix())
}

fn one_d_ot() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (n, k) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let pa: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let pb: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let a = q(Atoms1D::new(pa.clone(), normalized(&mut rng, n)))?;
        let b = q(Atoms1D::new(pb.clone(), normalized(&mut rng, k)))?;
        let (_, cost) = q(solve_1d_ot(&a, &b))?;
        let c = Array2::from_shape_fn((n, k), |(i, j)| (pa[i] - pb[j]).powi(2));
        let (_, lp) = q(exact_ot_small(c.view(), &a.masses, &b.masses))?;
        worst = worst.max((cost - lp).abs());
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("200 instances, max |1D - LP| = {worst:.1e}"))
}

fn local_linear() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (n, k) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let x = random_space(&mut rng, n..=n)?;
        let y = random_space(&mut rng, k..=k)?;
        let px = q(PointedPartition::single_block(&x, rng.random_range(0..n)))?;
        let py = q(PointedPartition::single_block(&y, rng.random_range(0..k)))?;
        let (u, v) = (q(radial_profile(&x, &px, 0))?, q(radial_profile(&y, &py, 0))?);
        let plan = q(local_linear_match(&u, &v))?;
        let cost = local_linear_cost(&plan, &u, &v);
        let c = Array2::from_shape_fn((n, k), |(i, j)| (u.radii[i] - v.radii[j]).powi(2));
        let (_, lp) = q(exact_ot_small(c.view(), &u.masses, &v.masses))?;
        worst = worst.max((cost - lp).abs());
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("200 block pairs, max |local - LP| = {worst:.1e}"))
}

fn marginals() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0.0f64;
    let config = QgwConfig {
        diagnostics: false,
        ..QgwConfig::default()
    };
    for _ in 0..60 {
        let x = random_space(&mut rng, 2..=200)?;
        let y = random_space(&mut rng, 2..=200)?;
        let (px, py) = (random_voronoi(&mut rng, &x)?, random_voronoi(&mut rng, &y)?);
        let (qc, _) = q(match_qgw(&x, &px, &y, &py, &config))?;
        worst = worst.max(q(qc.densify_small())?.marginal_error(x.measure(), y.measure()));
    }
    ensure(worst <= 1e-8, || format!("marginal error {worst:e}"))?;
    Ok(format!("60 runs, max marginal error {worst:.1e}"))
}

fn gw_oracle() -> Outcome {
    let dx = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let dy = &dx * 2.0;
    let diag = DiscreteCoupling::diagonal(&[0.5, 0.5]);
    let prod = DiscreteCoupling::product(&[0.5, 0.5], &[0.5, 0.5]);
    for (mu, want) in [(&diag, 0.5), (&prod, 1.5)] {
        let fast = q(gw_loss(dx.view(), dy.view(), mu.view()))?;
        let slow = q(gw_loss_brute(dx.view(), dy.view(), mu.view()))?;
        ensure((fast - want).abs() <= 1e-10 && (slow - want).abs() <= 1e-10, || {
            format!("two-point example: {fast} / {slow}, expected {want}")
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < 150 {
        let (n, k) = (rng.random_range(1..=20), rng.random_range(1..=20));
        if n * k > 200 {
            continue;
        }
        count += 1;
        let x = random_space(&mut rng, n..=n)?;
        let y = random_space(&mut rng, k..=k)?;
        let (dx, dy) = (dense(&x)?, dense(&y)?);
        // a random feasible coupling: product mixed with an LP vertex
        let cost = Array2::from_shape_simple_fn((n, k), || rng.random::<f64>());
        let (vertex, _) = q(exact_ot_small(cost.view(), x.measure(), y.measure()))?;
        let t: f64 = rng.random();
        let mu = Array2::from_shape_fn((n, k), |(i, j)| {
            t * x.measure()[i] * y.measure()[j] + (1.0 - t) * vertex.0[[i, j]]
        });
        let fast = q(gw_loss(dx.view(), dy.view(), mu.view()))?;
        let slow = q(gw_loss_brute(dx.view(), dy.view(), mu.view()))?;
        worst = worst.max((fast - slow).abs());
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    Ok(format!("values 0.5 and 1.5 reproduced; 150 instances, max deviation {worst:.1e}"))
}

fn projection_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut slack = f64::INFINITY;
    for _ in 0..60 {
        let x = random_space(&mut rng, 1..=100)?;
        let px = random_voronoi(&mut rng, &x)?;
        let coupling = q(lemma1_projection_coupling(&x, &px))?;
        let qx = q(qgw::space::quantized_representation(&x, &px))?;
        let loss = q(gw_loss(dense(&x)?.view(), qx.rep_distances.view(), coupling.view()))?;
        let implicit = q(lemma1_loss(&x, &px))?;
        ensure((loss - implicit).abs() <= 1e-10 * (1.0 + loss), || {
            format!("explicit {loss} vs implicit {implicit}")
        })?;
        let bound = 2.0 * q(quantized_eccentricity(&x, &px))?;
        ensure(loss.sqrt() <= bound + 1e-8, || format!("{} > {bound}", loss.sqrt()))?;
        slack = slack.min(bound - loss.sqrt());
    }
    Ok(format!("60 spaces, min slack {slack:.3e}"))
}

fn chain_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut slack = f64::INFINITY;
    let config = QgwConfig::default();
    for _ in 0..60 {
        let x = random_space(&mut rng, 2..=200)?;
        let y = random_space(&mut rng, 2..=200)?;
        let (px, py) = (random_voronoi(&mut rng, &x)?, random_voronoi(&mut rng, &y)?);
        let (qc, report) = q(match_qgw(&x, &px, &y, &py, &config))?;
        let full = q(gw_loss(dense(&x)?.view(), dense(&y)?.view(), q(qc.densify_small())?.view()))?;
        let bounds = report.bounds.ok_or("missing bounds")?;
        let rhs = report.global.loss.sqrt() + 8.0 * bounds.eps_x.max(bounds.eps_y);
        ensure(full.sqrt() <= rhs + 1e-8, || format!("{} > {rhs}", full.sqrt()))?;
        slack = slack.min(rhs - full.sqrt());
    }
    Ok(format!("60 runs, min slack {slack:.3e}"))
}

fn self_recovery() -> Outcome {
    let n = 2000;
    let (coords, _) = blobs(n, 7);
    let x = q(MmSpace::from_points(coords.clone(), None))?;
    let diam = q(diameter(&x))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut moved = Array2::zeros((n, 2));
    for i in 0..n {
        let r = rng.random_range(0.0..0.01 * diam);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        moved[[perm[i], 0]] = coords[[i, 0]] + r * angle.cos();
        moved[[perm[i], 1]] = coords[[i, 1]] + r * angle.sin();
    }
    let y = q(MmSpace::from_points(moved, None))?;
    let frac = BlockCount::Fraction(0.5);
    let px = q(voronoi_partition(&x, &PartitionConfig::voronoi(frac, 11)))?;
    let py = q(voronoi_partition(&y, &PartitionConfig::voronoi(frac, 12)))?;
    let config = QgwConfig {
        diagnostics: false,
        ..QgwConfig::default()
    };
    let (qc, _) = q(match_qgw(&x, &px, &y, &py, &config))?;
    let matches = qc.argmax_matches();
    let target_diam = q(diameter(&y))?;
    let mut good = 0;
    for (i, &m) in matches.iter().enumerate() {
        if q(y.distance(perm[i], m))? <= 0.05 * target_diam {
            good += 1;
        }
    }
    let good = good as f64 / n as f64;
    let score = q(normalized_distortion_score(&y, &matches, &perm, target_diam))?;
    ensure(good >= 0.9 && score <= 0.01, || {
        format!("{:.2}% within 5% of diameter, normalized distortion {score:.3e}", 100.0 * good)
    })?;
    Ok(format!(
        "{:.2}% within 5% of diameter, normalized distortion {score:.3e}",
        100.0 * good
    ))
}

fn relative_error() -> Outcome {
    let rows = q(relerr_suite(&[200, 400, 800], &[0.5], 5, 42))?;
    let mut parts = Vec::new();
    for n in [200, 400, 800] {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n)
            .map(|r| r.relative_error.ok_or(format!("degenerate relative error at N = {n}")))
            .collect::<Result<_, _>>()?;
        ensure(vals.len() == 5, || format!("{} trials at N = {n}", vals.len()))?;
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        ensure(mean <= 1.05, || format!("mean relative error {mean} at N = {n}"))?;
        parts.push(format!("N={n}: {mean:.4}"));
    }
    Ok(format!("mean relative error {}", parts.join(", ")))
}

fn scaling() -> Outcome {
    ensure(alloc_probe::is_installed(), || "allocation hook not installed".into())?;
    let rows = q(scaling_suite(&[10_000, 20_000, 40_000], 15, 1))?;
    let t: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    let hits: usize = rows.iter().map(|r| r.nxn_allocations.unwrap_or(usize::MAX)).sum();
    let (r1, r2) = (t[1] / t[0], t[2] / t[1]);
    let msg = format!(
        "times {:.4}s {:.4}s {:.4}s, ratios {r1:.2} {r2:.2}, N x N allocations {hits}, largest allocation {} values",
        t[0],
        t[1],
        t[2],
        rows.iter().filter_map(|r| r.max_single_allocation_values).max().unwrap_or(0)
    );
    ensure(r1 <= 3.0 && r2 <= 3.0 && hits == 0, || msg.clone())?;
    Ok(msg)
}

fn fused() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let x = random_space(&mut rng, 20..=150)?;
        let y = random_space(&mut rng, 20..=150)?;
        let (px, py) = (random_voronoi(&mut rng, &x)?, random_voronoi(&mut rng, &y)?);
        let fx = planar(&mut rng, x.len());
        let fy = planar(&mut rng, y.len());
        let base = QgwConfig::default();
        let (plain, plain_report) = q(match_qgw(&x, &px, &y, &py, &base))?;
        let (fusedc, fused_report) = q(match_qfgw(&x, &px, fx.view(), &y, &py, fy.view(), &base))?;
        ensure(plain == fusedc, || "alpha = beta = 0 coupling differs from qGW".into())?;
        ensure(
            plain_report.global.loss.to_bits() == fused_report.global.loss.to_bits()
                && plain_report.full_gw_loss.map(f64::to_bits) == fused_report.full_gw_loss.map(f64::to_bits),
            || "alpha = beta = 0 losses differ from qGW".into(),
        )?;

        let one = QgwConfig {
            alpha: 1.0,
            ..QgwConfig::default()
        };
        let (qc, _) = q(match_qfgw(&x, &px, fx.view(), &y, &py, fy.view(), &one))?;
        let cost = feature_cost(fx.view(), px.representatives(), fy.view(), py.representatives());
        let (exact, _) = q(exact_ot_small(cost.view(), px.block_measure(), py.block_measure()))?;
        let global = qc.global().to_dense(px.len(), py.len());
        let dev = global
            .iter()
            .zip(exact.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(dev);
    }
    ensure(worst <= 1e-10, || format!("alpha = 1 global deviates by {worst:e}"))?;
    Ok(format!("10 instances bit-identical at alpha = beta = 0; alpha = 1 max deviation {worst:.1e}"))
}

fn run_match(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qgw"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let (cx, lx) = blobs(600, 3);
    let (cy, _) = blobs(550, 4);
    let labels = Some(lx.iter().map(|l| l.to_string()).collect::<Vec<_>>());
    let fx = Some(cx.mapv(f64::cos));
    let fy = Some(cy.mapv(f64::cos));
    q(write_points(&d.join("x.csv"), &PointsFile { coords: cx, features: fx, labels, weights: None }))?;
    q(write_points(&d.join("y.csv"), &PointsFile { coords: cy, features: fy, labels: None, weights: None }))?;
    // a 30 x 30 grid graph and a 28 x 32 one
    let grid = |w: usize, h: usize| -> Vec<(usize, usize, f64)> {
        let mut e = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let v = r * w + c;
                if c + 1 < w {
                    e.push((v, v + 1, 1.0));
                }
                if r + 1 < h {
                    e.push((v, v + w, 1.0 + ((v % 7) as f64) * 0.1));
                }
            }
        }
        e
    };
    q(write_graph(&d.join("gx.txt"), &grid(30, 30)))?;
    q(write_graph(&d.join("gy.txt"), &grid(28, 32)))?;

    let (x, y, gx, gy) = (s(&d.join("x.csv")), s(&d.join("y.csv")), s(&d.join("gx.txt")), s(&d.join("gy.txt")));
    let variants: Vec<Vec<String>> = vec![
        vec!["--source", &x, "--target", &y, "--sample-frac", "0.3"],
        vec![
            "--source", &x, "--target", &y, "--m", "40", "--features", "--alpha", "0.3", "--beta", "0.5", "--inner",
            "entropic",
        ],
        vec!["--source", &gx, "--target", &gy, "--kind", "graph", "--method", "fluid", "--m", "25"],
        vec!["--source", &gx, "--target", &gy, "--kind", "graph", "--sample-frac", "0.1"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(str::to_string).collect())
    .collect();

    for (k, variant) in variants.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let coupling = d.join(format!("c{k}_{rep}.txt"));
            let report = d.join(format!("r{k}_{rep}.json"));
            let mut args = vec!["match".to_string()];
            args.extend(variant.iter().cloned());
            args.extend(
                ["--seed", "17", "--threads", "1", "--out", &s(&coupling), "--report", &s(&report)]
                    .map(str::to_string),
            );
            run_match(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
            let bytes = fs::read(&coupling).map_err(|e| e.to_string())?;
            let json = q(MatchReport::from_json(&fs::read_to_string(&report).map_err(|e| e.to_string())?))?;
            outputs.push((bytes, q(json.without_timings())?));
        }
        ensure(outputs[0].0 == outputs[1].0, || format!("variant {k}: coupling files differ"))?;
        ensure(outputs[0].1 == outputs[1].1, || format!("variant {k}: reports differ"))?;
    }
    Ok(format!("{} match configurations reproduced byte for byte", variants.len()))
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "1D OT oracle equivalence", budget: Duration::from_secs(5), run: one_d_ot },
        Criterion { id: 2, name: "local linear oracle equivalence", budget: Duration::from_secs(5), run: local_linear },
        Criterion { id: 3, name: "quantization coupling marginals", budget: Duration::from_secs(30), run: marginals },
        Criterion { id: 4, name: "GW loss oracle", budget: Duration::from_secs(10), run: gw_oracle },
        Criterion { id: 5, name: "projection coupling bound", budget: Duration::from_secs(30), run: projection_bound },
        Criterion { id: 6, name: "quantized loss chain bound", budget: Duration::from_secs(60), run: chain_bound },
        Criterion { id: 7, name: "self-recovery of a perturbed copy", budget: Duration::from_secs(60), run: self_recovery },
        Criterion { id: 8, name: "relative error against full GW", budget: Duration::from_secs(600), run: relative_error },
        Criterion { id: 9, name: "scaling and memory", budget: Duration::from_secs(600), run: scaling },
        Criterion { id: 10, name: "fused degeneracies", budget: Duration::from_secs(10), run: fused },
        Criterion { id: 11, name: "single-thread determinism", budget: Duration::from_secs(600), run: determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; exceeded the {:?} budget", c.budget)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {:>2} {} ({:.2}s): {detail}", c.id, c.name, elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {} ({:.2}s): {detail}", c.id, c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

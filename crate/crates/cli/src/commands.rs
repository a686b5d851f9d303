use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use ndarray::Array2;
use qgw::diagnostics::{color_transfer, diameter, distortion_percentage, distortion_score, segment_transfer_score};
use qgw::harness::{relerr_suite, scaling_suite, write_relerr_csv, write_scaling_csv};
use qgw::io::{
    read_coupling, read_graph, read_index_list, read_labels, read_partition, read_points, read_table, write_coupling,
    write_dense_triplets, write_partition, write_table,
};
use qgw::partitioning::partition;
use qgw::{
    match_qfgw, match_qgw, BlockCount, GwConfig, GwInit, InnerSolver, MmSpace, PartitionConfig, PartitionMethod,
    PointedPartition, QgwConfig, SpaceOptions,
};
use serde_json::json;

use crate::args::{
    BenchArgs, BlockArgs, Cli, EvalArgs, Init, Inner, Kind, MatchArgs, Method, Metric, PartitionArgs, SpaceArgs, Suite,
};
use crate::failure::{AtPath, CliResult, Failure};

/// A space together with the optional columns of its file.
struct Loaded {
    space: MmSpace,
    features: Option<Array2<f64>>,
    labels: Option<Vec<String>>,
}

fn load_space(path: &Path, args: &SpaceArgs) -> CliResult<Loaded> {
    if let Some(c) = args.inf_replace {
        if args.kind != Kind::Graph {
            return Err(Failure::validation("--inf-replace applies to graph inputs only"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Failure::validation("--inf-replace must be a positive number"));
        }
    }
    let options = SpaceOptions {
        allow_zero_mass: args.allow_zero_mass,
        inf_replace: args.inf_replace,
        ..SpaceOptions::default()
    };
    let loaded = match args.kind {
        Kind::Points => {
            let file = read_points(path).at(path)?;
            let space = MmSpace::from_points_with(file.coords, file.weights.as_deref(), options)?;
            Loaded {
                space,
                features: file.features,
                labels: file.labels,
            }
        }
        Kind::Graph => {
            let (n, edges) = read_graph(path, args.nodes).at(path)?;
            Loaded {
                space: MmSpace::from_graph_with(n, &edges, None, options)?,
                features: None,
                labels: None,
            }
        }
        Kind::Dense => Loaded {
            space: MmSpace::from_distance_matrix_with(read_table(path).at(path)?, None, options)?,
            features: None,
            labels: None,
        },
    };
    info!("{}: {} points ({:?})", path.display(), loaded.space.len(), args.kind);
    Ok(loaded)
}

fn partition_config(blocks: &BlockArgs, seed: u64) -> CliResult<PartitionConfig> {
    let size = match (blocks.m, blocks.sample_frac) {
        (Some(m), None) => BlockCount::Count(m),
        (None, Some(p)) => BlockCount::Fraction(p),
        (None, None) => return Err(Failure::validation("one of --m or --sample-frac is required")),
        (Some(_), Some(_)) => return Err(Failure::validation("--m and --sample-frac are exclusive")),
    };
    let method = match blocks.method {
        Method::Voronoi => PartitionMethod::Voronoi,
        Method::Fluid => PartitionMethod::Fluid,
    };
    let config = PartitionConfig::new(method, size, seed);
    config.validate()?;
    Ok(config)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes JSON to `path`, or to stdout when no path is given.
fn emit_json(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p).at(p)?);
            writeln!(f, "{text}")?;
            f.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).at(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn partition_cmd(cli: &Cli, args: &PartitionArgs) -> CliResult {
    let config = partition_config(&args.blocks, cli.seed)?;
    let loaded = load_space(&args.input, &args.space)?;
    let part = partition(&loaded.space, &config)?;
    write_partition(&args.out, &part).at(&args.out)?;
    info!("wrote {} blocks to {}", part.len(), args.out.display());
    Ok(())
}

fn check_fraction(name: &str, v: f64) -> CliResult {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Failure::validation(format!("--{name} must be in [0, 1], got {v}")))
    }
}

fn feature_table(explicit: Option<&Path>, from_file: Option<Array2<f64>>, side: &str) -> CliResult<Array2<f64>> {
    match explicit {
        Some(p) => read_table(p).at(p),
        None => from_file.ok_or_else(|| {
            Failure::validation(format!("--features given but the {side} has no feature columns"))
        }),
    }
}

pub fn match_cmd(cli: &Cli, args: &MatchArgs) -> CliResult {
    check_fraction("alpha", args.alpha)?;
    check_fraction("beta", args.beta)?;
    if args.alpha != 0.0 && !args.features {
        return Err(Failure::validation("alpha requires features"));
    }
    if args.beta != 0.0 && !args.features {
        return Err(Failure::validation("beta requires features"));
    }
    if let Some(e) = args.epsilon {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Failure::validation("--epsilon must be positive"));
        }
        if args.inner != Inner::Entropic {
            return Err(Failure::validation("--epsilon requires --inner entropic"));
        }
    }
    let explicit = args.source_partition.is_some();
    let part_config = if explicit {
        None
    } else {
        Some(partition_config(&args.blocks, cli.seed)?)
    };
    let config = QgwConfig {
        gw: GwConfig {
            inner: match args.inner {
                Inner::Exact => InnerSolver::Exact,
                Inner::Entropic => InnerSolver::Entropic,
            },
            epsilon: args.epsilon,
            max_outer_iter: args.max_iter,
            conv_tol: args.conv_tol,
            init: match args.init {
                Init::Product => GwInit::Product,
                Init::Identity => GwInit::IdentityIfSquare,
            },
            ..GwConfig::default()
        },
        alpha: args.alpha,
        beta: args.beta,
        diagnostics: !args.no_diagnostics,
        ..QgwConfig::default()
    };
    config.validate()?;

    let src = load_space(&args.source, &args.space)?;
    let tgt = load_space(&args.target, &args.space)?;
    let features = if args.features {
        Some((
            feature_table(args.source_features.as_deref(), src.features, "source")?,
            feature_table(args.target_features.as_deref(), tgt.features, "target")?,
        ))
    } else {
        None
    };

    let part_start = Instant::now();
    let (px, py, partition_s) = match part_config {
        None => {
            let px = {
                let p = args.source_partition.as_deref().expect("checked");
                read_partition(p, src.space.measure()).at(p)?
            };
            let py = {
                let p = args.target_partition.as_deref().expect("checked");
                read_partition(p, tgt.space.measure()).at(p)?
            };
            (px, py, None)
        }
        Some(pc) => {
            // Both sides share one seed so that a space matched against
            // itself gets identical partitions.
            let px = partition(&src.space, &pc)?;
            let py = partition(&tgt.space, &pc)?;
            let elapsed = part_start.elapsed().as_secs_f64();
            for (suffix, part) in [(".source.part", &px), (".target.part", &py)] {
                let path = with_suffix(&args.out, suffix);
                write_partition(&path, part).at(&path)?;
            }
            (px, py, Some(elapsed))
        }
    };
    info!("partitions: {} source blocks, {} target blocks", px.len(), py.len());

    let (qc, mut report) = match &features {
        None => match_qgw(&src.space, &px, &tgt.space, &py, &config)?,
        Some((fx, fy)) => match_qfgw(&src.space, &px, fx.view(), &tgt.space, &py, fy.view(), &config)?,
    };
    if args.strict && !report.global.converged {
        return Err(Failure::Numerical(format!(
            "global solve did not converge in {} iterations",
            report.global.iterations
        )));
    }
    report.timings.partition_s = partition_s;
    report.timings.total_s += partition_s.unwrap_or(0.0);

    write_coupling(&args.out, &qc).at(&args.out)?;
    if let Some(path) = &args.dense_export {
        write_dense_triplets(path, &qc).at(path)?;
    }
    info!(
        "global loss {:.6e}, {} iterations, coupling nnz {}",
        report.global.loss,
        report.global.iterations,
        report.local.nnz
    );
    emit_json(cli.report.as_deref(), &report.to_json()?)
}

fn partitions_for_eval(args: &EvalArgs, x: &MmSpace, y: &MmSpace) -> CliResult<(PointedPartition, PointedPartition)> {
    let sp = args
        .source_partition
        .clone()
        .unwrap_or_else(|| with_suffix(&args.coupling, ".source.part"));
    let tp = args
        .target_partition
        .clone()
        .unwrap_or_else(|| with_suffix(&args.coupling, ".target.part"));
    Ok((read_partition(&sp, x.measure()).at(&sp)?, read_partition(&tp, y.measure()).at(&tp)?))
}

fn labels(explicit: Option<&Path>, from_file: Option<Vec<String>>, side: &str) -> CliResult<Vec<String>> {
    match explicit {
        Some(p) => read_labels(p).at(p),
        None => from_file.ok_or_else(|| Failure::validation(format!("no labels for the {side}"))),
    }
}

pub fn eval_cmd(cli: &Cli, args: &EvalArgs) -> CliResult {
    let src = load_space(&args.source, &args.space)?;
    let tgt = load_space(&args.target, &args.space)?;
    let (px, py) = partitions_for_eval(args, &src.space, &tgt.space)?;
    let qc = read_coupling(&args.coupling, px, py).at(&args.coupling)?;
    let matches = qc.argmax_matches();
    let ground_truth = || -> CliResult<Vec<usize>> {
        let path = args
            .ground_truth
            .as_deref()
            .ok_or_else(|| Failure::validation("this metric requires --ground-truth"))?;
        read_index_list(path).at(path)
    };
    let metrics = match args.metric {
        Metric::Distortion => {
            let gt = ground_truth()?;
            let score = distortion_score(&tgt.space, &matches, &gt)?;
            let diam = diameter(&tgt.space)?;
            let within = matches
                .iter()
                .zip(&gt)
                .map(|(&m, &g)| tgt.space.distance(g, m))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .filter(|&d| d <= 0.05 * diam)
                .count();
            json!({
                "metric": "distortion",
                "points": matches.len(),
                "score": score,
                "target_diameter": diam,
                "normalized_score": if diam > 0.0 { Some(score / (diam * diam)) } else { None },
                "fraction_within_5pct_diameter": within as f64 / matches.len() as f64,
            })
        }
        Metric::DistortionPct => {
            let gt = ground_truth()?;
            let pct = distortion_percentage(&tgt.space, &matches, &gt, args.n_random, cli.seed)?;
            json!({
                "metric": "distortion-pct",
                "points": matches.len(),
                "n_random": args.n_random,
                "percentage": pct,
            })
        }
        Metric::Segment => {
            let lx = labels(args.labels_source.as_deref(), src.labels, "source")?;
            let ly = labels(args.labels_target.as_deref(), tgt.labels, "target")?;
            let score = segment_transfer_score(&matches, &lx, &ly)?;
            json!({ "metric": "segment", "points": matches.len(), "score": score })
        }
        Metric::Colors => {
            let colors = match &args.colors {
                Some(p) => read_table(p).at(p)?,
                None => src
                    .features
                    .ok_or_else(|| Failure::validation("colors need --colors or source feature columns"))?,
            };
            let out = args
                .out
                .as_deref()
                .ok_or_else(|| Failure::validation("the colors metric requires --out"))?;
            let transferred = color_transfer(&qc, colors.view())?;
            write_table(out, transferred.view()).at(out)?;
            json!({ "metric": "colors", "rows": transferred.nrows(), "out": out.display().to_string() })
        }
    };
    let text = serde_json::to_string_pretty(&metrics).map_err(|e| Failure::Io(e.to_string()))?;
    emit_json(cli.report.as_deref(), &text)
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Failure::validation(format!("--{flag}: cannot parse {s:?}")))
        })
        .collect()
}

pub fn bench_cmd(cli: &Cli, args: &BenchArgs) -> CliResult {
    let sizes: Vec<usize> = parse_list("sizes", &args.sizes)?;
    if sizes.contains(&0) {
        return Err(Failure::validation("--sizes entries must be positive"));
    }
    if args.trials == 0 {
        return Err(Failure::validation("--trials must be positive"));
    }
    match args.suite {
        Suite::Relerr => {
            let fracs: Vec<f64> = parse_list("fracs", &args.fracs)?;
            if let Some(p) = fracs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
                return Err(Failure::validation(format!("--fracs entries must be in (0, 1], got {p}")));
            }
            let rows = relerr_suite(&sizes, &fracs, args.trials, cli.seed)?;
            write_relerr_csv(output(args.out.as_deref())?, &rows)?;
        }
        Suite::Scaling => {
            let rows = scaling_suite(&sizes, args.trials, cli.seed)?;
            write_scaling_csv(output(args.out.as_deref())?, &rows)?;
            if let Some(r) = rows.iter().find(|r| r.nxn_allocations.unwrap_or(0) > 0) {
                return Err(Failure::Numerical(format!("an N x N array was allocated at N = {}", r.n)));
            }
        }
    }
    Ok(())
}

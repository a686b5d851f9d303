//! `qgw` command-line tool.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.

mod args;
mod commands;
mod failure;

use std::process::ExitCode;

use clap::Parser;
use qgw::alloc_probe::CountingAlloc;

use crate::args::{Cli, Command};
use crate::failure::{CliResult, Failure};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

fn run(cli: &Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::validation("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::validation(e.to_string()))?;
    }
    match &cli.command {
        Command::Partition(a) => commands::partition_cmd(cli, a),
        Command::Match(a) => commands::match_cmd(cli, a),
        Command::Eval(a) => commands::eval_cmd(cli, a),
        Command::Bench(a) => commands::bench_cmd(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level.filter())
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qgw: {e}");
            e.exit_code()
        }
    }
}

//! `mhd converge|conserve|adapt|compare --config <file> [--out <dir>] [--threads N]`

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{Experiment, RunConfig};
use experiments::{Context, Failure};

#[derive(Parser, Debug)]
#[command(
    name = "mhd",
    version,
    about = "Incompressible MHD experiments in Elsasser variables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Errors and observed rates over refinement levels.
    Converge(Args),
    /// Constant-step run with invariant and energy diagnostics.
    Conserve(Args),
    /// Adaptive run plus a constant-step control run.
    Adapt(Args),
    /// The same problem driven through both schemes.
    Compare(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides the config).
    #[arg(long)]
    threads: Option<usize>,
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // Help and version requests.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), 2),
    };
    let (experiment, args) = match cli.command {
        Command::Converge(a) => (Experiment::Converge, a),
        Command::Conserve(a) => (Experiment::Conserve, a),
        Command::Adapt(a) => (Experiment::Adapt, a),
        Command::Compare(a) => (Experiment::Compare, a),
    };
    let cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(e.kind(), &e.to_string(), 1),
    };
    let threads = args.threads.or(cfg.threads).unwrap_or(1);
    if threads == 0 {
        return fail("invalid_argument", "thread count must be at least 1", 1);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
    {
        return fail("invalid_argument", &format!("thread pool: {e}"), 1);
    }
    let out = args
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = Context {
        cfg: &cfg,
        out: &out,
        parallel: threads > 1,
    };
    match experiments::run(experiment, &ctx) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f @ Failure::Check(_)) => fail(f.kind(), &f.message(), 3),
        Err(f) => fail(f.kind(), &f.message(), 1),
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emwalk::experiments::{run_experiment, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "emwalk", version, about = "Electromagnetic quantum-walk experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continuum-limit convergence table and log-log slopes.
    Convergence(RunArgs),
    /// p-mean time series in a uniform electric field.
    Bloch(RunArgs),
    /// Density snapshots and peak probabilities in crossed fields.
    DriftDensity(RunArgs),
    /// Front trajectories and fitted drift speeds in crossed fields.
    DriftSpeed(RunArgs),
    /// q-spread against the electric field at fixed times.
    #[command(name = "spread-vs-e")]
    SpreadVsE(RunArgs),
    /// q-spread time series in strong fields.
    Localization(RunArgs),
    /// Randomized exact-identity suites.
    Invariants(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config (partial documents are merged over the defaults).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's out_dir).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Dotted-path override, e.g. params.steps=300 (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

fn run(kind: ExperimentKind, args: RunArgs) -> emwalk::Result<()> {
    let doc = match &args.config {
        Some(p) => Some(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    let mut overrides = args.overrides;
    if let Some(dir) = &args.out_dir {
        overrides.push(format!("out_dir={}", serde_json::to_string(dir)?));
    }
    let cfg = ExperimentConfig::build(kind, doc.as_ref(), &overrides)?;
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool is configured once");
    }
    let art = run_experiment(&cfg)?;
    for p in &art.csv_paths {
        println!("wrote {}", p.display());
    }
    println!("wrote {}", cfg.out_dir.join("metadata.json").display());
    if let Some(summary) = art.metadata.get("summary") {
        for key in ["periods", "p_max", "speeds", "final_q_spread", "suites", "curves"] {
            if let Some(v) = summary.get(key) {
                println!("{key}: {v}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Convergence(a) => (ExperimentKind::Convergence, a),
        Command::Bloch(a) => (ExperimentKind::Bloch, a),
        Command::DriftDensity(a) => (ExperimentKind::DriftDensity, a),
        Command::DriftSpeed(a) => (ExperimentKind::DriftSpeed, a),
        Command::SpreadVsE(a) => (ExperimentKind::SpreadVsE, a),
        Command::Localization(a) => (ExperimentKind::Localization, a),
        Command::Invariants(a) => (ExperimentKind::Invariants, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

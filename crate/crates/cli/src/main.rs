use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sis_core::harness::{self, Outcome};
use sis_core::scenario::{parse_scenario, Pipeline, Scenario};

const SCHEMA_OR_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "sis",
    version,
    about = "Average sampling experiments on shift-invariant spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stability constants, Riesz bounds and the window trace.
    Bounds(RunArgs),
    /// Perturbation budgets at a single magnitude or a grid.
    Perturb(RunArgs),
    /// Frame-algorithm reconstruction and end-to-end error.
    Reconstruct(RunArgs),
    /// Decay fits and stability across p.
    Localize(RunArgs),
    /// Same as perturb, one record per grid point.
    Sweep(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of window doublings.
    #[arg(long)]
    window_doublings: Option<usize>,
}

impl Command {
    fn split(self) -> (Pipeline, RunArgs) {
        match self {
            Command::Bounds(a) => (Pipeline::Bounds, a),
            Command::Perturb(a) => (Pipeline::Perturb, a),
            Command::Reconstruct(a) => (Pipeline::Reconstruct, a),
            Command::Localize(a) => (Pipeline::Localize, a),
            Command::Sweep(a) => (Pipeline::Sweep, a),
        }
    }
}

fn load(pipeline: Pipeline, args: &RunArgs) -> sis_core::Result<Scenario> {
    let mut scenario = parse_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(n) = args.window_doublings {
        scenario.model.window.doublings = n;
    }
    scenario.pipeline = pipeline;
    scenario.validate()?;
    Ok(scenario)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SIS_LOG", "warn")).init();
    let (pipeline, args) = Cli::parse().command.split();
    let scenario = match load(pipeline, &args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", args.scenario.display());
            return ExitCode::from(SCHEMA_OR_IO);
        }
    };
    let records = harness::run(&scenario);
    if let Err(e) = harness::write_outputs(&args.out, &scenario, &records) {
        eprintln!("error: writing {}: {e}", args.out.display());
        return ExitCode::from(SCHEMA_OR_IO);
    }
    for r in &records {
        let outcome = r.outcome();
        println!(
            "{} {} {}: {}",
            r.scenario_id,
            r.pipeline.name(),
            r.label,
            outcome.name()
        );
        for v in r.verdicts.iter().filter(|v| v.outcome != Outcome::Pass) {
            println!(
                "  {} {} {:e} {} {:e}",
                v.outcome.name(),
                v.name,
                v.lhs,
                v.relation,
                v.rhs
            );
        }
        if let Some(e) = &r.error {
            println!("  error: {e}");
        }
    }
    ExitCode::from(harness::exit_code(&records) as u8)
}

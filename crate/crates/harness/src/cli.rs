use std::ffi::OsString;
use std::path::PathBuf;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Pipeline};
use crate::error::{HarnessError, Result};
use crate::experiments::run_experiment;
use crate::report::RunReport;
use crate::suites;

#[derive(Debug, Parser)]
#[command(name = "posmech", version, about = "Run positional-mechanics experiments and verification suites")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML config file, or the name of a canned config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts and `report.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn suite_names() -> Vec<&'static str> {
    let mut v = suites::names();
    v.push("all");
    v
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the wave equation and check the hydrodynamic residuals.
    Solve(RunArgs),
    /// Simulate a path ensemble (position or momentum pipeline).
    Simulate(RunArgs),
    /// Step the kinetic equation against its closed form.
    Kinetics(RunArgs),
    /// Relativistic boosts, cuts and current conservation.
    Relativity(RunArgs),
    /// Run verification suites; exits 1 if any fails.
    Verify {
        #[arg(long, default_value = "all", value_parser = PossibleValuesParser::new(suite_names()))]
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Render a JSON report, optionally writing its series as CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        emit_csv: bool,
        /// Directory for the CSV files; defaults to `<report stem>_csv` beside the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(args: &RunArgs, allowed: &[Pipeline], sub: &str) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(&args.config, args.seed)?;
    if !allowed.contains(&cfg.pipeline) {
        let names: Vec<&str> = allowed.iter().map(Pipeline::name).collect();
        return Err(HarnessError::Config(format!("pipeline: `{}` does not run under `{sub}` (expected {})", cfg.pipeline.name(), names.join(" or "))));
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    let report = run_experiment(&cfg)?;
    print!("{}", report.render());
    Ok(report.passed)
}

fn verify(suite: &str, seed: u64) -> Result<bool> {
    let picked: Vec<_> = if suite == "all" { suites::SUITES.iter().collect() } else { suites::find(suite).into_iter().collect() };
    let mut ok = true;
    for s in picked {
        let o = s.run(seed)?;
        println!("{}", o.line());
        if !o.within_budget() {
            println!("  over budget: {:.1} s > {} s", o.wall_clock_s, o.budget);
        }
        ok &= o.passed() && o.within_budget();
    }
    Ok(ok)
}

fn report(input: &PathBuf, emit_csv: bool, out: Option<PathBuf>) -> Result<bool> {
    let r = RunReport::load(input)?;
    print!("{}", r.render());
    if emit_csv {
        let dir = out.unwrap_or_else(|| {
            let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
            input.with_file_name(format!("{stem}_csv"))
        });
        for p in r.write_series_csv(&dir)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(true)
}

/// Parse `argv` and run; returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => run(a, &[Pipeline::Residuals], "solve"),
        Command::Simulate(a) => run(a, &[Pipeline::Position, Pipeline::Momentum], "simulate"),
        Command::Kinetics(a) => run(a, &[Pipeline::Kinetics], "kinetics"),
        Command::Relativity(a) => run(a, &[Pipeline::Relativity], "relativity"),
        Command::Verify { suite, seed } => verify(suite, *seed),
        Command::Report { input, emit_csv, out } => report(input, *emit_csv, out.clone()),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

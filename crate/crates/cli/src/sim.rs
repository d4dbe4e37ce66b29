use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use llsim_core::simkit::{emit_report, run, MetricsReport, ScenarioConfig};
use rayon::prelude::*;

use crate::{CliError, Format};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON files; repeat the flag or list several.
    #[arg(long = "scenario", value_name = "FILE", required = true, num_args = 1..)]
    pub scenarios: Vec<PathBuf>,
    /// Seed overriding the one in each scenario file.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory. With several scenarios each one gets a
    /// subdirectory named after its file stem.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Enable keyed PDCCH scrambling.
    #[arg(long)]
    pub mitigation: bool,
    /// Scenarios run concurrently (default: one per core).
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Report layout.
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A report.json written by `simulate`.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Report layout.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

fn out_dirs(args: &SimulateArgs) -> Result<Vec<PathBuf>, CliError> {
    if args.scenarios.len() == 1 {
        return Ok(vec![args.out.clone()]);
    }
    let mut seen = BTreeSet::new();
    args.scenarios
        .iter()
        .map(|p| {
            let stem = p.file_stem().ok_or_else(|| CliError::Config(format!("{}: no file name", p.display())))?;
            if !seen.insert(stem.to_owned()) {
                return Err(CliError::Config(format!("two scenarios named {}", stem.to_string_lossy())));
            }
            Ok(args.out.join(stem))
        })
        .collect()
}

fn run_one(path: &Path, dir: &Path, args: &SimulateArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.mitigation_enabled |= args.mitigation;
    let report = run(&cfg)?;
    Ok(emit_report(&report, args.format.into(), dir)?)
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let dirs = out_dirs(&args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let results: Vec<_> =
        pool.install(|| args.scenarios.par_iter().zip(&dirs).map(|(p, d)| run_one(p, d, &args)).collect());
    // Report in argument order; the first failure decides the exit code.
    let mut first_err = None;
    for (path, r) in args.scenarios.iter().zip(results) {
        match r {
            Ok(files) => files.iter().for_each(|f| println!("{}", f.display())),
            Err(e) if first_err.is_none() => first_err = Some(e.context(path)),
            Err(e) => eprintln!("llsim: {}: {e}", path.display()),
        }
    }
    first_err.map_or(Ok(()), Err)
}

pub fn report(args: ReportArgs) -> Result<(), CliError> {
    let text =
        std::fs::read_to_string(&args.input).map_err(|e| CliError::Io(format!("{}: {e}", args.input.display())))?;
    let m: MetricsReport =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.input.display())))?;
    for f in emit_report(&m, args.format.into(), &args.out)? {
        println!("{}", f.display());
    }
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use adalloc_bench::{
    load_scenario, run_bench, run_property_suite, BenchReport, PropertyReport, SuiteOptions,
};
use adalloc_cli::{
    compare_scaled_unscaled, generate_synthetic, load_instance, render_comparison,
    render_violations, run, validate, InputPaths, RunConfig,
};
use adalloc_core::formats::DEFAULT_MAX_ROW_ERRORS;
use adalloc_core::synth::SyntheticSpec;
use adalloc_core::FairnessConfig;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "adalloc",
    version,
    about = "Capped ad allocation over subscriber groups"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance and write allocations, ranked lists and metrics.
    Run(RunArgs),
    /// Write a synthetic instance.
    Gen(GenArgs),
    /// Size and solve the grouped and ungrouped programs side by side.
    Compare(InputArgs),
    /// Check input files and list every problem found.
    Validate(InputArgs),
    /// Run a benchmark scenario and/or the randomized invariant suite.
    Bench(BenchArgs),
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    subscribers: PathBuf,
    #[arg(long)]
    campaigns: PathBuf,
    /// Enable fairness floors.
    #[arg(long)]
    fairness: bool,
    /// Minimum fill fraction in [0, 1] used when fairness is on.
    #[arg(long, default_value = "0.5")]
    min_fill: String,
    /// Stop reading the subscriber file after this many bad rows.
    #[arg(long, default_value_t = DEFAULT_MAX_ROW_ERRORS)]
    max_row_errors: usize,
}

impl InputArgs {
    fn paths(&self) -> Result<InputPaths> {
        let fairness = if self.fairness {
            FairnessConfig::with_fraction(&self.min_fill)
                .with_context(|| format!("[load] invalid --min-fill {:?}", self.min_fill))?
        } else {
            FairnessConfig::disabled()
        };
        Ok(InputPaths {
            subscribers: self.subscribers.clone(),
            campaigns: self.campaigns.clone(),
            fairness,
            max_row_errors: self.max_row_errors,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write model.mps.
    #[arg(long)]
    export_mps: bool,
    /// Cross-check the objective by enumeration when the instance is small enough.
    #[arg(long)]
    oracle: bool,
    /// Store the solve wall time in metrics.json.
    #[arg(long)]
    record_timing: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Generator spec as JSON; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    subscribers: Option<usize>,
    #[arg(long)]
    campaigns: Option<usize>,
    /// Number of distinct predicates campaigns draw from.
    #[arg(long)]
    predicate_pool: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Built-in scenario name or path to a scenario JSON file.
    #[arg(long)]
    scenario: Option<String>,
    /// Random trials for the invariant suite.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Serialize)]
struct BenchOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    bench: Option<BenchReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    properties: Option<PropertyReport>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run(args) => {
            let config = RunConfig {
                input: args.input.paths()?,
                out: args.out,
                export_mps: args.export_mps,
                oracle: args.oracle,
                record_timing: args.record_timing,
            };
            let report = run(&config)?;
            if let Some(oracle) = report.oracle_objective {
                if oracle != report.objective {
                    bail!(
                        "[oracle] enumeration found {oracle}, solver found {}",
                        report.objective
                    );
                }
            }
            println!("objective {}", report.objective);
        }
        Command::Gen(args) => {
            let mut spec = match &args.spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| {
                        format!("[load] cannot read spec file {}", path.display())
                    })?;
                    serde_json::from_str::<SyntheticSpec>(&text)
                        .with_context(|| format!("[load] {}", path.display()))?
                }
                None => SyntheticSpec::default(),
            };
            if let Some(v) = args.seed {
                spec.seed = v;
            }
            if let Some(v) = args.subscribers {
                spec.subscribers = v;
            }
            if let Some(v) = args.campaigns {
                spec.campaigns = v;
            }
            if let Some(v) = args.predicate_pool {
                spec.predicate_pool = Some(v);
            }
            let (subs, camps) = generate_synthetic(&spec, &args.out)?;
            println!("{}\n{}", subs.display(), camps.display());
        }
        Command::Compare(args) => {
            let instance = load_instance(&args.paths()?)?;
            print!(
                "{}",
                render_comparison(&compare_scaled_unscaled(&instance)?)
            );
        }
        Command::Validate(args) => {
            let violations = validate(&args.paths()?)?;
            if !violations.is_empty() {
                eprintln!("{}", render_violations(&violations));
                bail!("[validate] {} problem(s) found", violations.len());
            }
            println!("ok");
        }
        Command::Bench(args) => {
            if args.scenario.is_none() && args.trials.is_none() {
                bail!("[bench] give --scenario, --trials or both");
            }
            let bench = match &args.scenario {
                Some(name) => Some(
                    load_scenario(name)
                        .and_then(|s| run_bench(&s))
                        .map_err(|e| anyhow::anyhow!("[bench] {e}"))?,
                ),
                None => None,
            };
            let properties = args
                .trials
                .map(|trials| run_property_suite(args.seed, trials, SuiteOptions::default()));
            let failed = properties.as_ref().is_some_and(|p| !p.passed());
            println!(
                "{}",
                serde_json::to_string_pretty(&BenchOutput { bench, properties })?
            );
            if failed {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

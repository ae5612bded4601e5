//! `nneq`: solve, sweep, and verify the four-stage net-neutrality pricing
//! game from the command line.
//!
//! Exit codes: 0 on success, 1 when verification finds a failing check,
//! 2 on usage or configuration errors.

mod config;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use nneq_core::{solve_spe, verify, GridSpec, VerifyConfig, VerifyStage};

use config::{Overrides, OutputFormat, ScenarioConfig, SweepParam};
use render::{
    emit, solve_to_csv, solve_to_json, solve_to_text, sweep_point, sweep_to_csv, sweep_to_json,
    verdicts_to_csv, verdicts_to_json, verdicts_to_text,
};

#[derive(Parser)]
#[command(
    name = "nneq",
    version,
    about = "Equilibrium solver for a two-ISP / content-provider pricing game on a hotelling line"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// User valuation for Internet access (default 3.5)
    #[arg(long)]
    v: Option<f64>,
    /// User valuation for the content subscription (default 2)
    #[arg(long = "v-star")]
    v_star: Option<f64>,
    /// Marginal transport cost along the line (default 1)
    #[arg(long)]
    t: Option<f64>,
    /// ISP per-connection cost (default 1)
    #[arg(long)]
    c: Option<f64>,
    /// Fix the transit fee at this value
    #[arg(long = "p-tilde", conflicts_with = "plateau_min")]
    p_tilde: Option<f64>,
    /// Pick the smallest payoff-maximizing transit fee, 5t/4 (the default policy)
    #[arg(long = "plateau-min")]
    plateau_min: bool,
    /// JSON config file; command-line flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output format: csv or json (solve defaults to a text report)
    #[arg(long)]
    format: Option<String>,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep one parameter: <name>:<lo>:<hi>:<steps>, e.g. p_tilde:-2:2:401
    #[arg(long)]
    sweep: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and print the equilibrium report
    Solve(ScenarioArgs),
    /// Solve along a parameter grid and emit one row per point
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Worker threads for the sweep rows (default: all cores)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the brute-force oracles against the closed forms
    Verify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Which stage to verify: stage1, stage2, stage3, stage4, or all
        #[arg(long, default_value = "all")]
        which: String,
        /// Route stage-1 and stage-3 checks through the brute-force lower stages
        #[arg(long)]
        deep: bool,
        /// Seed for the randomized probe draws
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Sweep { scenario, threads } => cmd_sweep(&scenario, threads),
        Command::Verify {
            scenario,
            which,
            deep,
            seed,
        } => cmd_verify(&scenario, &which, deep, seed),
    }
}

/// Loads the config file (if any) and lays the explicit flags over it.
fn build_config(args: &ScenarioArgs) -> Result<ScenarioConfig> {
    let base = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    let overrides = Overrides {
        v: args.v,
        v_star: args.v_star,
        t: args.t,
        c: args.c,
        p_tilde: args.p_tilde,
        plateau_min: args.plateau_min,
        sweep: args.sweep.as_deref().map(str::parse).transpose()?,
        format: args.format.as_deref().map(str::parse).transpose()?,
        out: args.out.clone(),
    };
    Ok(overrides.apply(base))
}

fn warn_on_coverage(coverage_sufficient: bool, coverage_isp: bool, coverage_cp: bool) {
    if !coverage_sufficient {
        eprintln!("warning: v < 2t + c, the sufficient condition for full market coverage fails");
    }
    if !coverage_isp {
        eprintln!("warning: some users are better off unconnected at these fees");
    }
    if !coverage_cp {
        eprintln!("warning: some connected users decline the subscription at these fees");
    }
}

fn cmd_solve(args: &ScenarioArgs) -> Result<u8> {
    let config = build_config(args)?;
    let params = config.market_params()?;
    let report = solve_spe(&params, config.p_tilde_policy);
    warn_on_coverage(report.coverage_sufficient, report.coverage_isp, report.coverage_cp);
    let (format, path) = match &config.output {
        Some(output) => (Some(output.format), output.path.clone()),
        None => (None, None),
    };
    let rendered = match format {
        None => solve_to_text(&report),
        Some(OutputFormat::Json) => solve_to_json(&report)?,
        Some(OutputFormat::Csv) => solve_to_csv(&report),
    };
    emit(path.as_deref(), &rendered)?;
    Ok(0)
}

fn cmd_sweep(args: &ScenarioArgs, threads: Option<usize>) -> Result<u8> {
    let config = build_config(args)?;
    let sweep = config
        .sweep
        .context("sweep requires --sweep <name>:<lo>:<hi>:<steps> or a config sweep entry")?;
    sweep.validate()?;
    config.market_params()?; // reject invalid base parameters up front

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .context("cannot build thread pool")?;
    // Rows are indexed by grid position, so the output order and content
    // never depend on the worker count.
    let rows = pool.install(|| {
        (0..sweep.steps)
            .into_par_iter()
            .map(|i| sweep_point(&config, &sweep, i))
            .collect::<Result<Vec<_>>>()
    })?;

    let shaky = rows.iter().filter(|r| !(r.coverage_isp && r.coverage_cp)).count();
    if shaky > 0 {
        eprintln!("warning: {shaky} of {} rows violate a full-coverage check", rows.len());
    }

    let (format, path) = match &config.output {
        Some(output) => (output.format, output.path.clone()),
        None => (OutputFormat::Csv, None),
    };
    let rendered = match format {
        OutputFormat::Csv => sweep_to_csv(&rows),
        OutputFormat::Json => sweep_to_json(&rows)?,
    };
    emit(path.as_deref(), &rendered)?;
    Ok(0)
}

fn parse_stage(which: &str) -> Result<VerifyStage> {
    match which {
        "stage1" => Ok(VerifyStage::Stage1),
        "stage2" => Ok(VerifyStage::Stage2),
        "stage3" => Ok(VerifyStage::Stage3),
        "stage4" => Ok(VerifyStage::Stage4),
        "all" => Ok(VerifyStage::All),
        other => bail!("unknown stage '{other}' (expected stage1..stage4 or all)"),
    }
}

fn cmd_verify(args: &ScenarioArgs, which: &str, deep: bool, seed: u64) -> Result<u8> {
    let config = build_config(args)?;
    let params = config.market_params()?;
    let stage = parse_stage(which)?;

    // A p_tilde sweep doubles as the transit-grid override, which is how a
    // deliberately narrowed grid can be fed to the stage-1 check.
    let transit_grid = match &config.sweep {
        Some(spec) if spec.param == SweepParam::PTilde => {
            Some(GridSpec::new(spec.lo, spec.hi, spec.steps).map_err(|e| anyhow::anyhow!("{e}"))?)
        }
        Some(spec) => bail!("verify only accepts a p_tilde sweep as grid override, got {}", spec.param),
        None => None,
    };

    let verify_config = VerifyConfig {
        seed,
        deep,
        transit_grid,
        ..VerifyConfig::default()
    };
    let verdicts = verify(&params, stage, &verify_config);

    let (format, path) = match &config.output {
        Some(output) => (Some(output.format), output.path.clone()),
        None => (None, None),
    };
    let rendered = match format {
        None => verdicts_to_text(&verdicts),
        Some(OutputFormat::Json) => verdicts_to_json(&verdicts)?,
        Some(OutputFormat::Csv) => verdicts_to_csv(&verdicts),
    };
    emit(path.as_deref(), &rendered)?;

    Ok(if verdicts.iter().all(|v| v.pass) { 0 } else { 1 })
}

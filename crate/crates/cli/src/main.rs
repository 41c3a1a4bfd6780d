mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use instrument_lab_core::bilateral::ThetaRule;
use instrument_lab_core::unilateral::{BetaRule, Case};
use instrument_lab_core::verify::Suite;
use instrument_lab_core::{ReductionMode, ScenarioKind, Strategy};

use crate::config::RunConfig;
use crate::table::Format;

/// Reproduction runner for sequential CHSH sharing with generalized qubit instruments.
///
/// Exit codes: 0 success, 1 a scientific check was not met, 2 usage or configuration error.
#[derive(Debug, Parser)]
#[command(name = "instrument-lab", version)]
struct Cli {
    /// Seed of the start generator.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of random optimizer starts.
    #[arg(long, global = true)]
    starts: Option<usize>,
    /// Output file, written atomically; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// JSON file with any of the flag values; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run optimizer starts on all cores (same best result as sequential).
    #[arg(long, global = true)]
    parallel: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the invariant suites.
    Verify(VerifyArgs),
    /// Max-min double violation for the weak/ppm × scenario × mode cells.
    Table1(Table1Args),
    /// Frontier of maximal S2 at fixed S1 in the bilateral scenario.
    Pareto(ParetoArgs),
    /// Build and check an unbounded-sharing witness chain.
    Theorem1(Theorem1Args),
    /// Double-violation sharpness windows of the bilateral ansatz.
    Windows(WindowsArgs),
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Restrict to these suites (repeatable).
    #[arg(long = "suite")]
    suites: Vec<Suite>,
    /// Replace every tolerance by this value.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct Table1Args {
    /// weak or ppm; all when absent.
    #[arg(long)]
    strategy: Option<Strategy>,
    /// uni or bi; all when absent.
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    /// elliptical or linear; all when absent.
    #[arg(long)]
    mode: Option<ReductionMode>,
}

#[derive(Debug, Args)]
struct ParetoArgs {
    #[arg(long)]
    mode: Option<ReductionMode>,
    /// Number of S1 targets.
    #[arg(long)]
    targets: Option<usize>,
    /// Target interval, inside [2, 2√2].
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    range: Option<Vec<f64>>,
    /// Skip seeding the sweep with the projective max-min optimum
    /// (found with at least 200 starts).
    #[arg(long)]
    no_anchor: bool,
}

#[derive(Debug, Args)]
struct Theorem1Args {
    /// Chain length N.
    #[arg(short = 'n', long = "n")]
    n: Option<usize>,
    /// I, II or III.
    #[arg(long)]
    case: Option<Case>,
    /// Angle divisor (case I).
    #[arg(long)]
    c: Option<f64>,
    /// Exponent e (case I; fixed by N in the other cases).
    #[arg(long)]
    e: Option<f64>,
    /// Relative margin of α_k over its lower bound for k ≥ 2.
    #[arg(long)]
    eps_rel: Option<f64>,
    /// Fixed absolute margin of α_1 over its bound.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_parser = parse_beta_rule)]
    beta_rule: Option<BetaRule>,
    /// First angle tried; halved until the chain builds.
    #[arg(long)]
    phi0: Option<f64>,
}

#[derive(Debug, Args)]
struct WindowsArgs {
    /// Both when absent.
    #[arg(long)]
    mode: Option<ReductionMode>,
    /// maximal or shifted; both when absent.
    #[arg(long)]
    rule: Option<ThetaRule>,
}

fn parse_beta_rule(s: &str) -> Result<BetaRule, String> {
    match s.to_ascii_lowercase().as_str() {
        "midpoint" => Ok(BetaRule::Midpoint),
        "ppm" => Ok(BetaRule::Ppm),
        other => Err(format!("unknown beta rule {other:?} (midpoint or ppm)")),
    }
}

impl Cli {
    fn flags(&self) -> RunConfig {
        let mut rc = RunConfig {
            seed: self.seed,
            starts: self.starts,
            out: self.out.clone(),
            format: self.format,
            parallel: self.parallel.then_some(true),
            ..RunConfig::default()
        };
        match &self.command {
            Command::Verify(a) => {
                rc.suites = (!a.suites.is_empty()).then(|| a.suites.clone());
                rc.tolerance = a.tol;
            }
            Command::Table1(a) => {
                rc.strategy = a.strategy;
                rc.scenario = a.scenario;
                rc.mode = a.mode;
            }
            Command::Pareto(a) => {
                rc.mode = a.mode;
                rc.targets = a.targets;
                rc.range = a.range.as_ref().map(|r| [r[0], r[1]]);
                rc.anchor = a.no_anchor.then_some(false);
            }
            Command::Theorem1(a) => {
                rc.n = a.n;
                rc.case = a.case;
                rc.c = a.c;
                rc.e = a.e;
                rc.eps_rel = a.eps_rel;
                rc.eps = a.eps;
                rc.beta_rule = a.beta_rule;
                rc.phi0 = a.phi0;
            }
            Command::Windows(a) => {
                rc.mode = a.mode;
                rc.rule = a.rule;
            }
        }
        rc
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(rc) => rc,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => RunConfig::default(),
    };
    let rc = file.overlay(cli.flags());
    let result = match cli.command {
        Command::Verify(_) => commands::verify(&rc),
        Command::Table1(_) => commands::table1(&rc),
        Command::Pareto(_) => commands::pareto(&rc),
        Command::Theorem1(_) => commands::theorem1(&rc),
        Command::Windows(_) => commands::windows(&rc),
    };
    match result.and_then(|outcome| commands::emit(&rc, outcome, started)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

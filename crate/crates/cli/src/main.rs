//! `renewal-coupling`: compute coupling-epoch bounds, simulate the coupled
//! pair, and compare the two.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input, 3 a dominance
//! verdict failed in `verify`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use renewal_coupling::bounds::BoundReport;
use renewal_coupling::sim::{
    empirical_tv_curve, resolve_simulation_inputs, run_experiment, run_simulation, SimError,
    TauFunctional,
};
use renewal_coupling::{Error, Law};

use config::RunConfig;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "RENEWAL_COUPLING_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "renewal-coupling",
    version,
    about = "Coupling bounds for the backward renewal time",
    args_conflicts_with_subcommands = true
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Re-read and validate an emitted report (bounds.json, sim.json,
    /// verdicts.json, tv_curve.csv or tau.csv).
    #[arg(long, value_name = "FILE")]
    check: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Run file (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `run.out_dir`, then $RENEWAL_COUPLING_OUT, then `.`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Certified bounds only (bounds.json).
    Bounds(RunArgs),
    /// Coupled-pair simulation only (sim.json).
    Simulate(RunArgs),
    /// Bounds, simulation and dominance verdicts.
    Verify(RunArgs),
    /// Analytic and empirical TV curves (tv_curve.csv).
    TvCurve(RunArgs),
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

fn config_field(field: &str) -> String {
    if field.contains('.') {
        field.to_string()
    } else {
        format!("run.{field}")
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match &e {
            Error::Validation { field, message } => {
                Failure::invalid(format!("invalid `{}`: {message}", config_field(field)))
            }
            Error::ThresholdTooSmall { .. } => Failure::invalid(format!("invalid `run.theta`: {e}")),
            Error::InvalidLaw(_) => Failure::invalid(format!("invalid `law`: {e}")),
            Error::Quadrature(_) | Error::SeriesMismatch { .. } => Failure::runtime(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e.core() {
            Some(core) => {
                let mut f = Failure::from(core.clone());
                if let SimError::Stage { stage, .. } = &e {
                    f.message = format!("{stage}: {}", f.message);
                }
                f
            }
            None => Failure::runtime(e.to_string()),
        }
    }
}

struct Prepared {
    config: RunConfig,
    out: PathBuf,
}

fn prepare(args: &RunArgs) -> Result<Prepared, Failure> {
    let mut config = RunConfig::load(&args.config).map_err(|e| Failure::invalid(e.to_string()))?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.run.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)
        .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", out.display())))?;
    Ok(Prepared { config, out })
}

fn print_resolved(report: &BoundReport) {
    let tag = |auto: bool| if auto { " (auto)" } else { "" };
    println!("theta = {}{}", report.theta, tag(report.theta_auto));
    let betas: Vec<f64> = report.exp.iter().map(|e| e.bound.beta).collect();
    println!("betas = {:?}{}", betas, tag(report.betas_auto));
    let p = &report.params;
    println!("R = {}  p0 = {}  kappa_Theta = {}  q = {}", p.r, p.p0, p.kappa_theta, p.q);
    for e in &report.poly {
        println!("poly(l = {}) = {}  S_l = {}", e.bound.ell, e.bound.value, e.bound.s_ell);
    }
    match (&report.beta_search, &report.beta_search_error) {
        (Some(s), _) => println!("beta0 = {}  margin = {}", s.beta0, s.margin),
        (None, Some(err)) => println!("beta0 unavailable: {err}"),
        (None, None) => {}
    }
    for e in &report.exp {
        println!("exp(beta = {}) = {}  M = {}", e.bound.beta, e.bound.value, e.bound.m.value);
    }
}

fn cmd_bounds(args: &RunArgs) -> Result<(), Failure> {
    let p = prepare(args)?;
    let report = BoundReport::compute(&p.config.request())?;
    print_resolved(&report);
    output::write_json(&p.out.join("bounds.json"), &report)?;
    Ok(())
}

fn cmd_simulate(args: &RunArgs) -> Result<(), Failure> {
    let p = prepare(args)?;
    let exp = p.config.experiment();
    exp.validate()?;
    let (theta, functionals) = resolve_simulation_inputs(&exp)?;
    println!("theta = {theta}{}", if exp.request.theta.is_none() { " (auto)" } else { "" });
    let betas: Vec<f64> = functionals
        .iter()
        .filter_map(|f| match f {
            TauFunctional::Exp { beta } => Some(*beta),
            TauFunctional::Moment { .. } => None,
        })
        .collect();
    println!("betas = {betas:?}{}", if exp.request.betas.is_none() { " (auto)" } else { "" });
    let sim = run_simulation(&exp, theta, &functionals)?;
    for m in &sim.moments {
        println!("{:?}: {} +- {}", m.functional, m.estimate, m.std_error);
    }
    output::write_json(&p.out.join("sim.json"), &sim)?;
    if p.config.run.write_tau_csv {
        output::write_tau_csv(&p.out.join("tau.csv"), &sim.tau_samples)?;
    }
    Ok(())
}

fn cmd_verify(args: &RunArgs) -> Result<(), Failure> {
    let p = prepare(args)?;
    let report = run_experiment(&p.config.experiment())?;
    print_resolved(&report.bounds);
    output::write_json(&p.out.join("bounds.json"), &report.bounds)?;
    output::write_json(&p.out.join("sim.json"), &report.sim)?;
    output::write_json(
        &p.out.join("verdicts.json"),
        &output::VerdictFile {
            pass: report.pass,
            verdicts: report.verdicts.clone(),
        },
    )?;
    if !report.bounds.tv_curves.is_empty() {
        let analytic = report.bounds.tightest_tv();
        output::write_tv_csv(&p.out.join("tv_curve.csv"), &analytic, &report.sim.empirical_tv)?;
    }
    if p.config.run.write_tau_csv {
        output::write_tau_csv(&p.out.join("tau.csv"), &report.sim.tau_samples)?;
    }
    for v in &report.verdicts {
        println!(
            "{} {}: {} {} {} (margin {})",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.estimate,
            v.relation,
            v.reference,
            v.margin
        );
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            message: "dominance verdict failed".into(),
        })
    }
}

fn cmd_tv_curve(args: &RunArgs) -> Result<(), Failure> {
    let p = prepare(args)?;
    let exp = p.config.experiment();
    exp.validate()?;
    if exp.request.t_grid.is_empty() {
        return Err(Failure::invalid("invalid `run.t_grid`: tv-curve needs at least one time"));
    }
    let report = BoundReport::compute(&exp.request)?;
    print_resolved(&report);
    let law = Law::from_spec(&exp.request.law)?;
    let empirical = empirical_tv_curve(
        &law,
        exp.request.b,
        &exp.request.t_grid,
        exp.tv_replicas,
        exp.bins,
        exp.seed,
    )?;
    output::write_tv_csv(&p.out.join("tv_curve.csv"), &report.tightest_tv(), &empirical)?;
    Ok(())
}

fn check(path: &Path) -> Result<(), Failure> {
    let kind = output::check_file(path)?;
    println!("ok: {} ({kind})", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match (&cli.command, &cli.check) {
        (_, Some(path)) => check(path),
        (Some(Command::Bounds(a)), None) => cmd_bounds(a),
        (Some(Command::Simulate(a)), None) => cmd_simulate(a),
        (Some(Command::Verify(a)), None) => cmd_verify(a),
        (Some(Command::TvCurve(a)), None) => cmd_tv_curve(a),
        (None, None) => Err(Failure::invalid("a subcommand or --check <FILE> is required")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drlm_core::audit::{self, Check};
use drlm_core::harness::{self, format_sci, Overrides};
use drlm_core::operators::ConvectionForm;
use drlm_core::stokes::StokesOperator;
use drlm_core::{run_simulation, MacGrid, Manufactured, StepDiagnostics};

const USAGE_ERROR: u8 = 2;
const RUN_FAILURE: u8 = 1;

#[derive(Parser)]
#[command(name = "drlm", version, about = "First-order DRLM Navier-Stokes solver and convergence harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep theta over a tau-halving ladder; writes a CSV and prints a table.
    Converge(StudyArgs),
    /// Single simulation; writes per-step diagnostics as CSV.
    Run(StudyArgs),
    /// Invariant audit on small grids; exits nonzero on any violation.
    Check(CheckArgs),
    /// Iterative against dense Stokes solutions on a small grid.
    Oracle(OracleArgs),
}

#[derive(Args, Clone, Default)]
struct StudyArgs {
    /// Regularization parameter; repeat for several values.
    #[arg(long, value_parser = number)]
    theta: Vec<f64>,
    /// Time step (coarsest rung for `converge`). Fractions such as 1/8 are accepted.
    #[arg(long, value_parser = number)]
    tau: Option<f64>,
    /// Mesh size; defaults to tau/2.
    #[arg(long, value_parser = number)]
    h: Option<f64>,
    /// Number of ladder rungs for `converge` [default: 5]
    #[arg(long)]
    rungs: Option<usize>,
    /// Viscosity [default: 0.1]
    #[arg(long, value_parser = number)]
    nu: Option<f64>,
    /// Final time [default: 1.0]
    #[arg(long = "T", value_parser = number)]
    t_final: Option<f64>,
    /// Stokes solver tolerance [default: 1e-10]
    #[arg(long, value_parser = number)]
    tol: Option<f64>,
    /// Stokes iteration cap [default: 500]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Convection stencil: advective or skew [default: advective]
    #[arg(long)]
    convection: Option<ConvectionForm>,
    /// Output CSV path (stdout for `run` when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// File of `key = value` lines; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Args)]
struct OracleArgs {
    /// Cells per direction (at most 16).
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 8.0, value_parser = number)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1, value_parser = number)]
    nu: f64,
    #[arg(long, default_value_t = 1e-10, value_parser = number)]
    tol: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn number(s: &str) -> Result<f64, String> {
    harness::parse_number(s)
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<drlm_core::Error> for Failure {
    fn from(e: drlm_core::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl StudyArgs {
    fn overrides(&self) -> Result<Overrides, Failure> {
        let file = match &self.config {
            Some(p) => harness::read_config(p).map_err(|e| Failure::Usage(e.to_string()))?,
            None => Overrides::default(),
        };
        let cli = Overrides {
            thetas: (!self.theta.is_empty()).then(|| self.theta.clone()),
            tau: self.tau,
            h: self.h,
            rungs: self.rungs,
            nu: self.nu,
            t_final: self.t_final,
            tol: self.tol,
            max_iter: self.max_iter,
            convection: self.convection,
            out: self.out.clone(),
        };
        Ok(file.merge(cli))
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Run(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Run(format!("stdout: {e}"))),
    }
}

fn converge(args: &StudyArgs) -> Result<(), Failure> {
    let o = args.overrides()?;
    let study = o.study();
    study.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let out = o.out.clone().unwrap_or_else(|| PathBuf::from("convergence.csv"));
    let records = harness::run_study(&study, |r| {
        eprintln!(
            "theta = {:<6} tau = {:<10} done{}",
            r.theta,
            r.tau,
            if r.failed() { " (failed)" } else { "" }
        );
    })?;
    harness::write_csv(&records, &out)?;
    print!("{}", harness::format_table(&records));
    println!("\nwrote {}", out.display());
    let failed = records.iter().filter(|r| r.failed()).count();
    if failed > 0 {
        return Err(Failure::Run(format!("{failed} of {} runs failed", records.len())));
    }
    Ok(())
}

const DIAGNOSTICS_HEADER: &str = "step,time,q,energy_residual,qdyn_residual,div_inf";

fn diagnostics_row(d: &StepDiagnostics) -> String {
    format!(
        "{},{},{},{},{},{}",
        d.step,
        format_sci(d.time),
        format_sci(d.q),
        format_sci(d.energy_relative()),
        format_sci(d.qdyn_relative()),
        format_sci(d.div_inf)
    )
}

fn run(args: &StudyArgs) -> Result<(), Failure> {
    let o = args.overrides()?;
    let theta = match o.thetas.as_deref() {
        None => 1.0,
        Some([t]) => *t,
        Some(_) => return Err(Failure::Usage("`run` takes a single --theta".into())),
    };
    let study = o.study();
    let (tau, h) = study.ladder[0];
    let cfg = study
        .run_config(theta, tau, h)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let mut csv = String::from(DIAGNOSTICS_HEADER);
    csv.push('\n');
    let result = run_simulation(&cfg, |_, d| {
        let _ = writeln!(csv, "{}", diagnostics_row(d));
    });
    write_output(o.out.as_deref(), &csv)?;
    match result {
        Ok(out) => {
            let e = Manufactured::new(cfg.nu).error_norms(&out.state, &cfg.grid);
            eprintln!(
                "theta = {theta}, tau = {tau}, h = {h}, {} steps: |e_u|_0 = {:.3e}, |e_u|_1 = {:.3e}, |e_p|_0 = {:.3e}, |e_q| = {:.3e}",
                out.diagnostics.len(),
                e.norms.l2_u,
                e.norms.h1_u,
                e.norms.l2_p,
                e.e_q.abs()
            );
            Ok(())
        }
        Err(f) => Err(Failure::Run(format!(
            "{} (after {} completed steps)",
            f.error,
            f.partial.diagnostics.len()
        ))),
    }
}

fn report(checks: &[Check]) -> Result<(), Failure> {
    for c in checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Run(format!("{failed} check(s) failed")));
    }
    Ok(())
}

fn check(args: &CheckArgs) -> Result<(), Failure> {
    report(&audit::full_audit(args.seed)?)
}

fn oracle(args: &OracleArgs) -> Result<(), Failure> {
    let grid = MacGrid::square(args.n).map_err(|e| Failure::Usage(e.to_string()))?;
    let op = StokesOperator::new(&grid, args.alpha, args.nu, args.tol, 500)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let trials = audit::oracle_trials(&op, args.seed, args.trials)?;
    println!("trial  iterations  max|iterative - dense|");
    for (k, t) in trials.iter().enumerate() {
        println!("{k:>5}  {:>10}  {:.3e}", t.iterations, t.gap);
    }
    let worst = trials.iter().map(|t| t.gap).fold(0.0, f64::max);
    report(&[Check::at_most(
        format!("iterative vs dense Stokes ({0}x{0})", args.n),
        worst,
        audit::ORACLE_LIMIT,
        args.trials,
    )])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Converge(a) => converge(a),
        Command::Run(a) => run(a),
        Command::Check(a) => check(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(USAGE_ERROR)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(RUN_FAILURE)
        }
    }
}

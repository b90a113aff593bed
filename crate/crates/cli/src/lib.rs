//! Command-line driver: reads a problem file, runs one mode, prints a report.

// dense tables read most clearly with explicit indices
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod modes;
pub mod problem;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use error::CliError;
use modes::{Context, Registry};
use problem::{Parameters, Problem, SCHEMA};
use report::{Check, Report, Status};

#[derive(Debug, Parser)]
#[command(name = "cot-lab", version, about = "Constrained and martingale optimal transport on finite grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Problem file (JSON).
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Also write the mode's table as CSV.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,

    /// Tolerance of residual checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tolerance: f64,

    /// Seed for sampled scans.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Suppress warnings and messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve an ot, cot or mot problem, primal and dual.
    Solve,
    /// Decide whether mu precedes nu in convex order.
    CheckOrder,
    /// Convex envelope of a function on the X points.
    Envelope,
    /// Find cells that no admissible coupling charges.
    PolarScan,
    /// Shortfall of bounded hedges on shifted-diagonal couplings.
    GapDemo {
        #[arg(long)]
        n: Option<usize>,
        /// Comma-separated shifts.
        #[arg(long, value_delimiter = ',')]
        shifts: Option<Vec<usize>>,
        /// Bounds on b, c and gamma, comma-separated.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        hedge_norms: Option<Vec<f64>>,
    },
    /// Rewrite a dual decomposition with bounded parts.
    NormalizeDual,
    /// Distance from a payoff to the centered static hedges.
    QuotientDist,
    /// Re-check a report against its problem without solving.
    Verify {
        #[arg(long)]
        report: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::CheckOrder => "check-order",
            Command::Envelope => "envelope",
            Command::PolarScan => "polar-scan",
            Command::GapDemo { .. } => "gap-demo",
            Command::NormalizeDual => "normalize-dual",
            Command::QuotientDist => "quotient-dist",
            Command::Verify { .. } => "verify",
        }
    }

    /// Problem modes this command accepts.
    fn modes(&self) -> &'static [&'static str] {
        match self {
            Command::Solve => &["ot", "cot", "mot"],
            Command::CheckOrder => &["order"],
            Command::Envelope => &["envelope"],
            Command::PolarScan => &["polar"],
            Command::GapDemo { .. } => &["gap"],
            Command::NormalizeDual => &["normalize"],
            Command::QuotientDist => &["quotient"],
            Command::Verify { .. } => &[],
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes through a sibling temporary file so readers never see a partial file.
/// Symlinks, devices and pipes are written in place.
fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    if fs::symlink_metadata(path).is_ok_and(|m| !m.is_file()) {
        return fs::write(path, text).map_err(io);
    }
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Io(format!("{}: not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, text).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

fn emit(cli: &Cli, report: &Report) -> Result<(), CliError> {
    let text = report.to_json();
    match &cli.output {
        Some(path) => write_atomic(path, &text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

fn load_problem(cli: &Cli) -> Result<Problem, CliError> {
    let path = cli
        .input
        .as_ref()
        .ok_or_else(|| CliError::Parse(format!("{} needs --input", cli.command.name())))?;
    Problem::parse(&read(path)?)
}

fn gap_problem(cli: &Cli, n: Option<usize>, shifts: &Option<Vec<usize>>, norms: &Option<Vec<f64>>) -> Result<Problem, CliError> {
    let mut problem = match &cli.input {
        Some(_) => load_problem(cli)?,
        None => Problem {
            schema: SCHEMA,
            mode: "gap".into(),
            grid: None,
            mu: None,
            nu: None,
            payoff: None,
            constraints: Vec::new(),
            function: None,
            parameters: Parameters::default(),
        },
    };
    let p = &mut problem.parameters;
    if n.is_some() {
        p.n = n;
    }
    if shifts.is_some() {
        p.shifts = shifts.clone();
    }
    if let Some(v) = norms {
        let v: [f64; 3] = v
            .as_slice()
            .try_into()
            .map_err(|_| CliError::Parse("--hedge-norms takes three values b,c,gamma".into()))?;
        p.hedge_norms = Some(v);
    }
    Ok(problem)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("COT_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Parse(format!("COT_LAB_THREADS must be a thread count, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Parse(e.to_string()))
}

/// Runs the command; the report carries the mode that ran or was attempted.
fn execute(cli: &Cli, registry: &Registry, ctx: &Context, mode: &mut String) -> Result<Report, CliError> {
    configure_threads()?;
    if let Command::Verify { report } = &cli.command {
        *mode = "verify".into();
        return verify(cli, registry, ctx, report);
    }
    let problem = match &cli.command {
        Command::GapDemo { n, shifts, hedge_norms } => gap_problem(cli, *n, shifts, hedge_norms)?,
        _ => load_problem(cli)?,
    };
    *mode = problem.mode.clone();
    let allowed = cli.command.modes();
    if !allowed.contains(&problem.mode.as_str()) {
        return Err(CliError::Parse(format!(
            "{} expects mode {}, the problem has `{}`",
            cli.command.name(),
            allowed.join(" or "),
            problem.mode
        )));
    }
    let m = registry.get(&problem.mode)?;
    let report = m.run(&problem, ctx)?;
    if let Some(path) = &cli.csv {
        write_atomic(path, &m.csv(&report)?.render()?)?;
    }
    Ok(report)
}

fn verify(cli: &Cli, registry: &Registry, ctx: &Context, path: &Path) -> Result<Report, CliError> {
    let problem = load_problem(cli)?;
    let target = Report::parse(&read(path)?)?;
    if target.mode != problem.mode {
        return Err(CliError::Parse(format!(
            "report is for mode `{}`, the problem for `{}`",
            target.mode, problem.mode
        )));
    }
    let checks: Vec<Check> = match (target.status, &target.error) {
        (Status::Ok, _) => registry.get(&problem.mode)?.verify(&problem, &target, ctx)?,
        (Status::Error, Some(info)) if info.kind == "not_convex_order" => {
            modes::verify_not_ordered(&problem, info, ctx)?
        }
        (Status::Error, _) => Vec::new(),
    };
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let diagnostics = json!({ "target_mode": target.mode, "checks": checks });
    if failed.is_empty() {
        Ok(Report::ok("verify", diagnostics))
    } else {
        let err = CliError::Verification(failed.join(", "));
        let report = Report::failure("verify", &err, diagnostics);
        emit(cli, &report)?;
        Err(err)
    }
}

/// Parses the process arguments, runs the command and returns its exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or_default();
            let err = CliError::Parse(first.trim_start_matches("error: ").to_string());
            print!("{}", Report::failure("cli", &err, serde_json::Value::Null).to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let ctx = Context {
        tolerance: cli.tolerance,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let registry = Registry::default();
    let mut mode = cli.command.name().to_string();
    match execute(&cli, &registry, &ctx, &mut mode) {
        Ok(report) => match emit(&cli, &report) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Err(err) => {
            if !cli.quiet {
                eprintln!("error: {err}");
            }
            // verification failures have already emitted their report
            if !matches!(err, CliError::Verification(_)) {
                if let Err(e) = emit(&cli, &Report::failure(&mode, &err, serde_json::Value::Null)) {
                    eprintln!("error: {e}");
                }
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure on the output, 2 unreadable or
//! invalid input, 3 solver failure (a partial trace is still written),
//! 4 certificate check failure.

use crate::driver::{solve_file, verify_trace, VerifyError};
use crate::problem_file::{parse_problem, parse_reference, ProblemFile};
use crate::trace::{read_records, StopReason, Trace};
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "bilevel-prox", version, about = "Inexact proximal penalization for simple bilevel programs and MPECs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem file and write the trace as CSV.
    Run {
        problem: PathBuf,
        output: PathBuf,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Enable the ε₀ stopping test.
        #[arg(long)]
        eps0: Option<f64>,
        /// JSON array of reference points for the distance column.
        #[arg(long)]
        ref_file: Option<PathBuf>,
        /// Accepted for scripting symmetry; the solvers are deterministic.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Re-check every step certificate of a trace against its problem.
    Verify { trace: PathBuf, problem: PathBuf },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Output(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{0}")]
    Certificate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Output(_) => 1,
            CliError::Input(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Certificate(_) => 4,
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_problem(path: &Path) -> Result<ProblemFile, CliError> {
    parse_problem(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_trace(trace: &Trace, path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    trace
        .write_csv(BufWriter::new(file))
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"))
}

fn run(
    problem: &Path,
    output: &Path,
    max_iter: Option<usize>,
    eps0: Option<f64>,
    ref_file: Option<&Path>,
    quiet: bool,
) -> Result<(), CliError> {
    let mut pf = load_problem(problem)?;
    if let Some(m) = max_iter {
        pf.max_iter = m;
    }
    if let Some(e) = eps0 {
        if !(e.is_finite() && e > 0.0) {
            return Err(CliError::Input("--eps0 must be positive".into()));
        }
        pf.stop_eps0 = Some(e);
    }
    if let Some(path) = ref_file {
        let pts = parse_reference(&read_text(path)?, pf.problem.dim())
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if let crate::problem_file::Problem::Penalty { options, .. } = &mut pf.problem {
            options.reference = Some(pts.clone());
        }
        pf.reference = Some(pts);
    }
    let trace = solve_file(&pf).map_err(|e| CliError::Solver(e.to_string()))?;
    write_trace(&trace, output)?;
    if !quiet {
        let last = trace.last();
        println!(
            "kind={} iterations={} stop={} f={:.6e} g_or_gap={} dist_to_ref={}",
            pf.problem.kind(),
            trace.iterations(),
            trace.stop,
            last.f,
            fmt_opt(last.g_or_gap),
            fmt_opt(last.dist_to_ref),
        );
    }
    match trace.stop {
        StopReason::Failure(e) => Err(CliError::Solver(e.to_string())),
        _ => Ok(()),
    }
}

fn verify(trace: &Path, problem: &Path) -> Result<(), CliError> {
    let pf = load_problem(problem)?;
    let file = File::open(trace).map_err(|e| CliError::Input(format!("{}: {e}", trace.display())))?;
    let records = read_records(file).map_err(|e| CliError::Input(format!("{}: {e}", trace.display())))?;
    match verify_trace(&pf, &records) {
        Ok(()) => {
            println!("verified {} rows", records.len());
            Ok(())
        }
        Err(e @ VerifyError::Mismatch(_)) => Err(CliError::Input(e.to_string())),
        Err(e @ VerifyError::Failed { .. }) => Err(CliError::Certificate(e.to_string())),
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { problem, output, max_iter, eps0, ref_file, seed: _, quiet } => {
            run(&problem, &output, max_iter, eps0, ref_file.as_deref(), quiet)
        }
        Command::Verify { trace, problem } => verify(&trace, &problem),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

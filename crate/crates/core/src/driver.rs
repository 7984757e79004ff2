//! Solving a loaded problem file and re-checking a written trace.

use crate::convex::MEMBERSHIP_TOLERANCE;
use crate::error::Result;
use crate::gap::penalty_solve;
use crate::inner::verify_certificate;
use crate::problem_file::{Problem, ProblemFile};
use crate::run::RunOptions;
use crate::sbp::sbp_run;
use crate::smpec::{smpec_run, verify_smpec_certificate};
use crate::trace::{Trace, TraceRecord};

/// Runs the solver selected by the file's `kind`. Failures inside the loop
/// end up in `Trace::stop`; `Err` means the run could not start.
pub fn solve_file(pf: &ProblemFile) -> Result<Trace> {
    let opts = RunOptions {
        max_iter: pf.max_iter,
        reference: pf.reference.clone(),
        stop_eps0: pf.stop_eps0,
        ..RunOptions::default()
    };
    match &pf.problem {
        Problem::Sbp(p) => sbp_run(p, &pf.schedule, &opts),
        Problem::Smpec(p) => smpec_run(p, &pf.schedule, &opts),
        Problem::Penalty { problem, mu, inner_tol, options } => {
            Ok(penalty_solve(problem, mu, *inner_tol, options)?.trace)
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    /// The trace does not belong to the problem (shape, dimension, indexing).
    #[error("trace does not match the problem: {0}")]
    Mismatch(String),
    #[error("certificate check failed at row {row}: {reason}")]
    Failed { row: usize, reason: String },
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Re-checks every step of `records` against `pf` without re-solving.
///
/// SBP and SMPEC rows must carry the schedule values of the problem file
/// and a certificate that passes the pure check for the step to the next
/// row. Every iterate must lie in `C`.
pub fn verify_trace(pf: &ProblemFile, records: &[TraceRecord]) -> std::result::Result<(), VerifyError> {
    let n = pf.problem.dim();
    if records.is_empty() {
        return Err(VerifyError::Mismatch("trace has no rows".into()));
    }
    for (i, r) in records.iter().enumerate() {
        if r.k != i {
            return Err(VerifyError::Mismatch(format!("row {i} has k = {}", r.k)));
        }
        if r.x.len() != n {
            return Err(VerifyError::Mismatch(format!(
                "row {i} has an iterate of dimension {}, expected {n}",
                r.x.len()
            )));
        }
    }
    let set = pf.problem.set();
    let fail = |row: usize, reason: &str| VerifyError::Failed { row, reason: reason.to_string() };
    for (i, r) in records.iter().enumerate() {
        if !set.contains(&r.x, MEMBERSHIP_TOLERANCE) {
            return Err(fail(i, "iterate is not in the feasible set"));
        }
        if matches!(pf.problem, Problem::Penalty { .. }) {
            continue;
        }
        let s = &pf.schedule;
        if !(close(r.eps_k, s.eps(i)) && close(r.lambda_k, s.lambda(i)) && close(r.eta_k, s.eta(i))) {
            return Err(fail(i, "schedule values differ from the problem file"));
        }
        let Some(step) = &r.step else {
            if i + 1 < records.len() {
                return Err(fail(i, "step columns are empty before the last row"));
            }
            continue;
        };
        let Some(next) = records.get(i + 1) else {
            return Err(fail(i, "last row records a step"));
        };
        let Some(cert) = &step.certificate else {
            return Err(fail(i, "step has no certificate"));
        };
        if !close(step.step_norm, (&next.x - &r.x).norm()) {
            return Err(fail(i, "step_norm differs from the distance to the next iterate"));
        }
        let ok = match &pf.problem {
            Problem::Sbp(p) => match p.penalized(s.eps(i)) {
                Ok(psi) => verify_certificate(&psi, set, &r.x, s.lambda(i), &next.x, cert, s.eta(i)),
                Err(_) => false,
            },
            Problem::Smpec(p) => verify_smpec_certificate(
                p.operator(),
                p.f(),
                s.eps(i),
                set,
                &r.x,
                s.lambda(i),
                &next.x,
                cert,
                s.eta(i),
            ),
            Problem::Penalty { .. } => unreachable!(),
        };
        if !ok {
            return Err(fail(i, "certificate does not verify"));
        }
    }
    Ok(())
}

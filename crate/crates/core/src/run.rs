//! Outer-loop plumbing shared by the SBP and SMPEC drivers.

use crate::convex::Vector;
use crate::error::{check_dim, Result};
use crate::gap::step_stop_check;
use crate::inner::StepCertificate;
use crate::schedule::Schedule;
use crate::trace::{StepRecord, StopReason, Trace, TraceRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub max_iter: usize,
    /// Finite reference set (typically `S₁`) for the `dist_to_ref` column.
    pub reference: Option<Vec<Vector>>,
    /// `ε₀` of the stopping test; `None` leaves every stop flag at 0.
    pub stop_eps0: Option<f64>,
    /// Halt at the first step whose stop flag fires.
    pub halt_on_stop: bool,
    /// Cap on inner iterations per step.
    pub inner_cap: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_iter: 5000,
            reference: None,
            stop_eps0: None,
            halt_on_stop: true,
            inner_cap: crate::inner::DEFAULT_INNER_CAP,
        }
    }
}

pub(crate) fn dist_to_points(x: &Vector, points: &[Vector]) -> Option<f64> {
    points
        .iter()
        .map(|p| (x - p).norm())
        .min_by(|a, b| a.total_cmp(b))
}

pub(crate) fn check_reference(opts: &RunOptions, n: usize) -> Result<()> {
    for p in opts.reference.iter().flatten() {
        check_dim(n, p.len())?;
    }
    Ok(())
}

/// Runs `step` from `x0` until `max_iter`, the stop test, or a failure.
/// `row` yields `(f(x_k), g_or_gap(x_k))`.
pub(crate) fn run_loop(
    x0: &Vector,
    s: &Schedule,
    opts: &RunOptions,
    mut step: impl FnMut(&Vector, usize) -> Result<(Vector, StepCertificate)>,
    row: impl Fn(&Vector) -> Result<(f64, Option<f64>)>,
) -> Result<Trace> {
    let record = |k: usize, x: Vector| -> Result<TraceRecord> {
        let (f, g_or_gap) = row(&x)?;
        Ok(TraceRecord {
            k,
            eps_k: s.eps(k),
            lambda_k: s.lambda(k),
            eta_k: s.eta(k),
            f,
            g_or_gap,
            dist_to_ref: opts.reference.as_deref().and_then(|r| dist_to_points(&x, r)),
            x,
            step: None,
        })
    };
    let mut records = vec![record(0, x0.clone())?];
    let mut stop = StopReason::MaxIter;
    for k in 0..opts.max_iter {
        let x_k = records[k].x.clone();
        let (x_next, cert) = match step(&x_k, k) {
            Ok(v) => v,
            Err(e) => {
                stop = StopReason::Failure(e);
                break;
            }
        };
        let stop_flag = opts
            .stop_eps0
            .is_some_and(|e0| step_stop_check(&x_k, &x_next, s.lambda(k), s.eps(k), e0));
        records[k].step = Some(StepRecord {
            step_norm: (&x_next - &x_k).norm(),
            stop_flag,
            certificate: Some(cert),
        });
        records.push(record(k + 1, x_next)?);
        if stop_flag && opts.halt_on_stop {
            stop = StopReason::Criterion;
            break;
        }
    }
    Ok(Trace { records, stop })
}

//! Inexact proximal penalization for the simple bilevel program
//! `min f` over `S₀ = argmin_C g`.

use crate::convex::{ConvexFunction, ConvexSet, Vector, MEMBERSHIP_TOLERANCE};
use crate::error::{check_dim, Error, Result};
use crate::inner::{solve_prox_capped, ProxSubproblem, StepCertificate, DEFAULT_INNER_CAP};
use crate::run::{check_reference, run_loop, RunOptions};
use crate::schedule::Schedule;
use crate::trace::Trace;

/// Both objectives must be bounded below on `C`. This holds automatically
/// when `C` is compact; otherwise it is the caller's obligation, as is
/// non-emptiness and boundedness of the solution set.
#[derive(Debug, Clone, PartialEq)]
pub struct SbpProblem {
    f: ConvexFunction,
    g: ConvexFunction,
    set: ConvexSet,
    x0: Vector,
}

pub(crate) fn check_start(set: &ConvexSet, x0: &Vector) -> Result<()> {
    check_dim(set.dim(), x0.len())?;
    if !set.contains(x0, MEMBERSHIP_TOLERANCE) {
        return Err(Error::NotInSet { distance: set.distance(x0)? });
    }
    Ok(())
}

impl SbpProblem {
    pub fn new(f: ConvexFunction, g: ConvexFunction, set: ConvexSet, x0: Vector) -> Result<Self> {
        check_dim(set.dim(), f.dim())?;
        check_dim(set.dim(), g.dim())?;
        check_start(&set, &x0)?;
        Ok(SbpProblem { f, g, set, x0 })
    }

    pub fn f(&self) -> &ConvexFunction {
        &self.f
    }

    pub fn g(&self) -> &ConvexFunction {
        &self.g
    }

    pub fn set(&self) -> &ConvexSet {
        &self.set
    }

    pub fn x0(&self) -> &Vector {
        &self.x0
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    /// `ψ = g + ε f`.
    pub fn penalized(&self, eps: f64) -> Result<ConvexFunction> {
        ConvexFunction::sum(vec![(1.0, self.g.clone()), (eps, self.f.clone())])
    }
}

pub fn sbp_step(prob: &SbpProblem, x_k: &Vector, k: usize, s: &Schedule) -> Result<(Vector, StepCertificate)> {
    sbp_step_capped(prob, x_k, k, s, DEFAULT_INNER_CAP)
}

fn sbp_step_capped(
    prob: &SbpProblem,
    x_k: &Vector,
    k: usize,
    s: &Schedule,
    cap: usize,
) -> Result<(Vector, StepCertificate)> {
    check_start(&prob.set, x_k)?;
    let p = ProxSubproblem {
        psi: prob.penalized(s.eps(k))?,
        anchor: x_k.clone(),
        lambda: s.lambda(k),
        set: prob.set.clone(),
        eta_budget: s.eta(k),
    };
    solve_prox_capped(&p, cap)
}

/// Runs the outer loop; an inner failure ends the run with a partial trace
/// whose stop reason carries the error.
pub fn sbp_run(prob: &SbpProblem, s: &Schedule, opts: &RunOptions) -> Result<Trace> {
    s.check()?;
    check_reference(opts, prob.dim())?;
    run_loop(
        &prob.x0,
        s,
        opts,
        |x, k| sbp_step_capped(prob, x, k, s, opts.inner_cap),
        |x| Ok((prob.f.value(x)?, Some(prob.g.value(x)?))),
    )
}

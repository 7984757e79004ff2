//! Inexact proximal penalization for the simple MPEC
//! `min f` over `sol(VI(F, C))`.

use crate::convex::{ConvexFunction, ConvexSet, Vector};
use crate::error::{check_dim, Error, Result};
use crate::gap::dual_gap;
use crate::inner::{check_certificate, ForwardMap, Inclusion, Leaf, StepCertificate, DEFAULT_INNER_CAP};
use crate::operator::{check_monotone_plus, MonotoneOperator};
use crate::run::{check_reference, run_loop, RunOptions};
use crate::sbp::check_start;
use crate::schedule::Schedule;
use crate::trace::Trace;

/// Tolerance of the diagnostic gap column.
const TRACE_GAP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SmpecProblem {
    f: ConvexFunction,
    op: MonotoneOperator,
    set: ConvexSet,
    x0: Vector,
}

impl SmpecProblem {
    /// Coercivity of `f` is only needed off compact sets; there a positive
    /// definite quadratic piece is required as a witness.
    pub fn new(f: ConvexFunction, op: MonotoneOperator, set: ConvexSet, x0: Vector) -> Result<Self> {
        check_dim(set.dim(), f.dim())?;
        check_dim(set.dim(), op.dim())?;
        check_start(&set, &x0)?;
        if !check_monotone_plus(&op) {
            return Err(Error::NotMonotonePlus);
        }
        if !set.is_compact() {
            let coercive = f.leaves().iter().any(|(_, leaf)| {
                matches!(leaf, ConvexFunction::Quadratic(q) if q.min_eigenvalue() > 0.0)
            });
            if !coercive {
                return Err(Error::InvalidProblem(
                    "on a non-compact set f needs a positive definite quadratic piece".into(),
                ));
            }
        }
        Ok(SmpecProblem { f, op, set, x0 })
    }

    pub fn f(&self) -> &ConvexFunction {
        &self.f
    }

    pub fn operator(&self) -> &MonotoneOperator {
        &self.op
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
}

/// Leaves of `f` entering the inclusion as `ε·∂f`, with the η¹ budget
/// charged on `∂_{η¹}f` itself.
fn smpec_leaves(f: &ConvexFunction, eps: f64) -> Vec<Leaf<'_>> {
    f.leaves()
        .into_iter()
        .map(|(w, leaf)| Leaf { coef: eps * w, budget_weight: w, f: leaf })
        .collect()
}

pub fn smpec_step(prob: &SmpecProblem, x_k: &Vector, k: usize, s: &Schedule) -> Result<(Vector, StepCertificate)> {
    smpec_step_capped(prob, x_k, k, s, DEFAULT_INNER_CAP)
}

fn smpec_step_capped(
    prob: &SmpecProblem,
    x_k: &Vector,
    k: usize,
    s: &Schedule,
    cap: usize,
) -> Result<(Vector, StepCertificate)> {
    check_start(&prob.set, x_k)?;
    let (m, q) = prob.op.affine_parts();
    Inclusion {
        leaves: smpec_leaves(&prob.f, s.eps(k)),
        forward: Some(ForwardMap {
            m: &m,
            q: &q,
            lipschitz: prob.op.lipschitz(),
            symmetric: prob.op.is_symmetric(),
        }),
        anchor: x_k,
        lambda: s.lambda(k),
        set: &prob.set,
        budget: s.eta(k),
        cap,
    }
    .solve()
}

/// Re-checks `−(y − anchor)/λ ∈ F(y) + ε ∂_{η¹}f(y) + N_C^{η²}(y)`: the
/// sub-witness must equal `F(y) + ε Σ wᵢuᵢ` with `uᵢ` the recorded pieces.
#[allow(clippy::too_many_arguments)]
pub fn verify_smpec_certificate(
    op: &MonotoneOperator,
    f: &ConvexFunction,
    eps: f64,
    set: &ConvexSet,
    anchor: &Vector,
    lambda: f64,
    y: &Vector,
    cert: &StepCertificate,
    eta_budget: f64,
) -> bool {
    if op.dim() != y.len() || f.dim() != y.len() || !(eps.is_finite() && eps > 0.0) {
        return false;
    }
    let fy = op.apply_unchecked(y);
    check_certificate(&smpec_leaves(f, eps), Some(&fy), set, anchor, lambda, y, cert, eta_budget)
}

/// Runs the outer loop. The `g_or_gap` column holds the dual gap when `C`
/// is compact and stays empty otherwise.
pub fn smpec_run(prob: &SmpecProblem, s: &Schedule, opts: &RunOptions) -> Result<Trace> {
    s.check()?;
    check_reference(opts, prob.dim())?;
    let compact = prob.set.is_compact();
    run_loop(
        &prob.x0,
        s,
        opts,
        |x, k| smpec_step_capped(prob, x, k, s, opts.inner_cap),
        |x| {
            let gap = if compact {
                Some(dual_gap(&prob.op, &prob.set, x, TRACE_GAP_TOLERANCE)?.value)
            } else {
                None
            };
            Ok((prob.f.value(x)?, gap))
        },
    )
}

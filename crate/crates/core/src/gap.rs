//! Dual gap function, the penalty path, and the ε-Lagrange stopping rule.

use crate::convex::{
    eps_normal_residual_decomposed, eps_subgrad_residual, ConvexFunction, ConvexSet, Vector,
    MEMBERSHIP_TOLERANCE,
};
use crate::error::{check_dim, Error, Result};
use crate::inner::{solve_prox_capped, ProxSubproblem, StepCertificate, CERTIFICATE_SLACK, DEFAULT_INNER_CAP};
use crate::operator::MonotoneOperator;
use crate::run::dist_to_points;
use crate::smpec::SmpecProblem;
use crate::trace::{StepRecord, StopReason, Trace, TraceRecord};
use nalgebra::SymmetricEigen;

pub const DEFAULT_GAP_TOLERANCE: f64 = 1e-6;
pub const GAP_ITERATION_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GapEvaluation {
    /// `g_D(x)` up to `tol` from below.
    pub value: f64,
    /// Point of `C` attaining `value`.
    pub maximizer: Vector,
    pub tol: f64,
}

/// `g_D(x) = sup_{y∈C} ⟨F(y), x − y⟩` for compact `C`.
///
/// The objective is a concave quadratic in `y`. It is maximized by projected
/// gradient ascent from `P_C(x)`, stopped when the Frank–Wolfe gap from the
/// exact linear oracle drops below `tol`. A skew linear part makes the
/// objective linear and one oracle call is exact.
pub fn dual_gap(op: &MonotoneOperator, set: &ConvexSet, x: &Vector, tol: f64) -> Result<GapEvaluation> {
    check_dim(set.dim(), x.len())?;
    check_dim(op.dim(), x.len())?;
    if !set.is_compact() {
        return Err(Error::NonCompact);
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidProblem("gap tolerance must be positive".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gap evaluation point"));
    }
    let (m, q) = op.affine_parts();
    let mt = m.transpose();
    let curvature = SymmetricEigen::new(&m + &mt).eigenvalues.max().max(0.0);
    let h = |y: &Vector| (&m * y + &q).dot(&(x - y));
    let grad = |y: &Vector| &mt * (x - y) - (&m * y + &q);

    let mut y = set.project(x)?;
    if curvature <= 1e-12 * (1.0 + m.amax()) {
        let s = set.linear_max(&grad(&y))?;
        let (value, maximizer) = if h(&s) >= h(&y) { (h(&s), s) } else { (h(&y), y) };
        return Ok(GapEvaluation { value, maximizer, tol });
    }
    let mut best_fw = f64::INFINITY;
    for _ in 0..GAP_ITERATION_CAP {
        let g = grad(&y);
        let s = set.linear_max(&g)?;
        let fw = g.dot(&(&s - &y));
        best_fw = best_fw.min(fw);
        if fw <= tol {
            return Ok(GapEvaluation { value: h(&y), maximizer: y, tol });
        }
        y = set.project(&(&y + g / curvature))?;
    }
    Err(Error::IterationCap { cap: GAP_ITERATION_CAP, best_residual: best_fw })
}

/// `F(y*)` at the dual-gap maximizer: by Danskin's theorem a
/// `tol`-subgradient of `g_D` at `x`.
pub fn gap_subgradient(op: &MonotoneOperator, set: &ConvexSet, x: &Vector, tol: f64) -> Result<Vector> {
    let ev = dual_gap(op, set, x, tol)?;
    Ok(op.apply_unchecked(&ev.maximizer))
}

/// Feasibility for `min f` s.t. `g_D(x) ≤ 0, x ∈ C`, relaxed by `tol`.
pub fn r_smpec_feasible(op: &MonotoneOperator, set: &ConvexSet, x: &Vector, tol: f64) -> Result<bool> {
    check_dim(set.dim(), x.len())?;
    if set.distance(x)? > tol {
        return Ok(false);
    }
    Ok(dual_gap(op, set, x, tol)?.value <= tol)
}

/// `‖x_{k+1} − x_k‖ ≤ λ_k ε_k ε₀`.
pub fn step_stop_check(x_k: &Vector, x_k1: &Vector, lambda_k: f64, eps_k: f64, eps0: f64) -> bool {
    x_k.len() == x_k1.len() && (x_k1 - x_k).norm() <= lambda_k * eps_k * eps0
}

/// How the gap-function element `w` of a multiplier witness is justified.
#[derive(Debug, Clone, PartialEq)]
pub enum GapElement {
    /// `w = F(x̄)`, the operator value used along SMPEC steps.
    OperatorValue,
    /// `w = F(y*)` for a dual-gap maximizer `y*` that is `tol`-optimal at `x̄`.
    Danskin { maximizer: Vector, tol: f64 },
}

/// Enlargements under which the memberships of `u` and `v` are certified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmrTolerances {
    pub u: f64,
    pub v: f64,
}

impl Default for LmrTolerances {
    fn default() -> Self {
        LmrTolerances { u: 1e-9, v: 1e-9 }
    }
}

/// `(u, w, v, λ)` at a point `x̄` for the ε-Lagrange multiplier rule
/// `‖u + λw + v‖ ≤ ε₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmrWitness {
    pub point: Vector,
    pub u: Vector,
    pub w: Vector,
    pub v: Vector,
    pub lambda_mult: f64,
    certified: bool,
}

/// Inputs to [`LmrWitness::certify`].
#[derive(Debug, Clone)]
pub struct LmrClaim<'a> {
    pub f: &'a ConvexFunction,
    pub op: &'a MonotoneOperator,
    pub set: &'a ConvexSet,
    pub point: Vector,
    pub u: Vector,
    /// Per-leaf decomposition of `u`, required when `f` is a sum.
    pub u_pieces: Option<Vec<Vector>>,
    pub w: Vector,
    pub w_source: GapElement,
    pub v: Vector,
    /// Per-member decomposition of `v` for intersections; empty otherwise.
    pub v_pieces: Vec<Vector>,
    pub lambda_mult: f64,
    pub tol: LmrTolerances,
}

fn uncertified(msg: impl Into<String>) -> Error {
    Error::UncertifiedWitness(msg.into())
}

impl LmrWitness {
    /// A witness with no membership claims; [`eps_lmr_check`] rejects it.
    pub fn uncertified(point: Vector, u: Vector, w: Vector, v: Vector, lambda_mult: f64) -> Self {
        LmrWitness { point, u, w, v, lambda_mult, certified: false }
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    pub fn certify(claim: LmrClaim<'_>) -> Result<Self> {
        let n = claim.point.len();
        for len in [claim.u.len(), claim.w.len(), claim.v.len(), claim.set.dim(), claim.op.dim(), claim.f.dim()] {
            check_dim(n, len)?;
        }
        if !(claim.lambda_mult.is_finite() && claim.lambda_mult >= 0.0) {
            return Err(uncertified("multiplier must be finite and nonnegative"));
        }
        let ru = eps_subgrad_residual(claim.f, &claim.point, &claim.u, claim.u_pieces.as_deref())?.value();
        if ru > claim.tol.u + CERTIFICATE_SLACK {
            return Err(uncertified(format!("u has residual {ru:e} above {:e}", claim.tol.u)));
        }
        let rv = eps_normal_residual_decomposed(claim.set, &claim.point, &claim.v, &claim.v_pieces)?.value();
        if rv > claim.tol.v + CERTIFICATE_SLACK {
            return Err(uncertified(format!("v has residual {rv:e} above {:e}", claim.tol.v)));
        }
        let close = |a: &Vector, b: &Vector| (a - b).amax() <= CERTIFICATE_SLACK * (1.0 + a.amax());
        match &claim.w_source {
            GapElement::OperatorValue => {
                if !close(&claim.w, &claim.op.apply_unchecked(&claim.point)) {
                    return Err(uncertified("w differs from the operator value"));
                }
            }
            GapElement::Danskin { maximizer, tol } => {
                check_dim(n, maximizer.len())?;
                if !claim.set.contains(maximizer, MEMBERSHIP_TOLERANCE) {
                    return Err(uncertified("gap maximizer lies outside the set"));
                }
                let fy = claim.op.apply_unchecked(maximizer);
                if !close(&claim.w, &fy) {
                    return Err(uncertified("w differs from the operator value at the gap maximizer"));
                }
                let attained = fy.dot(&(&claim.point - maximizer));
                let gap = dual_gap(claim.op, claim.set, &claim.point, *tol)?;
                if attained < gap.value - tol - CERTIFICATE_SLACK {
                    return Err(uncertified("gap maximizer is not tol-optimal"));
                }
            }
        }
        Ok(LmrWitness {
            point: claim.point,
            u: claim.u,
            w: claim.w,
            v: claim.v,
            lambda_mult: claim.lambda_mult,
            certified: true,
        })
    }

    /// Assembles the witness carried by an SMPEC step `x_k → y` with
    /// certificate `cert`: `u` is the `f` part, `w = F(y)`, `v = ξ/ε_k`,
    /// `λ = 1/ε_k`. Then `u + λw + v = −(y − x_k)/(λ_k ε_k)`.
    pub fn from_smpec_step(prob: &SmpecProblem, eps_k: f64, y: &Vector, cert: &StepCertificate) -> Result<Self> {
        if !(eps_k.is_finite() && eps_k > 0.0) {
            return Err(uncertified("eps_k must be positive"));
        }
        let leaves = prob.f().leaves();
        if leaves.len() != cert.sub_pieces.len() {
            return Err(uncertified("certificate pieces do not match f"));
        }
        let mut u = Vector::zeros(y.len());
        for ((w, _), p) in leaves.iter().zip(&cert.sub_pieces) {
            u += p * *w;
        }
        LmrWitness::certify(LmrClaim {
            f: prob.f(),
            op: prob.operator(),
            set: prob.set(),
            point: y.clone(),
            u,
            u_pieces: Some(cert.sub_pieces.clone()),
            w: prob.operator().apply_unchecked(y),
            w_source: GapElement::OperatorValue,
            v: &cert.normal_witness / eps_k,
            v_pieces: cert.normal_pieces.iter().map(|p| p / eps_k).collect(),
            lambda_mult: 1.0 / eps_k,
            tol: LmrTolerances { u: cert.eta1, v: cert.eta2 / eps_k },
        })
    }
}

/// `‖u + λw + v‖ ≤ ε₀`; uncertified witnesses are rejected.
pub fn eps_lmr_check(w: &LmrWitness, eps0: f64) -> Result<bool> {
    if !w.certified {
        return Err(uncertified("membership of u, w, v was never certified"));
    }
    Ok((&w.u + &w.w * w.lambda_mult + &w.v).norm() <= eps0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyOptions {
    /// Proximal parameter of the cutting-plane steps.
    pub prox_lambda: f64,
    /// Tolerance of each dual-gap evaluation.
    pub gap_tol: f64,
    /// Point of `sol(VI)` against which the penalty bound is checked.
    pub feasible_point: Option<Vector>,
    pub reference: Option<Vec<Vector>>,
    /// Cap on cutting-plane iterations per penalty parameter.
    pub max_cuts: usize,
}

impl Default for PenaltyOptions {
    fn default() -> Self {
        PenaltyOptions {
            prox_lambda: 1.0,
            gap_tol: 1e-9,
            feasible_point: None,
            reference: None,
            max_cuts: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyStep {
    pub mu: f64,
    pub x: Vector,
    pub f: f64,
    pub gap: f64,
    /// Certified bound on `f(x) + μ g_D(x) − min_C (f + μ g_D)`.
    pub optimality_bound: f64,
    /// `g_D(x) ≤ (f(x̃) − f(x) + bound)/μ + gap_tol`, when `x̃` is supplied.
    pub bound_holds: Option<bool>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyOutcome {
    pub trace: Trace,
    pub steps: Vec<PenaltyStep>,
}

struct CutModel {
    cuts: Vec<(Vector, f64)>,
}

impl CutModel {
    fn add(&mut self, op: &MonotoneOperator, ev: &GapEvaluation) {
        let a = op.apply_unchecked(&ev.maximizer);
        let b = -a.dot(&ev.maximizer);
        self.cuts.push((a, b));
    }

    fn value(&self, z: &Vector) -> f64 {
        self.cuts.iter().map(|(a, b)| a.dot(z) + b).fold(f64::NEG_INFINITY, f64::max)
    }

    fn function(&self) -> Result<ConvexFunction> {
        ConvexFunction::max_affine(self.cuts.clone())
    }
}

/// Minimizes `f + μ_k g_D` over `C` for each `μ_k`, warm-starting from the
/// previous solution.
///
/// Each subproblem is solved by proximal steps on a cutting-plane model of
/// `g_D` (cuts `⟨F(y*), z − y*⟩` from gap maximizers, plus the zero cut,
/// valid on `C`). A step `y` from anchor `x` is accepted once
/// `η¹ + η² + μ(g_D(y) + tol − model(y)) + ‖y − x‖·diam(C)/λ ≤ inner_tol`,
/// which bounds its optimality gap.
pub fn penalty_solve(
    prob: &SmpecProblem,
    mu_schedule: &[f64],
    inner_tol: f64,
    opts: &PenaltyOptions,
) -> Result<PenaltyOutcome> {
    let set = prob.set();
    let op = prob.operator();
    let f = prob.f();
    let n = prob.dim();
    let diam = set.diameter().ok_or(Error::NonCompact)?;
    if mu_schedule.is_empty()
        || mu_schedule.iter().any(|m| !(m.is_finite() && *m > 0.0))
        || mu_schedule.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidSchedule("mu must be positive and strictly increasing".into()));
    }
    if !(inner_tol.is_finite() && inner_tol > 0.0) {
        return Err(Error::InvalidSchedule("inner tolerance must be positive".into()));
    }
    let lambda = opts.prox_lambda;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidSchedule("prox lambda must be positive".into()));
    }
    let gap_tol = opts.gap_tol;
    let feasible_f = match &opts.feasible_point {
        Some(xt) => {
            check_dim(n, xt.len())?;
            if !r_smpec_feasible(op, set, xt, gap_tol)? {
                return Err(Error::InvalidProblem("reference point is not a solution of the VI".into()));
            }
            Some(f.value(xt)?)
        }
        None => None,
    };
    for p in opts.reference.iter().flatten() {
        check_dim(n, p.len())?;
    }

    let mut model = CutModel { cuts: vec![(Vector::zeros(n), 0.0)] };
    let mut x = prob.x0().clone();
    model.add(op, &dual_gap(op, set, &x, gap_tol)?);
    let mut steps = Vec::with_capacity(mu_schedule.len());
    let mut stop = StopReason::MaxIter;

    'outer: for &mu in mu_schedule {
        // μ·tol enters the optimality bound, so the gap tolerance shrinks with μ.
        let tol_mu = gap_tol.min(inner_tol / (4.0 * mu));
        let mut gx = dual_gap(op, set, &x, tol_mu)?;
        let mut accepted = None;
        let mut best_bound = f64::INFINITY;
        for it in 1..=opts.max_cuts {
            let psi = ConvexFunction::sum(vec![(1.0, f.clone()), (mu, model.function()?)])?;
            let sub = ProxSubproblem {
                psi,
                anchor: x.clone(),
                lambda,
                set: set.clone(),
                eta_budget: inner_tol / 4.0,
            };
            let (y, cert) = match solve_prox_capped(&sub, DEFAULT_INNER_CAP) {
                Ok(v) => v,
                Err(e) => {
                    stop = StopReason::Failure(e);
                    break 'outer;
                }
            };
            let gy = dual_gap(op, set, &y, tol_mu)?;
            let model_y = model.value(&y);
            let bound = cert.eta1
                + cert.eta2
                + mu * (gy.value + tol_mu - model_y).max(0.0)
                + (&y - &x).norm() * diam / lambda;
            let phi_x = f.value(&x)? + mu * gx.value;
            let phi_y = f.value(&y)? + mu * gy.value;
            let phi_model_y = f.value(&y)? + mu * model_y;
            model.add(op, &gy);
            best_bound = best_bound.min(bound);
            if bound <= inner_tol {
                accepted = Some((y, gy, bound, it));
                break;
            }
            if phi_y <= phi_x - 0.1 * (phi_x - phi_model_y).max(0.0) {
                x = y;
                gx = gy;
            }
        }
        let Some((y, gy, bound, iterations)) = accepted else {
            stop = StopReason::Failure(Error::IterationCap { cap: opts.max_cuts, best_residual: best_bound });
            break;
        };
        let fy = f.value(&y)?;
        steps.push(PenaltyStep {
            mu,
            f: fy,
            gap: gy.value,
            optimality_bound: bound,
            bound_holds: feasible_f.map(|ft| gy.value <= (ft - fy + bound) / mu + tol_mu),
            iterations,
            x: y.clone(),
        });
        x = y;
    }

    let records = steps
        .iter()
        .enumerate()
        .map(|(k, s)| TraceRecord {
            k,
            x: s.x.clone(),
            eps_k: 1.0 / s.mu,
            lambda_k: lambda,
            eta_k: inner_tol,
            f: s.f,
            g_or_gap: Some(s.gap),
            dist_to_ref: opts.reference.as_deref().and_then(|r| dist_to_points(&s.x, r)),
            step: steps.get(k + 1).map(|next| StepRecord {
                step_norm: (&next.x - &s.x).norm(),
                stop_flag: false,
                certificate: None,
            }),
        })
        .collect::<Vec<_>>();
    if records.is_empty() {
        return Err(match stop {
            StopReason::Failure(e) => e,
            _ => Error::InvalidSchedule("empty penalty schedule".into()),
        });
    }
    Ok(PenaltyOutcome { trace: Trace { records, stop }, steps })
}

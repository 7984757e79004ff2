//! Certified solution of one proximal subproblem
//! `min_{z∈C} ψ(z) + ‖z − anchor‖²/(2λ)`.
//!
//! The solver is a primal-dual splitting. Smooth pieces of ψ (and the
//! operator of an SMPEC step) take forward steps; the prox term and the
//! indicator of `C` are resolved exactly in the backward step; every
//! non-smooth piece (norm, max-affine) carries a dual variable that lives in
//! the domain of its conjugate. Those dual variables are the ε-subgradient
//! witnesses, and the normal witness is the exact complement of the
//! optimality identity, so only the two residuals need to shrink.

use crate::convex::{
    eps_normal_residual_decomposed, leaf_residual, ConvexFunction, ConvexSet, EpsResidual,
    Matrix, Vector,
};
use crate::error::{check_dim, Error, Result};

/// Absolute slack on every certificate check.
pub const CERTIFICATE_SLACK: f64 = 1e-9;
pub const DEFAULT_INNER_CAP: usize = 1_000_000;

/// Largest accepted per-iteration contraction factor for a non-symmetric
/// forward operator.
const MAX_CONTRACTION: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone)]
pub struct ProxSubproblem {
    pub psi: ConvexFunction,
    pub anchor: Vector,
    pub lambda: f64,
    pub set: ConvexSet,
    pub eta_budget: f64,
}

/// Witnesses that a step satisfies
/// `−(y − anchor)/λ ∈ ∂_{η¹}ψ(y) + N_C^{η²}(y)` with `η¹ + η² ≤ η`.
///
/// `sub_pieces` holds one ε-subgradient per leaf of the certified function
/// (see [`ConvexFunction::leaves`]); `normal_pieces` is empty unless `C` is an
/// intersection, in which case it splits `normal_witness` over the members.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCertificate {
    pub eta1: f64,
    pub eta2: f64,
    pub sub_witness: Vector,
    pub sub_pieces: Vec<Vector>,
    pub normal_witness: Vector,
    pub normal_pieces: Vec<Vector>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// `z ↦ Mz + q`, with its Lipschitz constant.
#[derive(Debug, Clone)]
pub(crate) struct ForwardMap<'a> {
    pub m: &'a Matrix,
    pub q: &'a Vector,
    pub lipschitz: f64,
    pub symmetric: bool,
}

impl ForwardMap<'_> {
    fn apply(&self, z: &Vector) -> Vector {
        self.m * z + self.q
    }
}

/// A leaf of the certified function: its coefficient in the inclusion and
/// its weight in the η¹ budget (they differ for SMPEC steps, where the
/// inclusion carries `ε·∂_{η¹}f`).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Leaf<'a> {
    pub coef: f64,
    pub budget_weight: f64,
    pub f: &'a ConvexFunction,
}

pub(crate) struct Inclusion<'a> {
    pub leaves: Vec<Leaf<'a>>,
    pub forward: Option<ForwardMap<'a>>,
    pub anchor: &'a Vector,
    pub lambda: f64,
    pub set: &'a ConvexSet,
    pub budget: f64,
    pub cap: usize,
}

enum Dual {
    Smooth,
    Ball(Vector),
    Simplex(Vec<f64>),
}

fn project_ball(u: Vector, radius: f64) -> Vector {
    let nrm = u.norm();
    if nrm <= radius {
        return u;
    }
    if radius == 0.0 {
        return Vector::zeros(u.len());
    }
    let mut out = u * (radius / nrm);
    while out.norm() > radius {
        out *= 1.0 - f64::EPSILON;
    }
    out
}

fn project_unit_simplex(theta: &[f64]) -> Vec<f64> {
    let mut u = theta.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            shift = t;
        }
    }
    theta.iter().map(|v| (v - shift).max(0.0)).collect()
}

fn dual_vector(f: &ConvexFunction, dual: &Dual, z: &Vector) -> Vector {
    match (f, dual) {
        (ConvexFunction::Norm2(_), Dual::Ball(u)) => u.clone(),
        (ConvexFunction::MaxAffine(m), Dual::Simplex(theta)) => {
            let mut v = Vector::zeros(z.len());
            for (t, a) in theta.iter().zip(m.slopes()) {
                if *t > 0.0 {
                    v += a * *t;
                }
            }
            v
        }
        _ => f.subgradient_unchecked(z),
    }
}

/// Cheap upper bound on a leaf residual from its dual variable.
fn dual_residual_bound(f: &ConvexFunction, dual: &Dual, y: &Vector, p: &Vector) -> f64 {
    match (f, dual) {
        (ConvexFunction::Norm2(n), Dual::Ball(u)) => {
            let d = y - &n.center;
            (n.weight * d.norm() - u.dot(&d)).max(0.0)
        }
        (ConvexFunction::MaxAffine(m), Dual::Simplex(theta)) => {
            let vals = m.piece_values(y);
            let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mix: f64 = theta.iter().zip(&vals).map(|(t, v)| t * v).sum();
            (top - mix).max(0.0)
        }
        _ => leaf_residual(f, y, p).map(EpsResidual::value).unwrap_or(f64::INFINITY),
    }
}

impl Inclusion<'_> {
    fn forward_value(&self, y: &Vector) -> Option<Vector> {
        self.forward.as_ref().map(|f| f.apply(y))
    }

    /// Normal witness as the exact complement of the optimality identity.
    fn complement(&self, y: &Vector, sub_witness: &Vector) -> Vector {
        -(y - self.anchor) / self.lambda - sub_witness
    }

    fn exact_eta1(&self, y: &Vector, pieces: &[Vector]) -> Result<f64> {
        let mut acc = 0.0;
        for (leaf, p) in self.leaves.iter().zip(pieces) {
            let r = leaf_residual(leaf.f, y, p)?;
            if !r.is_finite() {
                return Ok(f64::INFINITY);
            }
            acc += leaf.budget_weight * r.value();
        }
        Ok(acc)
    }

    pub(crate) fn solve(&self) -> Result<(Vector, StepCertificate)> {
        let n = self.anchor.len();
        check_dim(self.set.dim(), n)?;
        for leaf in &self.leaves {
            check_dim(n, leaf.f.dim())?;
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidProblem("lambda must be positive".into()));
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(Error::InvalidProblem("eta budget must be positive".into()));
        }
        let lambda = self.lambda;

        let smooth_l: f64 = self
            .leaves
            .iter()
            .map(|l| l.coef * l.f.gradient_lipschitz())
            .sum();
        let (forward_l, symmetric) = match &self.forward {
            Some(f) => (f.lipschitz, f.symmetric),
            None => (0.0, true),
        };
        let lip = smooth_l + forward_l;
        if !symmetric && lip > 0.0 {
            let contraction = 1.0 / (1.0 + 1.0 / (lambda * lip).powi(2)).sqrt();
            if contraction > MAX_CONTRACTION {
                return Err(Error::StepSizeInfeasible { lipschitz: lip, lambda });
            }
        }
        let mut tau = 4.0 * lambda;
        if lip > 0.0 {
            tau = tau.min(1.0 / lip);
            if !symmetric {
                tau = tau.min(1.0 / (lambda * lip * lip));
            }
        }
        let dual_norm_sq: f64 = self
            .leaves
            .iter()
            .map(|l| match l.f {
                ConvexFunction::Norm2(_) => l.coef * l.coef,
                ConvexFunction::MaxAffine(m) => {
                    l.coef * l.coef * m.slopes().iter().map(|a| a.norm_squared()).sum::<f64>()
                }
                _ => 0.0,
            })
            .sum();
        let sigma = if dual_norm_sq > 0.0 {
            1.0 / (2.0 * tau * dual_norm_sq)
        } else {
            0.0
        };
        let backward_scale = 1.0 / lambda + 1.0 / tau;

        let mut z = self.set.project(self.anchor)?;
        let mut duals: Vec<Dual> = self
            .leaves
            .iter()
            .map(|l| match l.f {
                ConvexFunction::Norm2(nrm) => {
                    Dual::Ball(project_ball(l.f.subgradient_unchecked(&z), nrm.weight))
                }
                ConvexFunction::MaxAffine(m) => {
                    let mut theta = vec![0.0; m.len()];
                    theta[m.active_index(&z)] = 1.0;
                    Dual::Simplex(theta)
                }
                _ => Dual::Smooth,
            })
            .collect();

        let mut best = f64::INFINITY;
        for iter in 1..=self.cap {
            let mut grad = self.forward_value(&z).unwrap_or_else(|| Vector::zeros(n));
            for (leaf, dual) in self.leaves.iter().zip(&duals) {
                grad += dual_vector(leaf.f, dual, &z) * leaf.coef;
            }
            let v = &z - grad * tau;
            let center = (self.anchor / lambda + v / tau) / backward_scale;
            let (z_new, parts) = self.set.project_with_parts(&center)?;
            let z_bar = &z_new * 2.0 - &z;
            for (leaf, dual) in self.leaves.iter().zip(duals.iter_mut()) {
                match (leaf.f, dual) {
                    (ConvexFunction::Norm2(nrm), Dual::Ball(u)) => {
                        let step = (&z_bar - &nrm.center) * (sigma * leaf.coef);
                        *u = project_ball(&*u + step, nrm.weight);
                    }
                    (ConvexFunction::MaxAffine(m), Dual::Simplex(theta)) => {
                        let vals = m.piece_values(&z_bar);
                        let moved: Vec<f64> = theta
                            .iter()
                            .zip(&vals)
                            .map(|(t, v)| t + sigma * leaf.coef * v)
                            .collect();
                        *theta = project_unit_simplex(&moved);
                    }
                    _ => {}
                }
            }
            z = z_new;
            if z.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("inner iterate"));
            }

            let pieces: Vec<Vector> = self
                .leaves
                .iter()
                .zip(&duals)
                .map(|(leaf, dual)| dual_vector(leaf.f, dual, &z))
                .collect();
            let eta1_bound: f64 = self
                .leaves
                .iter()
                .zip(&duals)
                .zip(&pieces)
                .map(|((leaf, dual), p)| leaf.budget_weight * dual_residual_bound(leaf.f, dual, &z, p))
                .sum();
            if !eta1_bound.is_finite() || eta1_bound > self.budget {
                best = best.min(eta1_bound);
                continue;
            }
            let (cert, total) = self.assemble(&z, pieces, &parts, backward_scale, iter, eta1_bound)?;
            best = best.min(total);
            if total <= self.budget {
                let eta1 = self.exact_eta1(&z, &cert.sub_pieces)?;
                if eta1 + cert.eta2 <= self.budget {
                    return Ok((z, StepCertificate { eta1, ..cert }));
                }
            }
        }
        Err(Error::IterationCap { cap: self.cap, best_residual: best })
    }

    fn assemble(
        &self,
        y: &Vector,
        pieces: Vec<Vector>,
        parts: &[Vector],
        backward_scale: f64,
        iterations: usize,
        eta1: f64,
    ) -> Result<(StepCertificate, f64)> {
        let mut sub = self.forward_value(y).unwrap_or_else(|| Vector::zeros(y.len()));
        for (leaf, p) in self.leaves.iter().zip(&pieces) {
            sub += p * leaf.coef;
        }
        let normal = self.complement(y, &sub);
        let normal_pieces = if self.set.leaves().len() > 1 {
            let mut split: Vec<Vector> = parts.iter().map(|p| p * backward_scale).collect();
            let head: Vector = split[..split.len() - 1]
                .iter()
                .fold(Vector::zeros(y.len()), |acc, p| acc + p);
            *split.last_mut().unwrap() = &normal - head;
            split
        } else {
            Vec::new()
        };
        let eta2 = eps_normal_residual_decomposed(self.set, y, &normal, &normal_pieces)?.value();
        let residual_norm = ((y - self.anchor) / self.lambda + &sub + &normal).norm();
        let cert = StepCertificate {
            eta1,
            eta2,
            sub_witness: sub,
            sub_pieces: pieces,
            normal_witness: normal,
            normal_pieces,
            residual_norm,
            iterations,
        };
        Ok((cert, eta1 + eta2))
    }
}

/// Re-checks a certificate from scratch against the inclusion it claims.
#[allow(clippy::too_many_arguments)]
pub(crate) fn check_certificate(
    leaves: &[Leaf<'_>],
    forward_value: Option<&Vector>,
    set: &ConvexSet,
    anchor: &Vector,
    lambda: f64,
    y: &Vector,
    cert: &StepCertificate,
    eta_budget: f64,
) -> bool {
    let n = y.len();
    let dims_ok = anchor.len() == n
        && set.dim() == n
        && cert.sub_witness.len() == n
        && cert.normal_witness.len() == n
        && cert.sub_pieces.len() == leaves.len()
        && cert.sub_pieces.iter().all(|p| p.len() == n)
        && leaves.iter().all(|l| l.f.dim() == n)
        && forward_value.is_none_or(|f| f.len() == n);
    if !dims_ok || !(lambda.is_finite() && lambda > 0.0) {
        return false;
    }
    let etas_ok = cert.eta1.is_finite()
        && cert.eta2.is_finite()
        && cert.eta1 >= 0.0
        && cert.eta2 >= 0.0
        && cert.eta1 + cert.eta2 <= eta_budget + CERTIFICATE_SLACK;
    if !etas_ok || !set.contains(y, CERTIFICATE_SLACK) {
        return false;
    }
    let mut combined = forward_value.cloned().unwrap_or_else(|| Vector::zeros(n));
    let mut eta1 = 0.0;
    for (leaf, p) in leaves.iter().zip(&cert.sub_pieces) {
        combined += p * leaf.coef;
        match leaf_residual(leaf.f, y, p) {
            Ok(r) if r.is_finite() => eta1 += leaf.budget_weight * r.value(),
            _ => return false,
        }
    }
    let scale = 1.0 + cert.sub_witness.amax();
    if (&combined - &cert.sub_witness).amax() > CERTIFICATE_SLACK * scale {
        return false;
    }
    if eta1 > cert.eta1 + CERTIFICATE_SLACK {
        return false;
    }
    let eta2 = match eps_normal_residual_decomposed(set, y, &cert.normal_witness, &cert.normal_pieces) {
        Ok(r) if r.is_finite() => r.value(),
        _ => return false,
    };
    if eta2 > cert.eta2 + CERTIFICATE_SLACK {
        return false;
    }
    let identity = ((y - anchor) / lambda + &cert.sub_witness + &cert.normal_witness).norm();
    identity <= CERTIFICATE_SLACK
}

fn leaves_of(psi: &ConvexFunction) -> Vec<Leaf<'_>> {
    psi.leaves()
        .into_iter()
        .map(|(w, f)| Leaf { coef: w, budget_weight: w, f })
        .collect()
}

/// Solves `p` to certified accuracy `p.eta_budget`.
pub fn solve_prox(p: &ProxSubproblem) -> Result<(Vector, StepCertificate)> {
    solve_prox_capped(p, DEFAULT_INNER_CAP)
}

pub fn solve_prox_capped(p: &ProxSubproblem, cap: usize) -> Result<(Vector, StepCertificate)> {
    check_dim(p.psi.dim(), p.anchor.len())?;
    Inclusion {
        leaves: leaves_of(&p.psi),
        forward: None,
        anchor: &p.anchor,
        lambda: p.lambda,
        set: &p.set,
        budget: p.eta_budget,
        cap,
    }
    .solve()
}

/// Pure re-check of a step certificate: `η¹ + η² ≤ η`, the conjugate and
/// support residuals fit under `η¹` and `η²`, and the vector identity
/// `(y − anchor)/λ + sub + normal = 0` holds, each within `1e−9`.
pub fn verify_certificate(
    psi: &ConvexFunction,
    set: &ConvexSet,
    anchor: &Vector,
    lambda: f64,
    y: &Vector,
    cert: &StepCertificate,
    eta_budget: f64,
) -> bool {
    if psi.dim() != y.len() {
        return false;
    }
    check_certificate(&leaves_of(psi), None, set, anchor, lambda, y, cert, eta_budget)
}

/// `Φ(z) = ψ(z) + ‖z − anchor‖²/(2λ)`.
pub fn prox_objective(psi: &ConvexFunction, anchor: &Vector, lambda: f64, z: &Vector) -> Result<f64> {
    Ok(psi.value(z)? + (z - anchor).norm_squared() / (2.0 * lambda))
}

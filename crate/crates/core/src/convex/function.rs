use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::SymmetricEigen;

use super::{EpsResidual, Matrix, Vector};
use crate::error::{check_dim, Error, Result};

/// Eigenvalues of a quadratic's Hessian may dip this far below zero.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Relative slack used when testing membership in the domain of a conjugate.
pub(crate) const DOMAIN_TOLERANCE: f64 = 1e-12;

/// `a·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub a: Vector,
    pub b: f64,
}

/// `½ xᵀQx + cᵀx + r` with `Q` symmetric positive semidefinite.
///
/// The pseudo-inverse and the projector onto the null space of `Q` are
/// computed once at construction; the conjugate needs both.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    q: Matrix,
    c: Vector,
    r: f64,
    pinv: Matrix,
    null_proj: Matrix,
    max_eig: f64,
    min_eig: f64,
}

/// `w ‖x − p‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm2 {
    pub center: Vector,
    pub weight: f64,
}

/// `maxᵢ (aᵢ·x + bᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxAffine {
    slopes: Vec<Vector>,
    offsets: Vec<f64>,
}

/// Nonnegative combination `Σ wᵢ fᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sum {
    terms: Vec<(f64, ConvexFunction)>,
}

/// Structured convex function with exact value, subgradient and conjugate oracles.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexFunction {
    Affine(Affine),
    Quadratic(Quadratic),
    Norm2(Norm2),
    MaxAffine(MaxAffine),
    Sum(Sum),
}

fn check_finite(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidFunction(format!("{what} has non-finite entries")))
    }
}

impl Quadratic {
    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Largest Hessian eigenvalue, the Lipschitz constant of the gradient.
    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eig
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        &self.q * x + &self.c
    }
}

impl MaxAffine {
    pub fn slopes(&self) -> &[Vector] {
        &self.slopes
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.slopes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slopes.is_empty()
    }

    /// Values of every affine piece at `x`.
    pub fn piece_values(&self, x: &Vector) -> Vec<f64> {
        self.slopes
            .iter()
            .zip(&self.offsets)
            .map(|(a, b)| a.dot(x) + b)
            .collect()
    }

    /// Index of the lowest-index piece attaining the maximum.
    pub fn active_index(&self, x: &Vector) -> usize {
        let vals = self.piece_values(x);
        let mut best = 0;
        for (i, v) in vals.iter().enumerate() {
            if *v > vals[best] {
                best = i;
            }
        }
        best
    }
}

impl Sum {
    pub fn terms(&self) -> &[(f64, ConvexFunction)] {
        &self.terms
    }
}

impl ConvexFunction {
    pub fn affine(a: Vector, b: f64) -> Result<Self> {
        check_finite(&a, "affine slope")?;
        if !b.is_finite() {
            return Err(Error::InvalidFunction("affine offset is not finite".into()));
        }
        Ok(ConvexFunction::Affine(Affine { a, b }))
    }

    /// The zero function on `ℝⁿ`.
    pub fn zero(n: usize) -> Self {
        ConvexFunction::Affine(Affine {
            a: Vector::zeros(n),
            b: 0.0,
        })
    }

    pub fn quadratic(q: Matrix, c: Vector, r: f64) -> Result<Self> {
        let n = c.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::InvalidFunction(format!(
                "quadratic matrix is {}x{}, expected {n}x{n}",
                q.nrows(),
                q.ncols()
            )));
        }
        check_finite(&c, "quadratic linear term")?;
        if !r.is_finite() || q.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidFunction("quadratic has non-finite entries".into()));
        }
        let scale = q.amax().max(1.0);
        if (&q - q.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidFunction("quadratic matrix is not symmetric".into()));
        }
        let sym = (&q + q.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_eig = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        if n > 0 && min_eig < -PSD_TOLERANCE {
            return Err(Error::InvalidFunction(format!(
                "quadratic matrix is not positive semidefinite (eigenvalue {min_eig:e})"
            )));
        }
        let cutoff = PSD_TOLERANCE * max_eig.max(1.0);
        let mut pinv = Matrix::zeros(n, n);
        let mut null_proj = Matrix::zeros(n, n);
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(i);
            let outer = v * v.transpose();
            if lam > cutoff {
                pinv += outer / lam;
            } else {
                null_proj += outer;
            }
        }
        Ok(ConvexFunction::Quadratic(Quadratic {
            q: sym,
            c,
            r,
            pinv,
            null_proj,
            max_eig,
            min_eig: if n == 0 { 0.0 } else { min_eig.max(0.0) },
        }))
    }

    pub fn norm2(center: Vector, weight: f64) -> Result<Self> {
        check_finite(&center, "norm center")?;
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::InvalidFunction("norm weight must be finite and nonnegative".into()));
        }
        Ok(ConvexFunction::Norm2(Norm2 { center, weight }))
    }

    pub fn max_affine(pieces: Vec<(Vector, f64)>) -> Result<Self> {
        let Some(first) = pieces.first() else {
            return Err(Error::InvalidFunction("max-affine needs at least one piece".into()));
        };
        let n = first.0.len();
        for (a, b) in &pieces {
            check_dim(n, a.len())?;
            check_finite(a, "max-affine slope")?;
            if !b.is_finite() {
                return Err(Error::InvalidFunction("max-affine offset is not finite".into()));
            }
        }
        let (slopes, offsets) = pieces.into_iter().unzip();
        Ok(ConvexFunction::MaxAffine(MaxAffine { slopes, offsets }))
    }

    pub fn sum(terms: Vec<(f64, ConvexFunction)>) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(Error::InvalidFunction("sum needs at least one term".into()));
        };
        let n = first.1.dim();
        for (w, f) in &terms {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::InvalidFunction("sum weights must be finite and nonnegative".into()));
            }
            check_dim(n, f.dim())?;
        }
        Ok(ConvexFunction::Sum(Sum { terms }))
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexFunction::Affine(f) => f.a.len(),
            ConvexFunction::Quadratic(f) => f.c.len(),
            ConvexFunction::Norm2(f) => f.center.len(),
            ConvexFunction::MaxAffine(f) => f.slopes[0].len(),
            ConvexFunction::Sum(f) => f.terms[0].1.dim(),
        }
    }

    /// Flattens nested sums into `(weight, piece)` pairs with positive weights.
    /// Per-piece certificates are aligned with this order.
    pub fn leaves(&self) -> Vec<(f64, &ConvexFunction)> {
        let mut out = Vec::new();
        self.collect_leaves(1.0, &mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, weight: f64, out: &mut Vec<(f64, &'a ConvexFunction)>) {
        match self {
            ConvexFunction::Sum(s) => {
                for (w, f) in &s.terms {
                    f.collect_leaves(weight * w, out);
                }
            }
            leaf => {
                if weight > 0.0 {
                    out.push((weight, leaf));
                }
            }
        }
    }

    /// True for the differentiable catalog pieces (affine and quadratic).
    pub fn is_smooth(&self) -> bool {
        match self {
            ConvexFunction::Affine(_) | ConvexFunction::Quadratic(_) => true,
            ConvexFunction::Sum(_) => self.leaves().iter().all(|(_, f)| f.is_smooth()),
            _ => false,
        }
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.value_unchecked(x))
    }

    pub(crate) fn value_unchecked(&self, x: &Vector) -> f64 {
        match self {
            ConvexFunction::Affine(f) => f.a.dot(x) + f.b,
            ConvexFunction::Quadratic(f) => 0.5 * x.dot(&(&f.q * x)) + f.c.dot(x) + f.r,
            ConvexFunction::Norm2(f) => f.weight * (x - &f.center).norm(),
            ConvexFunction::MaxAffine(f) => f
                .piece_values(x)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max),
            ConvexFunction::Sum(s) => s
                .terms
                .iter()
                .map(|(w, f)| if *w == 0.0 { 0.0 } else { w * f.value_unchecked(x) })
                .sum(),
        }
    }

    /// Deterministic exact subgradient: the gradient for smooth pieces, the
    /// lowest-index active slope for max-affine, zero at the center of a norm.
    pub fn subgradient(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        Ok(self.subgradient_unchecked(x))
    }

    pub(crate) fn subgradient_unchecked(&self, x: &Vector) -> Vector {
        match self {
            ConvexFunction::Affine(f) => f.a.clone(),
            ConvexFunction::Quadratic(f) => f.gradient(x),
            ConvexFunction::Norm2(f) => {
                let d = x - &f.center;
                let nrm = d.norm();
                if nrm == 0.0 {
                    Vector::zeros(x.len())
                } else {
                    d * (f.weight / nrm)
                }
            }
            ConvexFunction::MaxAffine(f) => f.slopes[f.active_index(x)].clone(),
            ConvexFunction::Sum(s) => {
                let mut g = Vector::zeros(x.len());
                for (w, f) in &s.terms {
                    if *w > 0.0 {
                        g += f.subgradient_unchecked(x) * *w;
                    }
                }
                g
            }
        }
    }

    /// Fenchel conjugate `f*(v) = sup_x ⟨v,x⟩ − f(x)`; `+∞` outside the domain.
    /// Sums are rejected: certify them piecewise.
    pub fn conjugate(&self, v: &Vector) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        let scale = 1.0 + v.amax();
        match self {
            ConvexFunction::Affine(f) => {
                if (v - &f.a).amax() <= DOMAIN_TOLERANCE * (scale + f.a.amax()) {
                    Ok(-f.b)
                } else {
                    Ok(f64::INFINITY)
                }
            }
            ConvexFunction::Quadratic(f) => {
                let d = v - &f.c;
                let off_range = (&f.null_proj * &d).amax();
                if off_range > DOMAIN_TOLERANCE * (1.0 + d.amax()) * (1.0 + f.max_eig) {
                    return Ok(f64::INFINITY);
                }
                Ok(0.5 * d.dot(&(&f.pinv * &d)) - f.r)
            }
            ConvexFunction::Norm2(f) => {
                if v.norm() <= f.weight * (1.0 + DOMAIN_TOLERANCE) + DOMAIN_TOLERANCE {
                    Ok(v.dot(&f.center))
                } else {
                    Ok(f64::INFINITY)
                }
            }
            ConvexFunction::MaxAffine(f) => max_affine_conjugate(f, v),
            ConvexFunction::Sum(_) => Err(Error::Unsupported(
                "conjugate of a sum; certify through a per-piece decomposition",
            )),
        }
    }

    /// Sum of the Hessian bounds of the smooth leaves, weighted.
    pub fn gradient_lipschitz(&self) -> f64 {
        self.leaves()
            .iter()
            .map(|(w, f)| match f {
                ConvexFunction::Quadratic(q) => w * q.max_eig,
                _ => 0.0,
            })
            .sum()
    }
}

/// `min{−Σθᵢbᵢ : Σθᵢaᵢ = v, θ ∈ Δ}`.
fn max_affine_conjugate(f: &MaxAffine, v: &Vector) -> Result<f64> {
    if f.slopes.len() == 1 {
        let a = &f.slopes[0];
        let scale = 1.0 + v.amax() + a.amax();
        return Ok(if (v - a).amax() <= DOMAIN_TOLERANCE * scale {
            -f.offsets[0]
        } else {
            f64::INFINITY
        });
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = f
        .offsets
        .iter()
        .map(|b| lp.add_var(-b, (0.0, f64::INFINITY)))
        .collect();
    for i in 0..v.len() {
        let expr: Vec<_> = vars
            .iter()
            .zip(&f.slopes)
            .map(|(&var, a)| (var, a[i]))
            .collect();
        lp.add_constraint(expr, ComparisonOp::Eq, v[i]);
    }
    let ones: Vec<_> = vars.iter().map(|&var| (var, 1.0)).collect();
    lp.add_constraint(ones, ComparisonOp::Eq, 1.0);
    match lp.solve() {
        Ok(sol) => Ok(sol.objective()),
        Err(microlp::Error::Infeasible) => Ok(f64::INFINITY),
        Err(e) => Err(Error::LinearProgram(e.to_string())),
    }
}

pub fn eval_fn(f: &ConvexFunction, x: &Vector) -> Result<f64> {
    f.value(x)
}

pub fn subgradient(f: &ConvexFunction, x: &Vector) -> Result<Vector> {
    f.subgradient(x)
}

pub fn conjugate(f: &ConvexFunction, v: &Vector) -> Result<f64> {
    f.conjugate(v)
}

/// Smallest `ε` with `v ∈ ∂_ε f(x)`, via `f(x) + f*(v) − ⟨v,x⟩`.
///
/// Sum variants need `pieces`, a decomposition aligned with
/// [`ConvexFunction::leaves`] such that `v = Σ wᵢ vᵢ`; the result is then
/// `Σ wᵢ·res(fᵢ, x, vᵢ)`, an upper bound consistent with the sum rule.
/// A decomposition that does not add up to `v` yields `+∞`.
pub fn eps_subgrad_residual(
    f: &ConvexFunction,
    x: &Vector,
    v: &Vector,
    pieces: Option<&[Vector]>,
) -> Result<EpsResidual> {
    check_dim(f.dim(), x.len())?;
    check_dim(f.dim(), v.len())?;
    match f {
        ConvexFunction::Sum(_) => {
            let leaves = f.leaves();
            let pieces = pieces.ok_or(Error::Unsupported(
                "sum residual requires a per-piece decomposition",
            ))?;
            if pieces.len() != leaves.len() {
                return Err(Error::InvalidFunction(format!(
                    "decomposition has {} pieces, function has {}",
                    pieces.len(),
                    leaves.len()
                )));
            }
            let mut total = Vector::zeros(v.len());
            for ((w, _), p) in leaves.iter().zip(pieces) {
                check_dim(v.len(), p.len())?;
                total += p * *w;
            }
            if (&total - v).amax() > 1e-9 * (1.0 + v.amax()) {
                return Ok(EpsResidual::INFINITE);
            }
            weighted_residual(&leaves, x, pieces)
        }
        leaf => leaf_residual(leaf, x, v),
    }
}

/// `Σ wᵢ·res(fᵢ, x, vᵢ)` over already-flattened leaves.
pub(crate) fn weighted_residual(
    leaves: &[(f64, &ConvexFunction)],
    x: &Vector,
    pieces: &[Vector],
) -> Result<EpsResidual> {
    let mut acc = 0.0;
    for ((w, f), p) in leaves.iter().zip(pieces) {
        let r = leaf_residual(f, x, p)?;
        if !r.is_finite() {
            return Ok(EpsResidual::INFINITE);
        }
        acc += w * r.value();
    }
    Ok(EpsResidual::new(acc))
}

pub(crate) fn leaf_residual(f: &ConvexFunction, x: &Vector, v: &Vector) -> Result<EpsResidual> {
    let conj = f.conjugate(v)?;
    if conj == f64::INFINITY {
        return Ok(EpsResidual::INFINITE);
    }
    Ok(EpsResidual::new(f.value_unchecked(x) + conj - v.dot(x)))
}

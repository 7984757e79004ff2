//! Monotone operators defining the lower-level variational inequality.

use crate::convex::{ConvexFunction, Matrix, Vector};
use crate::error::{check_dim, Error, Result};
use nalgebra::SymmetricEigen;

const MONOTONE_TOLERANCE: f64 = 1e-10;
const MONOTONE_PLUS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneOperator {
    /// `F(x) = Mx + q`.
    Affine { m: Matrix, q: Vector },
    /// Gradient of a differentiable catalog function.
    Gradient(ConvexFunction),
}

fn symmetric_part(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

impl MonotoneOperator {
    /// Rejects non-square shapes and matrices whose symmetric part has an
    /// eigenvalue below `−1e−10`.
    pub fn affine(m: Matrix, q: Vector) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidOperator("matrix must be square".into()));
        }
        check_dim(m.nrows(), q.len())?;
        if m.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidOperator("non-finite entry".into()));
        }
        let eig = SymmetricEigen::new(symmetric_part(&m)).eigenvalues;
        if eig.iter().any(|e| *e < -MONOTONE_TOLERANCE) {
            return Err(Error::InvalidOperator("operator is not monotone".into()));
        }
        Ok(MonotoneOperator::Affine { m, q })
    }

    /// Accepts affine, quadratic, or non-negative sums of them.
    pub fn gradient(phi: ConvexFunction) -> Result<Self> {
        if !phi.is_smooth() {
            return Err(Error::InvalidOperator(
                "gradient operator needs an affine or quadratic function".into(),
            ));
        }
        Ok(MonotoneOperator::Gradient(phi))
    }

    pub fn dim(&self) -> usize {
        match self {
            MonotoneOperator::Affine { q, .. } => q.len(),
            MonotoneOperator::Gradient(phi) => phi.dim(),
        }
    }

    /// `(M, q)` with `F(x) = Mx + q`.
    pub fn affine_parts(&self) -> (Matrix, Vector) {
        match self {
            MonotoneOperator::Affine { m, q } => (m.clone(), q.clone()),
            MonotoneOperator::Gradient(phi) => {
                let n = phi.dim();
                let mut m = Matrix::zeros(n, n);
                let mut q = Vector::zeros(n);
                for (w, leaf) in phi.leaves() {
                    match leaf {
                        ConvexFunction::Affine(a) => q += &a.a * w,
                        ConvexFunction::Quadratic(quad) => {
                            m += quad.q() * w;
                            q += quad.c() * w;
                        }
                        _ => unreachable!("gradient operators hold smooth functions"),
                    }
                }
                (m, q)
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            MonotoneOperator::Affine { m, .. } => m == &m.transpose(),
            MonotoneOperator::Gradient(_) => true,
        }
    }

    /// Spectral norm of the linear part.
    pub fn lipschitz(&self) -> f64 {
        let (m, _) = self.affine_parts();
        if m.is_empty() {
            return 0.0;
        }
        m.singular_values().max()
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &Vector) -> Vector {
        match self {
            MonotoneOperator::Affine { m, q } => m * x + q,
            MonotoneOperator::Gradient(phi) => phi.subgradient_unchecked(x),
        }
    }
}

pub fn eval_operator(op: &MonotoneOperator, x: &Vector) -> Result<Vector> {
    op.apply(x)
}

/// Monotone plus test: every direction `d` in the null space of the
/// symmetric part must satisfy `‖Md‖ ≤ 1e−9`. Gradients of convex
/// catalog functions always pass.
pub fn check_monotone_plus(op: &MonotoneOperator) -> bool {
    let m = match op {
        MonotoneOperator::Gradient(_) => return true,
        MonotoneOperator::Affine { m, .. } => m,
    };
    let eig = SymmetricEigen::new(symmetric_part(m));
    if eig.eigenvalues.iter().any(|e| *e < -MONOTONE_TOLERANCE) {
        return false;
    }
    let scale = 1.0 + eig.eigenvalues.amax();
    eig.eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, e)| e.abs() <= MONOTONE_TOLERANCE * scale)
        .all(|(j, _)| (m * eig.eigenvectors.column(j)).norm() <= MONOTONE_PLUS_TOLERANCE)
}

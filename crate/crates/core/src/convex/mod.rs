//! Convex-analysis primitives: the function and set catalogs with exact
//! oracles, and the ε-residuals that certify subdifferential and normal-cone
//! inclusions.

mod function;
mod set;

pub use function::{
    conjugate, eps_subgrad_residual, eval_fn, subgradient, Affine, ConvexFunction, MaxAffine,
    Norm2, Quadratic, Sum, PSD_TOLERANCE,
};
pub(crate) use function::leaf_residual;
pub use set::{
    distance, eps_normal_residual, eps_normal_residual_decomposed, project, support, ConvexSet,
    DYKSTRA_MAX_SWEEPS, DYKSTRA_TOLERANCE, MEMBERSHIP_TOLERANCE,
};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

/// Smallest ε for which an ε-inclusion holds; `+∞` when none does.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EpsResidual(f64);

impl EpsResidual {
    pub const ZERO: EpsResidual = EpsResidual(0.0);
    pub const INFINITE: EpsResidual = EpsResidual(f64::INFINITY);

    /// Clamps rounding noise below zero; NaN maps to `+∞`.
    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            Self::INFINITE
        } else {
            EpsResidual(value.max(0.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

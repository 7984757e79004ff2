//! Parameter sequences `(ε_k, λ_k, η_k)` driving the outer iterations.

use crate::error::{Error, Result};

/// Proximal parameter rule: a constant, or a cyclic sequence whose bounds
/// are its smallest and largest entries.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaRule {
    Constant(f64),
    Cyclic(Vec<f64>),
}

/// `ε_k = ε₀/(k+1)^p`, `λ_k` from a [`LambdaRule`], `η_k = η₀/(k+1)^q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub eps0: f64,
    pub p: f64,
    pub lambda: LambdaRule,
    pub eta0: f64,
    pub q: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { eps0: 1.0, p: 1.0, lambda: LambdaRule::Constant(1.0), eta0: 0.1, q: 2.0 }
    }
}

impl Schedule {
    pub fn eps(&self, k: usize) -> f64 {
        self.eps0 / ((k + 1) as f64).powf(self.p)
    }

    pub fn eta(&self, k: usize) -> f64 {
        self.eta0 / ((k + 1) as f64).powf(self.q)
    }

    pub fn lambda(&self, k: usize) -> f64 {
        match &self.lambda {
            LambdaRule::Constant(l) => *l,
            LambdaRule::Cyclic(values) => values[k % values.len()],
        }
    }

    /// `(λ_lo, λ_hi)`; `None` for an empty cyclic rule.
    pub fn lambda_bounds(&self) -> Option<(f64, f64)> {
        match &self.lambda {
            LambdaRule::Constant(l) => Some((*l, *l)),
            LambdaRule::Cyclic(values) if values.is_empty() => None,
            LambdaRule::Cyclic(values) => Some((
                values.iter().cloned().fold(f64::INFINITY, f64::min),
                values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )),
        }
    }

    /// Like [`validate_schedule`], naming the first violated constraint.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSchedule(msg.to_string()));
        if !(self.eps0.is_finite() && self.eps0 > 0.0) {
            return bad("eps0 must be positive");
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad("p must lie in (0, 1] so that the eps sequence has a divergent sum");
        }
        if !(self.eta0.is_finite() && self.eta0 > 0.0) {
            return bad("eta0 must be positive");
        }
        if !(self.q.is_finite() && self.q > 1.0) {
            return bad("q must exceed 1 so that the eta sequence is summable");
        }
        match self.lambda_bounds() {
            Some((lo, hi)) if lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi => Ok(()),
            _ => bad("lambda values must be positive and finite"),
        }
    }
}

pub fn validate_schedule(s: &Schedule) -> bool {
    s.check().is_ok()
}

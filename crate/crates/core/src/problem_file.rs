//! JSON problem files.
//!
//! ```json
//! {
//!   "kind": "sbp",
//!   "dim": 2,
//!   "f": {"type": "quadratic", "q": [[0, 0], [0, 2]], "c": [1, 0]},
//!   "g": {"type": "quadratic", "q": [[2, 0], [0, 0]], "c": [-2, 0], "r": 1},
//!   "set": {"type": "box", "lo": [-2, -2], "hi": [2, 2]},
//!   "x0": [-2, 2],
//!   "reference": [[1, 0]]
//! }
//! ```
//!
//! `smpec` and `penalty` files replace `g` with an `operator`; `penalty`
//! files also need `mu` and accept `inner_tol`, `prox_lambda` and
//! `feasible_point`. Matrices are lists of rows.

use crate::convex::{ConvexFunction, ConvexSet, Matrix, Vector};
use crate::error::Error;
use crate::gap::PenaltyOptions;
use crate::operator::MonotoneOperator;
use crate::sbp::SbpProblem;
use crate::schedule::{LambdaRule, Schedule};
use crate::smpec::SmpecProblem;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Sbp,
    Smpec,
    Penalty,
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Kind::Sbp => "sbp",
            Kind::Smpec => "smpec",
            Kind::Penalty => "penalty",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinePiece {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedTerm {
    pub weight: f64,
    pub function: FunctionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Affine { a: Vec<f64>, #[serde(default)] b: f64 },
    Quadratic { q: Vec<Vec<f64>>, c: Vec<f64>, #[serde(default)] r: f64 },
    Norm2 { center: Vec<f64>, weight: f64 },
    MaxAffine { pieces: Vec<AffinePiece> },
    Sum { terms: Vec<WeightedTerm> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Simplex { scale: f64 },
    Halfspace { a: Vec<f64>, b: f64 },
    Intersection { sets: Vec<SetSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Affine { m: Vec<Vec<f64>>, q: Vec<f64> },
    Gradient { function: FunctionSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub eps0: Option<f64>,
    pub p: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda_values: Option<Vec<f64>>,
    pub eta0: Option<f64>,
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: Kind,
    pub dim: usize,
    pub f: FunctionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<FunctionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSpec>,
    pub set: SetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_eps0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prox_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible_point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProblemError {
    #[error("malformed problem file: {0}")]
    Syntax(String),
    #[error("invalid problem file key `{key}`: {source}")]
    Invalid { key: String, source: Error },
}

fn invalid(key: &str) -> impl Fn(Error) -> ProblemError + '_ {
    move |source| ProblemError::Invalid { key: key.to_string(), source }
}

fn missing(key: &str) -> ProblemError {
    ProblemError::Invalid { key: key.to_string(), source: Error::InvalidProblem("required for this kind".into()) }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Sbp(SbpProblem),
    Smpec(SmpecProblem),
    Penalty { problem: SmpecProblem, mu: Vec<f64>, inner_tol: f64, options: PenaltyOptions },
}

impl Problem {
    pub fn kind(&self) -> Kind {
        match self {
            Problem::Sbp(_) => Kind::Sbp,
            Problem::Smpec(_) => Kind::Smpec,
            Problem::Penalty { .. } => Kind::Penalty,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::Sbp(p) => p.dim(),
            Problem::Smpec(p) | Problem::Penalty { problem: p, .. } => p.dim(),
        }
    }

    pub fn set(&self) -> &ConvexSet {
        match self {
            Problem::Sbp(p) => p.set(),
            Problem::Smpec(p) | Problem::Penalty { problem: p, .. } => p.set(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub problem: Problem,
    pub schedule: Schedule,
    pub max_iter: usize,
    pub reference: Option<Vec<Vector>>,
    pub stop_eps0: Option<f64>,
}

fn vector(v: &[f64], n: usize) -> Result<Vector, Error> {
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: v.len() });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("vector entry"));
    }
    Ok(Vector::from_column_slice(v))
}

fn matrix(rows: &[Vec<f64>], n: usize) -> Result<Matrix, Error> {
    if rows.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rows.len() });
    }
    for r in rows {
        if r.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: r.len() });
        }
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl FunctionSpec {
    pub fn build(&self, n: usize) -> Result<ConvexFunction, Error> {
        match self {
            FunctionSpec::Affine { a, b } => ConvexFunction::affine(vector(a, n)?, *b),
            FunctionSpec::Quadratic { q, c, r } => ConvexFunction::quadratic(matrix(q, n)?, vector(c, n)?, *r),
            FunctionSpec::Norm2 { center, weight } => ConvexFunction::norm2(vector(center, n)?, *weight),
            FunctionSpec::MaxAffine { pieces } => ConvexFunction::max_affine(
                pieces
                    .iter()
                    .map(|p| Ok((vector(&p.a, n)?, p.b)))
                    .collect::<Result<Vec<_>, Error>>()?,
            ),
            FunctionSpec::Sum { terms } => ConvexFunction::sum(
                terms
                    .iter()
                    .map(|t| Ok((t.weight, t.function.build(n)?)))
                    .collect::<Result<Vec<_>, Error>>()?,
            ),
        }
    }
}

impl SetSpec {
    pub fn build(&self, n: usize) -> Result<ConvexSet, Error> {
        match self {
            SetSpec::Box { lo, hi } => ConvexSet::boxed(vector(lo, n)?, vector(hi, n)?),
            SetSpec::Ball { center, radius } => ConvexSet::ball(vector(center, n)?, *radius),
            SetSpec::Simplex { scale } => ConvexSet::simplex(n, *scale),
            SetSpec::Halfspace { a, b } => ConvexSet::halfspace(vector(a, n)?, *b),
            SetSpec::Intersection { sets } => {
                ConvexSet::intersection(sets.iter().map(|s| s.build(n)).collect::<Result<Vec<_>, Error>>()?)
            }
        }
    }
}

impl OperatorSpec {
    pub fn build(&self, n: usize) -> Result<MonotoneOperator, Error> {
        match self {
            OperatorSpec::Affine { m, q } => MonotoneOperator::affine(matrix(m, n)?, vector(q, n)?),
            OperatorSpec::Gradient { function } => MonotoneOperator::gradient(function.build(n)?),
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<Schedule, Error> {
        let d = Schedule::default();
        let lambda = match (&self.lambda, &self.lambda_values) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidSchedule("give either lambda or lambda_values".into()))
            }
            (Some(l), None) => LambdaRule::Constant(*l),
            (None, Some(v)) => LambdaRule::Cyclic(v.clone()),
            (None, None) => d.lambda.clone(),
        };
        let s = Schedule {
            eps0: self.eps0.unwrap_or(d.eps0),
            p: self.p.unwrap_or(d.p),
            lambda,
            eta0: self.eta0.unwrap_or(d.eta0),
            q: self.q.unwrap_or(d.q),
        };
        s.check()?;
        Ok(s)
    }
}

impl ProblemSpec {
    pub fn build(&self) -> Result<ProblemFile, ProblemError> {
        let n = self.dim;
        if n == 0 {
            return Err(invalid("dim")(Error::InvalidProblem("dimension must be positive".into())));
        }
        let f = self.f.build(n).map_err(invalid("f"))?;
        let set = self.set.build(n).map_err(invalid("set"))?;
        let x0 = vector(&self.x0, n).map_err(invalid("x0"))?;
        let schedule = match &self.schedule {
            Some(s) => s.build().map_err(invalid("schedule"))?,
            None => Schedule::default(),
        };
        let reference = match &self.reference {
            Some(pts) => Some(
                pts.iter()
                    .map(|p| vector(p, n))
                    .collect::<Result<Vec<_>, Error>>()
                    .map_err(invalid("reference"))?,
            ),
            None => None,
        };
        if let Some(e) = self.stop_eps0 {
            if !(e.is_finite() && e > 0.0) {
                return Err(invalid("stop_eps0")(Error::InvalidProblem("must be positive".into())));
            }
        }
        let operator = || -> Result<MonotoneOperator, ProblemError> {
            self.operator.as_ref().ok_or_else(|| missing("operator"))?.build(n).map_err(invalid("operator"))
        };
        let problem = match self.kind {
            Kind::Sbp => {
                let g = self.g.as_ref().ok_or_else(|| missing("g"))?.build(n).map_err(invalid("g"))?;
                Problem::Sbp(SbpProblem::new(f, g, set, x0).map_err(invalid("x0"))?)
            }
            Kind::Smpec | Kind::Penalty => {
                let op = operator()?;
                let smpec = SmpecProblem::new(f, op, set, x0).map_err(|e| match e {
                    Error::NotMonotonePlus => invalid("operator")(e),
                    Error::NotInSet { .. } => invalid("x0")(e),
                    other => invalid("f")(other),
                })?;
                if self.kind == Kind::Smpec {
                    Problem::Smpec(smpec)
                } else {
                    if !smpec.set().is_compact() {
                        return Err(invalid("set")(Error::NonCompact));
                    }
                    let mu = self.mu.clone().ok_or_else(|| missing("mu"))?;
                    let feasible_point = match &self.feasible_point {
                        Some(p) => Some(vector(p, n).map_err(invalid("feasible_point"))?),
                        None => None,
                    };
                    let d = PenaltyOptions::default();
                    Problem::Penalty {
                        problem: smpec,
                        mu,
                        inner_tol: self.inner_tol.unwrap_or(1e-6),
                        options: PenaltyOptions {
                            prox_lambda: self.prox_lambda.unwrap_or(d.prox_lambda),
                            feasible_point,
                            reference: reference.clone(),
                            ..d
                        },
                    }
                }
            }
        };
        Ok(ProblemFile {
            problem,
            schedule,
            max_iter: self.max_iter.unwrap_or(5000),
            reference,
            stop_eps0: self.stop_eps0,
        })
    }
}

pub fn parse_problem(text: &str) -> Result<ProblemFile, ProblemError> {
    let spec: ProblemSpec = serde_json::from_str(text).map_err(|e| ProblemError::Syntax(e.to_string()))?;
    spec.build()
}

/// A JSON array of points, each of dimension `n`.
pub fn parse_reference(text: &str, n: usize) -> Result<Vec<Vector>, ProblemError> {
    let pts: Vec<Vec<f64>> = serde_json::from_str(text).map_err(|e| ProblemError::Syntax(e.to_string()))?;
    pts.iter()
        .map(|p| vector(p, n))
        .collect::<Result<Vec<_>, Error>>()
        .map_err(invalid("reference"))
}

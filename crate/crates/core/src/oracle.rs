//! Brute-force grid references for small instances.

use crate::convex::{ConvexFunction, ConvexSet, Vector, MEMBERSHIP_TOLERANCE};
use crate::error::{check_dim, Error, Result};
use crate::operator::MonotoneOperator;

pub const MAX_GRID_POINTS: u128 = 10_000_000;

/// Axis-aligned grid `lo + i·spacing` per coordinate, up to `hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, spacing: f64) -> Result<Self> {
        let g = GridSpec { lo, hi, spacing };
        g.counts()?;
        Ok(g)
    }

    pub fn cube(n: usize, lo: f64, hi: f64, spacing: f64) -> Result<Self> {
        GridSpec::new(vec![lo; n], vec![hi; n], spacing)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn counts(&self) -> Result<Vec<usize>> {
        if self.lo.len() != self.hi.len() || self.lo.is_empty() {
            return Err(Error::InvalidProblem("grid bounds must share a positive dimension".into()));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::InvalidProblem("grid spacing must be positive".into()));
        }
        let mut total: u128 = 1;
        let mut counts = Vec::with_capacity(self.lo.len());
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(Error::InvalidProblem("grid bounds must be finite and ordered".into()));
            }
            let steps = ((h - l) / self.spacing + 1e-9).floor();
            let c = steps as u128 + 1;
            total = total.saturating_mul(c);
            if total > MAX_GRID_POINTS {
                return Err(Error::GridTooLarge { points: total, limit: MAX_GRID_POINTS });
            }
            counts.push(c as usize);
        }
        Ok(counts)
    }

    pub fn len(&self) -> usize {
        self.counts().map(|c| c.iter().product()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All grid points in lexicographic order, last coordinate fastest.
    pub fn points(&self) -> Result<Vec<Vector>> {
        let counts = self.counts()?;
        let total: usize = counts.iter().product();
        let n = counts.len();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            out.push(Vector::from_iterator(
                n,
                idx.iter().zip(&self.lo).map(|(i, l)| l + *i as f64 * self.spacing),
            ));
            for j in (0..n).rev() {
                idx[j] += 1;
                if idx[j] < counts[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
        Ok(out)
    }

    /// Grid points lying in `set` (within the membership tolerance).
    pub fn points_in(&self, set: &ConvexSet) -> Result<Vec<Vector>> {
        check_dim(set.dim(), self.dim())?;
        Ok(self
            .points()?
            .into_iter()
            .filter(|p| set.contains(p, MEMBERSHIP_TOLERANCE))
            .collect())
    }
}

/// Grid points of `set` whose value is within `band` of the grid minimum.
pub fn grid_argmin(f: &ConvexFunction, set: &ConvexSet, g: &GridSpec, band: f64) -> Result<Vec<Vector>> {
    check_dim(f.dim(), g.dim())?;
    let pts = g.points_in(set)?;
    let vals = pts.iter().map(|p| f.value(p)).collect::<Result<Vec<_>>>()?;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(pts
        .into_iter()
        .zip(vals)
        .filter(|(_, v)| *v <= min + band)
        .map(|(p, _)| p)
        .collect())
}

/// Grid points `x` of `set` with `min_y ⟨F(x), y − x⟩ ≥ −tol` over grid `y`.
pub fn grid_sol_vi(op: &MonotoneOperator, set: &ConvexSet, g: &GridSpec, tol: f64) -> Result<Vec<Vector>> {
    check_dim(op.dim(), g.dim())?;
    let pts = g.points_in(set)?;
    let mut out = Vec::new();
    for x in &pts {
        let fx = op.apply(x)?;
        let base = fx.dot(x);
        let worst = pts
            .iter()
            .map(|y| fx.dot(y) - base)
            .fold(f64::INFINITY, f64::min);
        if worst >= -tol {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// `f(y) ≥ f(x) + ⟨v, y − x⟩ − eps` at every grid point `y`.
pub fn raw_eps_check(f: &ConvexFunction, x: &Vector, v: &Vector, eps: f64, g: &GridSpec) -> Result<bool> {
    check_dim(f.dim(), x.len())?;
    check_dim(f.dim(), v.len())?;
    check_dim(f.dim(), g.dim())?;
    let fx = f.value(x)?;
    for y in g.points()? {
        if f.value(&y)? < fx + v.dot(&(&y - x)) - eps {
            return Ok(false);
        }
    }
    Ok(true)
}

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::function::DOMAIN_TOLERANCE;
use super::{EpsResidual, Vector};
use crate::error::{check_dim, Error, Result};

/// Dykstra stops once a sweep moves the iterate by less than this and the
/// iterate is this close to every member set.
pub const DYKSTRA_TOLERANCE: f64 = 1e-10;
pub const DYKSTRA_MAX_SWEEPS: usize = 100_000;

/// Tolerance of the `x̄ ∈ C` precondition on ε-normal residuals.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-9;

/// Closed convex set with projection and support-function oracles.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    Box { lo: Vector, hi: Vector },
    Ball { center: Vector, radius: f64 },
    /// `{x ≥ 0 : Σ xᵢ = scale}` in `ℝ^dim`.
    Simplex { dim: usize, scale: f64 },
    /// `{x : ⟨a, x⟩ ≤ b}`.
    Halfspace { a: Vector, b: f64 },
    /// Members are never intersections themselves; the constructor flattens.
    Intersection(Vec<ConvexSet>),
}

fn finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ConvexSet {
    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if !finite(&lo) || !finite(&hi) {
            return Err(Error::InvalidSet("box bounds must be finite".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::InvalidSet("box requires lo <= hi".into()));
        }
        Ok(ConvexSet::Box { lo, hi })
    }

    /// `[lo, hi]ⁿ`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(Vector::from_element(n, lo), Vector::from_element(n, hi))
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !finite(&center) || !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidSet("ball needs a finite center and positive radius".into()));
        }
        Ok(ConvexSet::Ball { center, radius })
    }

    pub fn simplex(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 || !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidSet("simplex needs dim >= 1 and positive scale".into()));
        }
        Ok(ConvexSet::Simplex { dim, scale })
    }

    pub fn halfspace(a: Vector, b: f64) -> Result<Self> {
        if !finite(&a) || !b.is_finite() || a.norm() == 0.0 {
            return Err(Error::InvalidSet("halfspace needs a finite nonzero normal".into()));
        }
        Ok(ConvexSet::Halfspace { a, b })
    }

    pub fn intersection(sets: Vec<ConvexSet>) -> Result<Self> {
        let mut flat = Vec::new();
        for s in sets {
            match s {
                ConvexSet::Intersection(inner) => flat.extend(inner),
                leaf => flat.push(leaf),
            }
        }
        let Some(first) = flat.first() else {
            return Err(Error::InvalidSet("intersection needs at least one set".into()));
        };
        let n = first.dim();
        for s in &flat {
            check_dim(n, s.dim())?;
        }
        if flat.len() == 1 {
            return Ok(flat.pop().unwrap());
        }
        Ok(ConvexSet::Intersection(flat))
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Simplex { dim, .. } => *dim,
            ConvexSet::Halfspace { a, .. } => a.len(),
            ConvexSet::Intersection(sets) => sets[0].dim(),
        }
    }

    /// Member sets of an intersection, or the set itself.
    pub fn leaves(&self) -> &[ConvexSet] {
        match self {
            ConvexSet::Intersection(sets) => sets,
            leaf => std::slice::from_ref(leaf),
        }
    }

    pub fn is_compact(&self) -> bool {
        match self {
            ConvexSet::Halfspace { .. } => false,
            ConvexSet::Intersection(sets) => sets.iter().any(|s| s.is_compact()),
            _ => true,
        }
    }

    /// Upper bound on the diameter, `None` when not compact.
    pub fn diameter(&self) -> Option<f64> {
        match self {
            ConvexSet::Box { lo, hi } => Some((hi - lo).norm()),
            ConvexSet::Ball { radius, .. } => Some(2.0 * radius),
            ConvexSet::Simplex { dim, scale } => {
                Some(if *dim > 1 { scale * std::f64::consts::SQRT_2 } else { 0.0 })
            }
            ConvexSet::Halfspace { .. } => None,
            ConvexSet::Intersection(sets) => sets
                .iter()
                .filter_map(|s| s.diameter())
                .reduce(f64::min),
        }
    }

    pub fn project(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        match self {
            ConvexSet::Intersection(sets) => dykstra(sets, x).map(|(y, _)| y),
            leaf => Ok(leaf.project_leaf(x)),
        }
    }

    /// Projection together with a decomposition `x − P_C(x) = Σⱼ pⱼ` aligned
    /// with [`ConvexSet::leaves`] (Dykstra increments for intersections).
    pub fn project_with_parts(&self, x: &Vector) -> Result<(Vector, Vec<Vector>)> {
        check_dim(self.dim(), x.len())?;
        match self {
            ConvexSet::Intersection(sets) => dykstra(sets, x),
            leaf => {
                let y = leaf.project_leaf(x);
                let p = x - &y;
                Ok((y, vec![p]))
            }
        }
    }

    fn project_leaf(&self, x: &Vector) -> Vector {
        match self {
            ConvexSet::Box { lo, hi } => {
                Vector::from_iterator(x.len(), x.iter().zip(lo.iter().zip(hi.iter())).map(|(v, (l, h))| v.clamp(*l, *h)))
            }
            ConvexSet::Ball { center, radius } => {
                let d = x - center;
                let nrm = d.norm();
                if nrm <= *radius {
                    x.clone()
                } else {
                    center + d * (radius / nrm)
                }
            }
            ConvexSet::Simplex { scale, .. } => project_simplex(x, *scale),
            ConvexSet::Halfspace { a, b } => {
                let s = a.dot(x) - b;
                if s <= 0.0 {
                    x.clone()
                } else {
                    x - a * (s / a.norm_squared())
                }
            }
            ConvexSet::Intersection(_) => unreachable!("intersections are handled by dykstra"),
        }
    }

    pub fn distance(&self, x: &Vector) -> Result<f64> {
        Ok((x - self.project(x)?).norm())
    }

    /// Membership within `tol` of every member set.
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.dim()
            && self
                .leaves()
                .iter()
                .all(|s| (x - s.project_leaf(x)).norm() <= tol)
    }

    /// `σ_C(v) = sup_{x∈C} ⟨v,x⟩`, possibly `+∞` for a halfspace.
    pub fn support(&self, v: &Vector) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        match self {
            ConvexSet::Box { lo, hi } => Ok(v
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .map(|(vi, (l, h))| (vi * l).max(vi * h))
                .sum()),
            ConvexSet::Ball { center, radius } => Ok(v.dot(center) + radius * v.norm()),
            ConvexSet::Simplex { scale, .. } => Ok(scale * v.max()),
            ConvexSet::Halfspace { a, b } => {
                let t = v.dot(a) / a.norm_squared();
                let off = (v - a * t).norm();
                let slack = DOMAIN_TOLERANCE * (1.0 + v.norm());
                if off <= slack && t >= -slack {
                    Ok(t.max(0.0) * b)
                } else {
                    Ok(f64::INFINITY)
                }
            }
            ConvexSet::Intersection(_) => {
                Err(Error::Unsupported("exact support function of an intersection"))
            }
        }
    }

    /// A maximizer of `⟨v, x⟩` over the set.
    pub fn linear_max(&self, v: &Vector) -> Result<Vector> {
        check_dim(self.dim(), v.len())?;
        match self {
            ConvexSet::Box { lo, hi } => Ok(Vector::from_iterator(
                v.len(),
                v.iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .map(|(vi, (l, h))| if *vi > 0.0 { *h } else { *l }),
            )),
            ConvexSet::Ball { center, radius } => {
                let nrm = v.norm();
                if nrm == 0.0 {
                    Ok(center.clone())
                } else {
                    Ok(center + v * (radius / nrm))
                }
            }
            ConvexSet::Simplex { dim, scale } => {
                let mut best = 0;
                for i in 1..*dim {
                    if v[i] > v[best] {
                        best = i;
                    }
                }
                let mut x = Vector::zeros(*dim);
                x[best] = *scale;
                Ok(x)
            }
            ConvexSet::Halfspace { .. } => Err(Error::NonCompact),
            ConvexSet::Intersection(sets) => polyhedral_linear_max(sets, v),
        }
    }
}

fn project_simplex(x: &Vector, scale: f64) -> Vector {
    let mut u: Vec<f64> = x.iter().cloned().collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - scale) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    x.map(|v| (v - theta).max(0.0))
}

fn dykstra(sets: &[ConvexSet], x: &Vector) -> Result<(Vector, Vec<Vector>)> {
    let mut y = x.clone();
    let mut parts = vec![Vector::zeros(x.len()); sets.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        // The iterate can stall for whole sweeps while the increments still
        // move, so both must settle.
        let start = y.clone();
        let mut change: f64 = 0.0;
        for (s, p) in sets.iter().zip(parts.iter_mut()) {
            let z = &y + &*p;
            let next = s.project_leaf(&z);
            let part = z - &next;
            change = change.max((&part - &*p).norm());
            *p = part;
            y = next;
        }
        let change = change.max((&y - &start).norm());
        let infeas = sets
            .iter()
            .map(|s| (&y - s.project_leaf(&y)).norm())
            .fold(0.0, f64::max);
        residual = change.max(infeas);
        if residual <= DYKSTRA_TOLERANCE {
            return Ok((y, parts));
        }
    }
    Err(Error::DykstraNonConvergence { residual })
}

fn polyhedral_linear_max(sets: &[ConvexSet], v: &Vector) -> Result<Vector> {
    let n = v.len();
    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    for s in sets {
        match s {
            ConvexSet::Box { lo: l, hi: h } => {
                for i in 0..n {
                    lo[i] = lo[i].max(l[i]);
                    hi[i] = hi[i].min(h[i]);
                }
            }
            ConvexSet::Simplex { .. } => {
                for l in lo.iter_mut() {
                    *l = l.max(0.0);
                }
            }
            ConvexSet::Ball { .. } => {
                return Err(Error::Unsupported("linear oracle over an intersection with a ball"))
            }
            _ => {}
        }
    }
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return Err(Error::InvalidSet("empty intersection".into()));
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..n).map(|i| lp.add_var(v[i], (lo[i], hi[i]))).collect();
    for s in sets {
        match s {
            ConvexSet::Simplex { scale, .. } => {
                let e: Vec<_> = vars.iter().map(|&x| (x, 1.0)).collect();
                lp.add_constraint(e, ComparisonOp::Eq, *scale);
            }
            ConvexSet::Halfspace { a, b } => {
                let e: Vec<_> = vars.iter().zip(a.iter()).map(|(&x, ai)| (x, *ai)).collect();
                lp.add_constraint(e, ComparisonOp::Le, *b);
            }
            _ => {}
        }
    }
    match lp.solve() {
        Ok(sol) => Ok(Vector::from_iterator(n, vars.iter().map(|&x| sol[x]))),
        Err(microlp::Error::Unbounded) => Err(Error::NonCompact),
        Err(microlp::Error::Infeasible) => Err(Error::InvalidSet("empty intersection".into())),
        Err(e) => Err(Error::LinearProgram(e.to_string())),
    }
}

pub fn project(c: &ConvexSet, x: &Vector) -> Result<Vector> {
    c.project(x)
}

pub fn support(c: &ConvexSet, v: &Vector) -> Result<f64> {
    c.support(v)
}

pub fn distance(c: &ConvexSet, x: &Vector) -> Result<f64> {
    c.distance(x)
}

/// Smallest `ε` with `v ∈ N_C^ε(x̄)`, namely `σ_C(v) − ⟨v, x̄⟩` clamped at zero.
pub fn eps_normal_residual(c: &ConvexSet, xbar: &Vector, v: &Vector) -> Result<EpsResidual> {
    check_dim(c.dim(), xbar.len())?;
    check_dim(c.dim(), v.len())?;
    if !c.contains(xbar, MEMBERSHIP_TOLERANCE) {
        return Err(Error::NotInSet { distance: c.distance(xbar)? });
    }
    leaf_normal_residual(c, xbar, v)
}

fn leaf_normal_residual(c: &ConvexSet, xbar: &Vector, v: &Vector) -> Result<EpsResidual> {
    let s = c.support(v)?;
    if s == f64::INFINITY {
        return Ok(EpsResidual::INFINITE);
    }
    Ok(EpsResidual::new(s - v.dot(xbar)))
}

/// Residual of a normal vector given as a decomposition `v = Σⱼ vⱼ` over the
/// member sets; `Σⱼ res(Cⱼ, x̄, vⱼ)` bounds the residual over the intersection.
/// For a single set the decomposition is just `[v]`.
pub fn eps_normal_residual_decomposed(
    c: &ConvexSet,
    xbar: &Vector,
    v: &Vector,
    pieces: &[Vector],
) -> Result<EpsResidual> {
    check_dim(c.dim(), xbar.len())?;
    check_dim(c.dim(), v.len())?;
    let leaves = c.leaves();
    if leaves.len() == 1 && pieces.is_empty() {
        return eps_normal_residual(c, xbar, v);
    }
    if pieces.len() != leaves.len() {
        return Err(Error::InvalidSet(format!(
            "decomposition has {} pieces, set has {} members",
            pieces.len(),
            leaves.len()
        )));
    }
    if !c.contains(xbar, MEMBERSHIP_TOLERANCE) {
        return Err(Error::NotInSet { distance: c.distance(xbar)? });
    }
    let mut total = Vector::zeros(v.len());
    let mut acc = 0.0;
    for (s, p) in leaves.iter().zip(pieces) {
        check_dim(v.len(), p.len())?;
        total += p;
        let r = leaf_normal_residual(s, xbar, p)?;
        if !r.is_finite() {
            return Ok(EpsResidual::INFINITE);
        }
        acc += r.value();
    }
    if (&total - v).amax() > 1e-9 * (1.0 + v.amax()) {
        return Ok(EpsResidual::INFINITE);
    }
    Ok(EpsResidual::new(acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn projections() {
        let b = ConvexSet::cube(2, 0.0, 1.0).unwrap();
        assert_eq!(b.project(&dvector![2.0, 0.5]).unwrap(), dvector![1.0, 0.5]);
        let ball = ConvexSet::ball(Vector::zeros(2), 1.0).unwrap();
        let p = ball.project(&dvector![3.0, 4.0]).unwrap();
        assert!((p - dvector![0.6, 0.8]).amax() < 1e-15);
        let s = ConvexSet::simplex(2, 1.0).unwrap();
        assert!((s.project(&dvector![0.8, 0.8]).unwrap() - dvector![0.5, 0.5]).amax() < 1e-15);
        let h = ConvexSet::halfspace(dvector![1.0, 1.0], 1.0).unwrap();
        assert!((h.project(&dvector![1.0, 1.0]).unwrap() - dvector![0.5, 0.5]).amax() < 1e-15);
    }

    #[test]
    fn simplex_projection_matches_grid() {
        // Nearest point of {x ≥ 0, x1 + x2 = 1} to (0.8, 0.8) on a 0.001 grid.
        let x = dvector![0.8, 0.8];
        let best = (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .map(|t| dvector![t, 1.0 - t])
            .min_by(|a, b| (a - &x).norm().partial_cmp(&(b - &x).norm()).unwrap())
            .unwrap();
        let p = ConvexSet::simplex(2, 1.0).unwrap().project(&x).unwrap();
        assert!((p - best).amax() <= 1e-3);
    }

    #[test]
    fn supports() {
        let b = ConvexSet::cube(2, -1.0, 1.0).unwrap();
        assert_eq!(b.support(&dvector![1.0, -2.0]).unwrap(), 3.0);
        let ball = ConvexSet::ball(Vector::zeros(2), 2.0).unwrap();
        assert_eq!(ball.support(&dvector![3.0, 4.0]).unwrap(), 10.0);
        let s = ConvexSet::simplex(2, 1.0).unwrap();
        assert_eq!(s.support(&dvector![0.2, 0.9]).unwrap(), 0.9);
        let h = ConvexSet::halfspace(dvector![1.0, 0.0], 2.0).unwrap();
        assert_eq!(h.support(&dvector![3.0, 0.0]).unwrap(), 6.0);
        assert_eq!(h.support(&dvector![0.0, 1.0]).unwrap(), f64::INFINITY);
        assert_eq!(h.support(&dvector![-1.0, 0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn normal_residuals() {
        let b = ConvexSet::cube(1, 0.0, 1.0).unwrap();
        assert_eq!(eps_normal_residual(&b, &dvector![1.0], &dvector![2.0]).unwrap().value(), 0.0);
        assert_eq!(eps_normal_residual(&b, &dvector![0.0], &dvector![1.0]).unwrap().value(), 1.0);
        let ball = ConvexSet::ball(Vector::zeros(2), 1.0).unwrap();
        assert_eq!(eps_normal_residual(&ball, &dvector![1.0, 0.0], &dvector![1.0, 0.0]).unwrap().value(), 0.0);
        assert!(matches!(
            eps_normal_residual(&b, &dvector![2.0], &dvector![1.0]),
            Err(Error::NotInSet { .. })
        ));
    }

    #[test]
    fn normal_residual_box_matches_grid_sup() {
        // sup over x in [0,1] of 1·(x − 0) on a grid is 1.
        let sup = (0..=100).map(|i| i as f64 / 100.0).fold(f64::NEG_INFINITY, f64::max);
        let b = ConvexSet::cube(1, 0.0, 1.0).unwrap();
        assert_eq!(eps_normal_residual(&b, &dvector![0.0], &dvector![1.0]).unwrap().value(), sup);
    }

    #[test]
    fn distances() {
        let b = ConvexSet::cube(2, 0.0, 1.0).unwrap();
        assert_eq!(b.distance(&dvector![2.0, 0.5]).unwrap(), 1.0);
        let ball = ConvexSet::ball(Vector::zeros(2), 1.0).unwrap();
        assert!((ball.distance(&dvector![3.0, 4.0]).unwrap() - 4.0).abs() < 1e-15);
        assert_eq!(b.distance(&dvector![0.3, 0.7]).unwrap(), 0.0);
    }

    #[test]
    fn dykstra_intersection() {
        let c = ConvexSet::intersection(vec![
            ConvexSet::cube(2, 0.0, 1.0).unwrap(),
            ConvexSet::halfspace(dvector![1.0, 1.0], 1.0).unwrap(),
        ])
        .unwrap();
        let x = dvector![1.0, 1.0];
        let (y, parts) = c.project_with_parts(&x).unwrap();
        assert!((&y - dvector![0.5, 0.5]).amax() < 1e-9);
        let total = parts.iter().fold(Vector::zeros(2), |acc, p| acc + p);
        assert!((total - (&x - &y)).amax() < 1e-12);
        let r = eps_normal_residual_decomposed(&c, &y, &(&x - &y), &parts).unwrap();
        assert!(r.value() < 1e-9);
        assert!(c.support(&x).is_err());
    }

    #[test]
    fn dykstra_does_not_stop_on_a_stalled_sweep() {
        let c = ConvexSet::intersection(vec![
            ConvexSet::boxed(dvector![-0.1, -1.25], dvector![0.1, 0.1]).unwrap(),
            ConvexSet::ball(dvector![0.0, 0.0], 1.0).unwrap(),
        ])
        .unwrap();
        let x = dvector![-1.32, -2.63];
        let (y, parts) = c.project_with_parts(&x).unwrap();
        let expected = dvector![-0.1, -(1.0f64 - 0.01).sqrt()];
        assert!((&y - expected).amax() < 1e-8, "{y}");
        assert!(eps_normal_residual_decomposed(&c, &y, &(&x - &y), &parts).unwrap().value() < 1e-8);
    }

    #[test]
    fn dykstra_reports_empty_intersection() {
        let c = ConvexSet::intersection(vec![
            ConvexSet::cube(1, 0.0, 1.0).unwrap(),
            ConvexSet::cube(1, 2.0, 3.0).unwrap(),
        ])
        .unwrap();
        assert!(matches!(c.project(&dvector![5.0]), Err(Error::DykstraNonConvergence { .. })));
    }

    #[test]
    fn linear_maximizers() {
        let b = ConvexSet::cube(2, -1.0, 1.0).unwrap();
        assert_eq!(b.linear_max(&dvector![1.0, -2.0]).unwrap(), dvector![1.0, -1.0]);
        let c = ConvexSet::intersection(vec![
            ConvexSet::cube(2, 0.0, 1.0).unwrap(),
            ConvexSet::halfspace(dvector![1.0, 1.0], 1.0).unwrap(),
        ])
        .unwrap();
        let x = c.linear_max(&dvector![2.0, 1.0]).unwrap();
        assert!((x - dvector![1.0, 0.0]).amax() < 1e-9);
        let h = ConvexSet::halfspace(dvector![1.0], 1.0).unwrap();
        assert_eq!(h.linear_max(&dvector![1.0]), Err(Error::NonCompact));
    }

    #[test]
    fn rejects_invalid() {
        assert!(ConvexSet::boxed(dvector![1.0], dvector![0.0]).is_err());
        assert!(ConvexSet::ball(dvector![0.0], 0.0).is_err());
        assert!(ConvexSet::simplex(2, -1.0).is_err());
        assert!(ConvexSet::halfspace(dvector![0.0], 1.0).is_err());
        assert!(ConvexSet::intersection(vec![]).is_err());
    }
}

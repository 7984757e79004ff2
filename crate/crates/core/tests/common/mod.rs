#![allow(dead_code)]

use bilevel_prox::convex::Matrix;
use bilevel_prox::operator::MonotoneOperator;
use bilevel_prox::sbp::SbpProblem;
use bilevel_prox::smpec::SmpecProblem;
use bilevel_prox::{ConvexFunction, ConvexSet, Vector};
use nalgebra::{dmatrix, dvector};

/// `f = x₂² + x₁`.
pub fn desk_a_f() -> ConvexFunction {
    ConvexFunction::quadratic(dmatrix![0.0, 0.0; 0.0, 2.0], dvector![1.0, 0.0], 0.0).unwrap()
}

/// `g = (x₁ − 1)²`.
pub fn desk_a_g() -> ConvexFunction {
    ConvexFunction::quadratic(dmatrix![2.0, 0.0; 0.0, 0.0], dvector![-2.0, 0.0], 1.0).unwrap()
}

pub fn desk_a_set() -> ConvexSet {
    ConvexSet::cube(2, -2.0, 2.0).unwrap()
}

pub fn desk_a() -> SbpProblem {
    SbpProblem::new(desk_a_f(), desk_a_g(), desk_a_set(), dvector![-2.0, 2.0]).unwrap()
}

pub fn desk_b_operator() -> MonotoneOperator {
    MonotoneOperator::affine(dmatrix![1.0, -1.0; -1.0, 1.0], Vector::zeros(2)).unwrap()
}

pub fn desk_b_set() -> ConvexSet {
    ConvexSet::cube(2, 0.0, 1.0).unwrap()
}

/// `f = x₁`.
pub fn desk_b_f() -> ConvexFunction {
    ConvexFunction::affine(dvector![1.0, 0.0], 0.0).unwrap()
}

pub fn desk_b() -> SmpecProblem {
    SmpecProblem::new(desk_b_f(), desk_b_operator(), desk_b_set(), dvector![1.0, 1.0]).unwrap()
}

pub fn zero_operator(n: usize) -> MonotoneOperator {
    MonotoneOperator::affine(Matrix::zeros(n, n), Vector::zeros(n)).unwrap()
}

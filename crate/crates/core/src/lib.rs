//! Inexact proximal penalization for simple bilevel programs and simple
//! MPECs, with certified steps.

pub mod cli;
pub mod convex;
pub mod driver;
pub mod error;
pub mod gap;
pub mod inner;
pub mod operator;
pub mod oracle;
pub mod problem_file;
pub mod run;
pub mod sbp;
pub mod schedule;
pub mod smpec;
pub mod trace;

pub use convex::{ConvexFunction, ConvexSet, EpsResidual, Matrix, Vector};
pub use error::{Error, Result};

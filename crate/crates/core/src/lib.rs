//! Numerical laboratory for rotationally symmetric F-harmonic maps between
//! model manifolds.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod field;
pub mod fit;
pub mod profiles;
pub mod solver;
pub mod shooting;
pub mod theorems;
pub mod variational;

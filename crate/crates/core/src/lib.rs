//! Penalization solver for reflected BSDEs in weakly star-shaped domains.

// negated comparisons keep NaN parameters on the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod error;
pub mod geometry;
pub mod lattice;
pub mod solver;
pub mod validation;

pub use error::{RbsdeError, Result};

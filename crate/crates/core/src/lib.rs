//! Numerical core of lcslab: query oracles, polynomial approximation,
//! samplers, hard instance families and the Krylov reduction simulation.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cheb;
pub mod error;
pub mod gauss;
pub mod hard;
pub mod kakeya;
pub mod linalg;
pub mod lowdim;
pub mod oracle;
pub mod quad;
pub mod reduction;
pub mod rng;
pub mod stats;

pub use error::{LabError, Result};

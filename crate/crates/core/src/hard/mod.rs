//! Random-matrix hard instances: Wishart facts, the moment-matching LP, and
//! the block-Krylov hard pair.

pub mod lp;
pub mod pair;
pub mod wishart;

//! Finite-dimensional laboratory for operators between sums of classical
//! sequence spaces: seeded near-orthonormal column families, masked diagonal
//! operators, factorization algorithms, separating functionals, and
//! sparse-vector probes, all behind a reproducible CLI.

pub mod constructions;
pub mod error;
pub mod factorization;
pub mod fss;
pub mod simplex;
pub mod opnorm;
pub mod rip;
pub mod rng;
pub mod run;
pub mod separation;
pub mod spaces;

pub use error::{Error, Result};

//! Christoffel-consistent Coriolis factorizations for rigid-body mechanisms.
//!
//! The crate covers spatial vector algebra, mechanism models with
//! constraint-embedded clusters, recursive dynamics (RNEA, CRBA and the
//! torsion-free Coriolis matrix), generalized Christoffel symbols,
//! adaptive-control regressors, closed-loop simulation and the brute-force
//! oracles used to check all of the above.

// `!(x > 0.0)` guards reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod bench;
pub mod christoffel;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod oracles;
pub mod simkit;
pub mod spatial;
pub mod tensor;

pub use error::{Error, Result};

//! Simulation and analysis of a transmon quantum Otto engine driven by a
//! quantum-circuit refrigerator (QCR) acting as a tunable thermal bath.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod lindblad;
pub mod nis;
pub mod params;
pub mod quadrature;
pub mod ramsey;
pub mod readout;
pub mod rng;
pub mod thermo;
pub mod transmon;
pub mod units;

pub use error::{Error, ErrorClass, Result};

//! Numerical model of a bright-soliton matter-wave interferometer in a
//! magnetic waveguide: Feshbach tuning, the variational Gaussian energy
//! surface, 1D Gross-Pitaevskii propagation, Bragg Mach-Zehnder sequences
//! and the fits used to reduce their output.

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod error;
pub mod feshbach;
pub mod fit;
pub mod gpe;
pub mod interferometer;
pub mod io;
pub mod scenario;
pub mod variational;

pub use error::{Error, Result};

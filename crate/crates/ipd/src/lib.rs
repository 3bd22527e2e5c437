//! File formats, a parallel Monte Carlo driver and the `ipd` command-line
//! frontend for [`ipd_core`].

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod cli;
pub mod io;
pub mod mc;
pub mod render;
pub mod scenario;

pub use ipd_core;

//! Estimators, variance estimation, diagnostics and simulation harnesses for
//! inference when part of the outcomes are replaced by predictions from a
//! pre-trained model.
//!
//! The crate is `no_std` with `alloc`; file formats, the command-line
//! frontend and the parallel Monte Carlo driver live in the `ipd` crate.

#![cfg_attr(not(test), no_std)]
// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod group_rates;
pub mod linalg;
pub mod seed;
pub mod simulation;
pub mod stats;
pub mod targets;

pub use data::{CategoricalDataset, ColumnNames, Dataset, LabeledRow, SplitSummary, UnlabeledRow};
pub use error::{IpdError, Result};
pub use estimators::{EstimateResult, EstimatorConfig, Method, Tuning, WeightingFamily, WeightingSpec};
pub use targets::{SolverControls, TargetKind, TargetSpec};

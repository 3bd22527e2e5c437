//! Synthetic data, prediction rules and the Monte Carlo coverage harness.
//!
//! Every random draw comes from a ChaCha8 stream keyed by a SplitMix64 hash
//! of a master seed and a counter (see [`crate::seed`]), so replications can
//! run in any order or on any number of threads.

pub mod categorical;
pub mod dgp;
pub mod monte_carlo;
pub mod rule;
pub mod trees;

pub use categorical::{generate_categorical_dgp, CategoricalDgpConfig};
pub use dgp::{draw_linear, generate_linear_dgp, LinearDgpConfig, SimulatedSample};
pub use monte_carlo::{
    aggregate, analysis_dataset, mcar_labels, replicate, run_monte_carlo, EstimatorOutcome, EstimatorSummary, McConfig,
    McReport, McSetup, ReplicationRecord,
};
pub use rule::{analytic_naive_slope, fit_rule, AnalyticNaive, FrozenRule, PredictionRule, RuleKind};
pub use trees::{BaggedTrees, RegressionTree};

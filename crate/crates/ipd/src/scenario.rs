//! JSON scenario files for `mc-bench`: one or more prediction-rule
//! settings crossed with one or more targets.

use std::io::Write;
use std::sync::OnceLock;

use ipd_core::simulation::{LinearDgpConfig, McConfig, McReport, PredictionRule, RuleKind};
use ipd_core::{IpdError, Method, TargetKind, TargetSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::mc::{self, SUMMARY_COLUMNS};

pub const SCENARIO_SCHEMA: &str = include_str!("../schemas/scenario.schema.json");

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario violates schema at '{path}': {message}")]
    Schema { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] IpdError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDgp {
    pub p: usize,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

fn first_feature() -> Vec<usize> {
    vec![1]
}

fn yes() -> bool {
    true
}

fn default_n_train() -> usize {
    1000
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTarget {
    pub kind: String,
    /// One-based feature indices.
    #[serde(default = "first_feature")]
    pub covariates: Vec<usize>,
    #[serde(default = "yes")]
    pub intercept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub name: String,
    pub rule: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub replications: usize,
    pub master_seed: u64,
    pub n: usize,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    pub rho: f64,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    #[serde(default = "yes")]
    pub clamp: bool,
    pub dgp: ScenarioDgp,
    pub estimators: Vec<Method>,
    pub targets: Vec<ScenarioTarget>,
    pub settings: Vec<Setting>,
}

fn validator() -> &'static jsonschema::Validator {
    static V: OnceLock<jsonschema::Validator> = OnceLock::new();
    V.get_or_init(|| {
        let schema: Value = serde_json::from_str(SCENARIO_SCHEMA).expect("shipped schema is valid JSON");
        jsonschema::validator_for(&schema).expect("shipped schema compiles")
    })
}

/// Checks `text` against the shipped schema, reporting the first violation.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let value: Value = serde_json::from_str(text)?;
    if let Some(e) = validator().iter_errors(&value).next() {
        let path = e.instance_path.to_string();
        return Err(ScenarioError::Schema {
            path: if path.is_empty() { "/".into() } else { path },
            message: e.to_string(),
        });
    }
    Ok(serde_json::from_value(value)?)
}

/// One (setting, target) cell of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub setting: String,
    pub target: String,
    pub config: McConfig,
}

impl ScenarioTarget {
    fn label(&self) -> String {
        match self.kind.as_str() {
            "mean" => "mean".to_string(),
            k => {
                let covs: Vec<String> = self.covariates.iter().map(|j| format!("z{j}")).collect();
                format!("{k}({})", covs.join("+"))
            }
        }
    }
}

impl Scenario {
    /// Expands the scenario. Every study shares the master seed, so all
    /// settings and targets see the same analysis samples.
    pub fn studies(&self) -> Result<Vec<Study>, IpdError> {
        let beta = self.dgp.beta.clone().unwrap_or_else(|| vec![1.0; self.dgp.p]);
        let dgp = LinearDgpConfig { n: self.n, p: self.dgp.p, noise_sd: self.dgp.noise_sd, true_beta: beta, seed: 0 };
        let mut out = Vec::new();
        for s in &self.settings {
            let mut rule: PredictionRule = s.rule.parse()?;
            if let (RuleKind::BaggedTrees { seed, .. }, Some(v)) = (&mut rule.kind, s.seed) {
                *seed = Some(v);
            }
            for t in &self.targets {
                let kind: TargetKind = t.kind.parse()?;
                if t.covariates.contains(&0) {
                    return Err(IpdError::InvalidConfig("covariate indices are 1-based".into()));
                }
                let covariates: Vec<usize> = t.covariates.iter().map(|j| j - 1).collect();
                let target = TargetSpec::new(kind, covariates.len(), t.intercept)?;
                let config = McConfig {
                    replications: self.replications,
                    rho: self.rho,
                    estimators: self.estimators.clone(),
                    target,
                    covariates,
                    dgp: dgp.clone(),
                    rule: rule.clone(),
                    master_seed: self.master_seed,
                    n_train: self.n_train,
                    ci_level: self.ci_level,
                    clamp: self.clamp,
                };
                config.validate()?;
                out.push(Study { setting: s.name.clone(), target: t.label(), config });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchStudy {
    pub setting: String,
    pub target: String,
    pub report: McReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub replications: usize,
    pub master_seed: u64,
    pub studies: Vec<BenchStudy>,
}

pub fn run_bench(scenario: &Scenario, threads: usize) -> Result<BenchReport, IpdError> {
    let studies = scenario
        .studies()?
        .into_iter()
        .map(|s| Ok(BenchStudy { setting: s.setting, target: s.target, report: mc::run_parallel(&s.config, threads)? }))
        .collect::<Result<Vec<_>, IpdError>>()?;
    Ok(BenchReport {
        scenario: scenario.name.clone(),
        replications: scenario.replications,
        master_seed: scenario.master_seed,
        studies,
    })
}

pub fn write_bench_csv<W: Write>(out: W, b: &BenchReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["scenario", "setting", "target", "rule"];
    header.extend(SUMMARY_COLUMNS);
    w.write_record(&header)?;
    for s in &b.studies {
        for row in &s.report.rows {
            let mut rec = vec![b.scenario.clone(), s.setting.clone(), s.target.clone(), s.report.rule.clone()];
            rec.extend(mc::summary_cells(row, s.report.mcar_imbalanced));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn bench_text(b: &BenchReport) -> String {
    let mut out = format!("scenario {}  R = {}  seed {}\n", b.scenario, b.replications, b.master_seed);
    for s in &b.studies {
        out.push_str(&format!("\nsetting {}  target {}\n", s.setting, s.target));
        out.push_str(&mc::report_text(&s.report));
    }
    out
}

/// Bias and coverage of one cell, for quick lookups in tests and tables.
pub fn cell<'a>(b: &'a BenchReport, setting: &str, target_prefix: &str) -> Option<&'a McReport> {
    b.studies.iter().find(|s| s.setting == setting && s.target.starts_with(target_prefix)).map(|s| &s.report)
}

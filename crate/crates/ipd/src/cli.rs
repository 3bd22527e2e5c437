//! Command-line frontend.
//!
//! Exit codes: 0 success, 2 numerical failure (an error JSON document is
//! printed on stdout), 64 usage error, 65 bad input or configuration,
//! 74 output could not be written.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ipd_core::data::SplitSummary;
use ipd_core::diagnostics::{
    calibration_summary, classification_metrics, estimate_leakage, side_by_side, CalibrationReport, ClassMetrics,
    LeakageReport, SideBySideReport,
};
use ipd_core::estimators::{estimate, EstimateResult, EstimatorConfig, Method, Tuning, WeightingFamily};
use ipd_core::group_rates::{estimate_group_rates, GroupRateResult};
use ipd_core::simulation::{
    analysis_dataset, draw_linear, fit_rule, generate_categorical_dgp, mcar_labels, CategoricalDgpConfig,
    LinearDgpConfig, PredictionRule,
};
use ipd_core::{seed, IpdError, TargetKind, TargetSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::io::{self, CategoricalSchema, CategoricalTable, IoError, Schema};
use crate::render::{self, f4, f4_opt};
use crate::scenario::{self, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_CONFIG: i32 = 65;
pub const EXIT_OUTPUT: i32 = 74;

const RULE_HELP: &str = "Prediction rule. Grammar: 'attenuated:<c>:<set>' freezes f(z) = c * sum of the \
features in <set>; 'trees:<n>:<depth>:<set>' fits <n> bagged regression trees of depth <depth> on \
the features in <set>. <set> is a comma list of 1-based indices and lo-hi ranges, e.g. 1-10 or 2-3,7.";

#[derive(Debug, Parser)]
#[command(name = "ipd", version, about = "Inference with predicted outcomes", args_override_self = true)]
pub struct Cli {
    /// JSON object whose keys stand in for long flags (explicit flags win).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one estimator to a CSV dataset.
    Fit(FitArgs),
    /// Write a simulated dataset.
    Simulate(SimulateArgs),
    /// Calibration and true-vs-predicted outcome comparison.
    Diagnose(DiagnoseArgs),
    /// Monte Carlo coverage study from a scenario file.
    McBench(BenchArgs),
    /// Per-group outcome rates from predicted group labels.
    GroupRates(GroupRateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV; an empty or NA outcome marks an unlabeled row.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Outcome column.
    #[arg(long, value_name = "COL")]
    pub outcome: String,
    /// Prediction column.
    #[arg(long = "pred", value_name = "COL")]
    pub prediction: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',', value_name = "COLS")]
    pub covars: Vec<String>,
    /// Comma-separated prediction-feature columns.
    #[arg(long, value_delimiter = ',', value_name = "COLS")]
    pub features: Vec<String>,
    /// Column holding the hidden outcome of unlabeled rows (simulations).
    #[arg(long, value_name = "COL")]
    pub truth: Option<String>,
}

impl DataArgs {
    fn schema(&self) -> Schema {
        Schema {
            outcome: self.outcome.clone(),
            prediction: self.prediction.clone(),
            covariates: self.covars.clone(),
            features: self.features.clone(),
            truth: self.truth.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// mean, ols or logistic.
    #[arg(long, default_value = "mean", value_parser = parse_target)]
    pub target: TargetKind,
    /// Drop the intercept from regression targets.
    #[arg(long)]
    pub no_intercept: bool,
}

impl TargetArgs {
    fn spec(&self, p_x: usize) -> Result<TargetSpec, IpdError> {
        TargetSpec::new(self.target, p_x, !self.no_intercept)
    }
}

fn parse_target(s: &str) -> Result<TargetKind, String> {
    s.parse().map_err(|e: IpdError| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: IpdError| e.to_string())
}

fn parse_rule(s: &str) -> Result<PredictionRule, String> {
    s.parse().map_err(|e: IpdError| e.to_string())
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file (stdout when absent).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub target: TargetArgs,
    /// naive, classical, oracle, ppi, ppi++, pspa or unified.
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    /// Fixed PPI++ weight (tuned when absent); for unified, M = lambda I.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fixed PSPA weights, one per parameter; for unified, M = diag(omega).
    #[arg(long, value_delimiter = ',')]
    pub omega: Option<Vec<f64>>,
    /// Do not clamp tuned weights to [0, 1].
    #[arg(long)]
    pub no_clamp: bool,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DgpKind {
    Linear,
    Categorical,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "linear")]
    pub dgp: DgpKind,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Labeled fraction; exactly round(rho * n) rows keep their outcome.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Feature count (linear).
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    /// Coefficients, one per feature (default all ones).
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    #[arg(long, help = RULE_HELP, value_parser = parse_rule)]
    pub rule: Option<PredictionRule>,
    /// Size of the independent sample the rule is trained on.
    #[arg(long, default_value_t = 1000)]
    pub n_train: usize,
    /// Group names (categorical).
    #[arg(long, value_delimiter = ',')]
    pub categories: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub priors: Vec<f64>,
    /// Outcome rate of each group.
    #[arg(long, value_delimiter = ',')]
    pub rates: Vec<f64>,
    /// Confusion rows separated by ';', entries by ','.
    #[arg(long)]
    pub confusion: Option<String>,
    /// Uniform confusion with this accuracy when --confusion is absent.
    #[arg(long, default_value_t = 0.85)]
    pub accuracy: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Regression target for the side-by-side comparison (ols when
    /// covariates are given, else mean).
    #[arg(long, value_parser = parse_target)]
    pub target: Option<TargetKind>,
    #[arg(long)]
    pub no_intercept: bool,
    /// Column labelling subgroups for per-group calibration.
    #[arg(long, value_name = "COL")]
    pub groups: Option<String>,
    /// Feature column whose leakage into the prediction is reported.
    #[arg(long, value_name = "COL")]
    pub leakage: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_name = "PATH")]
    pub scenario: PathBuf,
    /// Override the scenario's replication count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the scenario's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core). Output does not depend on it.
    #[arg(long, env = "IPD_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GroupRateArgs {
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Group column; empty or NA where the group is unobserved.
    #[arg(long, value_name = "COL")]
    pub group: String,
    /// Predicted group column; every row needs one.
    #[arg(long, value_name = "COL")]
    pub group_hat: String,
    /// Binary outcome column (0/1).
    #[arg(long, value_name = "COL")]
    pub outcome: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub categories: Vec<String>,
    /// Per-category score columns, in category order (for AUC).
    #[arg(long, value_delimiter = ',')]
    pub scores: Vec<String>,
    /// Fully observed group column, when available, for error columns.
    #[arg(long, value_name = "COL")]
    pub true_group: Option<String>,
    #[arg(long, value_parser = parse_method, default_value = "ppi")]
    pub method: Method,
    #[arg(long)]
    pub no_clamp: bool,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numeric(IpdError),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Output(_) => EXIT_OUTPUT,
        }
    }
}

fn error_kind(e: &IpdError) -> &'static str {
    match e {
        IpdError::DimensionMismatch { .. } => "dimension_mismatch",
        IpdError::Validation(_) => "validation",
        IpdError::InsufficientData { .. } => "insufficient_data",
        IpdError::Rank { .. } => "rank",
        IpdError::NonConvergence { .. } => "non_convergence",
        IpdError::Degenerate(_) => "degenerate",
        IpdError::Unsupported(_) => "unsupported",
        IpdError::InvalidConfig(_) => "invalid_config",
        IpdError::Division(_) => "division",
        IpdError::Unavailable(_) => "unavailable",
        IpdError::Harness(_) => "harness",
    }
}

impl From<IpdError> for CliError {
    fn from(e: IpdError) -> Self {
        match e {
            IpdError::Rank { .. }
            | IpdError::NonConvergence { .. }
            | IpdError::Degenerate(_)
            | IpdError::Division(_)
            | IpdError::InsufficientData { .. }
            | IpdError::Harness(_) => CliError::Numeric(e),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Data(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Invalid(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Machine-readable body printed for numerical failures.
pub fn error_json(e: &IpdError) -> Value {
    let mut v = json!({ "error": { "kind": error_kind(e), "message": e.to_string() } });
    if let IpdError::NonConvergence { iterations, last_iterate } = e {
        v["error"]["iterations"] = json!(iterations);
        v["error"]["last_iterate"] = json!(last_iterate);
    }
    v
}

/// Turns a `--config` JSON object into flag tokens.
fn config_tokens(path: &Path) -> Result<(Option<String>, Vec<OsString>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
    };
    let mut command = None;
    let mut out = Vec::new();
    for (key, v) in map {
        if key == "command" {
            command = v.as_str().map(str::to_string);
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &Value| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(CliError::Config(format!("config key '{key}': unsupported value {v}"))),
        };
        match &v {
            Value::Bool(true) => out.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
                out.push(flag.into());
                out.push(parts.join(",").into());
            }
            other => {
                out.push(flag.into());
                out.push(scalar(other)?.into());
            }
        }
    }
    Ok((command, out))
}

/// Splices `--config` contents in front of the explicit flags so that the
/// explicit ones override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut rest = Vec::new();
    let mut config = None;
    let mut it = args.into_iter();
    let prog = it.next().unwrap_or_else(|| "ipd".into());
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            config = Some(PathBuf::from(it.next().ok_or_else(|| CliError::Usage("--config needs a path".into()))?));
        } else if let Some(p) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        let mut all = vec![prog];
        all.extend(rest);
        return Ok(all);
    };
    let (command, tokens) = config_tokens(&path)?;
    let sub_at = rest.iter().position(|a| !a.to_string_lossy().starts_with('-'));
    let mut all = vec![prog];
    match (sub_at, command) {
        (Some(i), _) => {
            all.extend(rest[..=i].iter().cloned());
            all.extend(tokens);
            all.extend(rest[i + 1..].iter().cloned());
        }
        (None, Some(c)) => {
            all.push(c.into());
            all.extend(tokens);
            all.extend(rest);
        }
        (None, None) => return Err(CliError::Usage("no subcommand given".into())),
    }
    Ok(all)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::Output(format!("{}: {e}", p.display()))),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bytes).and_then(|_| so.flush()).map_err(|e| CliError::Output(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Output(e.to_string()))?;
    Ok(buf)
}

#[derive(Debug, Serialize)]
pub struct FitOutput {
    pub method: String,
    pub target: String,
    pub coefficient_names: Vec<String>,
    pub split: SplitSummary,
    pub lambda: Option<f64>,
    pub omega: Option<Vec<f64>>,
    #[serde(flatten)]
    pub result: EstimateResult,
}

fn coefficient_names(t: &TargetSpec, covars: &[String]) -> Vec<String> {
    match t.kind {
        TargetKind::Mean => vec!["mean".into()],
        _ => {
            let mut v = Vec::new();
            if t.intercept {
                v.push("(intercept)".into());
            }
            v.extend(covars.iter().cloned());
            v
        }
    }
}

fn fit_cmd(a: &FitArgs) -> Result<(), CliError> {
    let d = io::load_csv_path(&a.data.data, &a.data.schema())?;
    let t = a.target.spec(d.p_x())?;
    let mut cfg = EstimatorConfig::new(a.method).with_clamp(!a.no_clamp).with_ci_level(a.ci_level);
    if let Some(l) = a.lambda {
        cfg = cfg.with_weighting(WeightingFamily::ScaledIdentity { lambda: Some(l) });
    }
    if let Some(w) = &a.omega {
        cfg = cfg.with_weighting(WeightingFamily::Diagonal { omega: Some(w.clone()) });
    }
    let r = estimate(&d, &t, &cfg)?;
    let names = coefficient_names(&t, &a.data.covars);
    let (lambda, omega) = match &r.tuning {
        Some(Tuning::Lambda(l)) => (Some(*l), None),
        Some(Tuning::Omega(w)) => (None, Some(w.clone())),
        None => (None, None),
    };
    let bytes = match a.format {
        Format::Json => to_json(&FitOutput {
            method: a.method.name().into(),
            target: t.kind.to_string(),
            coefficient_names: names,
            split: d.split_summary(),
            lambda,
            omega,
            result: r,
        }),
        Format::Csv => csv_bytes(|buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["coefficient", "estimate", "std_error", "ci_lower", "ci_upper"])?;
            for (j, n) in names.iter().enumerate() {
                w.write_record([
                    n.clone(),
                    format!("{}", r.theta_hat[j]),
                    format!("{}", r.std_errors[j]),
                    format!("{}", r.ci_lower[j]),
                    format!("{}", r.ci_upper[j]),
                ])?;
            }
            w.flush()?;
            Ok(())
        })?,
        Format::Text => {
            let rows: Vec<Vec<String>> = names
                .iter()
                .enumerate()
                .map(|(j, n)| {
                    vec![n.clone(), f4(r.theta_hat[j]), f4(r.std_errors[j]), f4(r.ci_lower[j]), f4(r.ci_upper[j])]
                })
                .collect();
            let mut s =
                format!("{} estimate of {} target  n_l = {}  n_u = {}\n", a.method, t.kind, r.n_labeled, r.n_unlabeled);
            if let Some(l) = lambda {
                s.push_str(&format!("lambda = {}\n", f4(l)));
            }
            if let Some(w) = &omega {
                s.push_str(&format!("omega = {}\n", w.iter().map(|v| f4(*v)).collect::<Vec<_>>().join(", ")));
            }
            let (lo, hi) = (format!("{:.0}% lower", 100.0 * r.ci_level), format!("{:.0}% upper", 100.0 * r.ci_level));
            s.push_str(&render::table(&["coefficient", "estimate", "std. error", &lo, &hi], &rows));
            for n in &r.notices {
                s.push_str(&format!("note: {n}\n"));
            }
            s.into_bytes()
        }
    };
    emit(a.output.out.as_deref(), &bytes)
}

fn simulate_cmd(a: &SimulateArgs) -> Result<(), CliError> {
    if !(a.rho > 0.0 && a.rho <= 1.0) {
        return Err(CliError::Config(format!("rho {} outside (0, 1]", a.rho)));
    }
    let n_l = ((a.rho * a.n as f64).round() as usize).max(1);
    let mut rng = seed::rng_from_seed(seed::split(a.seed, 0));
    match a.dgp {
        DgpKind::Linear => {
            let rule = a.rule.clone().ok_or_else(|| CliError::Usage("--rule is required for the linear dgp".into()))?;
            let cfg = LinearDgpConfig {
                n: a.n,
                p: a.p,
                noise_sd: a.noise_sd,
                true_beta: a.beta.clone().unwrap_or_else(|| vec![1.0; a.p]),
                seed: a.seed,
            };
            cfg.validate()?;
            rule.validate(a.p)?;
            let mut train_rng = seed::rng_from_seed(seed::split_stream(a.seed, seed::STREAM_TRAINING, 0));
            let train = draw_linear(&cfg, a.n_train, &mut train_rng);
            let frozen = fit_rule(&train, &rule, seed::split_stream(a.seed, seed::STREAM_TRAINING, 1))?;
            let sample = draw_linear(&cfg, a.n, &mut rng);
            let labels = mcar_labels(a.n, n_l, &mut rng);
            let features: Vec<usize> = (0..a.p).collect();
            let d = analysis_dataset(&sample, &labels, &frozen, &features)?;
            let names: Vec<String> = (1..=a.p).map(|j| format!("z{j}")).collect();
            let schema = Schema {
                outcome: "y".into(),
                prediction: "y_hat".into(),
                covariates: names,
                features: vec![],
                truth: Some("y_true".into()),
            };
            let mut buf = Vec::new();
            io::save_csv(&mut buf, &d, &schema)?;
            emit(a.output.out.as_deref(), &buf)
        }
        DgpKind::Categorical => {
            let k = a.categories.len();
            let confusion = match &a.confusion {
                Some(s) => s
                    .split(';')
                    .map(|row| row.split(',').map(|v| v.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::Usage(format!("--confusion: {e}")))?,
                None if k >= 2 => CategoricalDgpConfig::uniform_confusion(k, a.accuracy),
                None => vec![],
            };
            let cfg = CategoricalDgpConfig {
                categories: a.categories.clone(),
                priors: a.priors.clone(),
                rates: a.rates.clone(),
                confusion,
                n: a.n,
                seed: seed::split_stream(a.seed, seed::STREAM_REPLICATION, 1),
            };
            let full = generate_categorical_dgp(&cfg)?;
            let truth: Vec<usize> = full.group().iter().map(|g| g.expect("simulated groups are complete")).collect();
            let table =
                CategoricalTable { data: full.masked(&mcar_labels(a.n, n_l, &mut rng))?, true_group: Some(truth) };
            let schema = CategoricalSchema {
                group: "group".into(),
                group_hat: "group_hat".into(),
                outcome: "outcome".into(),
                categories: a.categories.clone(),
                scores: vec![],
                true_group: Some("group_true".into()),
            };
            let mut buf = Vec::new();
            io::save_categorical_csv(&mut buf, &table, &schema)?;
            emit(a.output.out.as_deref(), &buf)
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DiagnoseOutput {
    pub split: SplitSummary,
    pub calibration: CalibrationReport,
    pub side_by_side: SideBySideReport,
    pub leakage_feature: Option<String>,
    pub leakage: Option<LeakageReport>,
}

fn labeled_strings(path: &Path, outcome: &str, column: &str) -> Result<Vec<String>, CliError> {
    let mut rdr =
        csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| CliError::Config(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| CliError::Config(e.to_string()))?.clone();
    let find =
        |c: &str| headers.iter().position(|h| h == c).ok_or_else(|| CliError::Config(format!("missing column '{c}'")));
    let (y, g) = (find(outcome)?, find(column)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Config(e.to_string()))?;
        let cell = rec.get(y).unwrap_or("");
        if !(cell.is_empty() || cell == "NA") {
            out.push(rec.get(g).unwrap_or("").to_string());
        }
    }
    Ok(out)
}

fn diagnose_cmd(a: &DiagnoseArgs) -> Result<(), CliError> {
    let mut schema = a.data.schema();
    if let Some(f) = &a.leakage {
        if !schema.features.contains(f) {
            schema.features.push(f.clone());
        }
    }
    let d = io::load_csv_path(&a.data.data, &schema)?;
    let kind = a.target.unwrap_or(if d.p_x() > 0 { TargetKind::LinearRegression } else { TargetKind::Mean });
    let t = TargetSpec::new(kind, d.p_x(), !a.no_intercept)?;
    let groups = a.groups.as_deref().map(|g| labeled_strings(&a.data.data, &a.data.outcome, g)).transpose()?;
    let calibration = calibration_summary(&d, groups.as_deref())?;
    let sbs = side_by_side(&d, &t)?;
    let leakage = match &a.leakage {
        Some(f) => Some(estimate_leakage(&d, schema.features.iter().position(|c| c == f).expect("added above"))?),
        None => None,
    };
    let out = DiagnoseOutput {
        split: d.split_summary(),
        calibration,
        side_by_side: sbs,
        leakage_feature: a.leakage.clone(),
        leakage,
    };
    let bytes = match a.format {
        Format::Json => to_json(&out),
        Format::Csv => csv_bytes(|buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["coefficient", "theta_true_outcome", "theta_predicted_outcome", "delta", "sign_change"])?;
            let names = coefficient_names(&t, &a.data.covars);
            for (j, n) in names.iter().enumerate() {
                let s = &out.side_by_side;
                w.write_record([
                    n.clone(),
                    format!("{}", s.theta_true_outcome[j]),
                    format!("{}", s.theta_predicted_outcome[j]),
                    format!("{}", s.deltas[j]),
                    format!("{:?}", s.sign_changes[j]),
                ])?;
            }
            w.flush()?;
            Ok(())
        })?,
        Format::Text => diagnose_text(&out, &coefficient_names(&t, &a.data.covars)).into_bytes(),
    };
    emit(a.output.out.as_deref(), &bytes)
}

fn diagnose_text(o: &DiagnoseOutput, names: &[String]) -> String {
    let c = &o.calibration.overall;
    let mut s = format!(
        "n = {}  n_l = {}  n_u = {}  rho = {}\n\ncalibration (labeled rows)\n",
        o.split.n,
        o.split.n_l,
        o.split.n_u,
        f4(o.split.rho)
    );
    let mut rows = vec![vec![
        "overall".to_string(),
        c.n.to_string(),
        f4(c.mean_error),
        f4(c.mse),
        f4_opt(c.correlation),
        f4_opt(c.calib_intercept),
        f4_opt(c.calib_slope),
    ]];
    for g in &o.calibration.subgroups {
        let st = g.stats.as_ref();
        rows.push(vec![
            format!("{}{}", g.label, if g.flagged_small { " (small)" } else { "" }),
            g.n.to_string(),
            f4_opt(st.map(|v| v.mean_error)),
            f4_opt(st.map(|v| v.mse)),
            f4_opt(st.and_then(|v| v.correlation)),
            f4_opt(st.and_then(|v| v.calib_intercept)),
            f4_opt(st.and_then(|v| v.calib_slope)),
        ]);
    }
    s.push_str(&render::table(&["group", "n", "mean err", "mse", "corr", "calib a", "calib b"], &rows));
    let b = &o.side_by_side;
    s.push_str("\ntrue vs predicted outcome (labeled rows)\n");
    let rows: Vec<Vec<String>> = names
        .iter()
        .enumerate()
        .map(|(j, n)| {
            vec![
                n.clone(),
                f4(b.theta_true_outcome[j]),
                f4(b.se_true_outcome[j]),
                f4(b.theta_predicted_outcome[j]),
                f4(b.se_predicted_outcome[j]),
                f4(b.deltas[j]),
                format!("{:?}", b.sign_changes[j]),
            ]
        })
        .collect();
    s.push_str(&render::table(&["coefficient", "true y", "se", "pred y", "se", "delta", "sign"], &rows));
    if b.structural_distortion {
        s.push_str("structural distortion: a coefficient changes sign or significance\n");
    }
    if let (Some(l), Some(name)) = (&o.leakage, &o.leakage_feature) {
        s.push_str(&format!(
            "\nleakage of {name}: direct {}  marginal {}  leakage {}\n",
            f4(l.direct_slope),
            f4(l.marginal_slope),
            f4(l.leakage)
        ));
    }
    for n in &o.calibration.notes {
        s.push_str(&format!("note: {n}\n"));
    }
    s
}

fn bench_cmd(a: &BenchArgs) -> Result<(), CliError> {
    let text =
        fs::read_to_string(&a.scenario).map_err(|e| CliError::Config(format!("{}: {e}", a.scenario.display())))?;
    let mut sc = scenario::parse_scenario(&text)?;
    if let Some(r) = a.reps {
        sc.replications = r;
    }
    if let Some(s) = a.seed {
        sc.master_seed = s;
    }
    let report = scenario::run_bench(&sc, a.threads)?;
    let bytes = match a.format {
        Format::Json => to_json(&report),
        Format::Csv => csv_bytes(|buf| scenario::write_bench_csv(buf, &report))?,
        Format::Text => scenario::bench_text(&report).into_bytes(),
    };
    emit(a.output.out.as_deref(), &bytes)
}

#[derive(Debug, Serialize)]
pub struct GroupRatesOutput {
    pub naive: GroupRateResult,
    pub corrected: GroupRateResult,
    /// Empirical rates under the fully observed group column, when given.
    pub true_rates: Option<Vec<Option<f64>>>,
    pub metrics: Vec<ClassMetrics>,
}

/// Per-group outcome rates under known group labels.
pub fn empirical_rates(groups: &[usize], outcome: &[bool], k: usize) -> Vec<Option<f64>> {
    (0..k)
        .map(|g| {
            let rows: Vec<bool> = groups.iter().zip(outcome).filter(|(h, _)| **h == g).map(|(_, &o)| o).collect();
            (!rows.is_empty()).then(|| rows.iter().filter(|&&o| o).count() as f64 / rows.len() as f64)
        })
        .collect()
}

fn group_rates_cmd(a: &GroupRateArgs) -> Result<(), CliError> {
    let schema = CategoricalSchema {
        group: a.group.clone(),
        group_hat: a.group_hat.clone(),
        outcome: a.outcome.clone(),
        categories: a.categories.clone(),
        scores: a.scores.clone(),
        true_group: a.true_group.clone(),
    };
    let table = io::load_categorical_csv_path(&a.data, &schema)?;
    let cd = &table.data;
    let cfg = |m: Method| EstimatorConfig::new(m).with_clamp(!a.no_clamp).with_ci_level(a.ci_level);
    let out = GroupRatesOutput {
        naive: estimate_group_rates(cd, &cfg(Method::Naive))?,
        corrected: estimate_group_rates(cd, &cfg(a.method))?,
        true_rates: table.true_group.as_ref().map(|t| empirical_rates(t, cd.outcome(), cd.categories().len())),
        metrics: classification_metrics(cd)?,
    };
    let bytes = match a.format {
        Format::Json => to_json(&out),
        Format::Csv => csv_bytes(|buf| {
            let mut w = csv::Writer::from_writer(buf);
            let (headers, rows) = group_rate_rows(&out, |v| v.map(|x| format!("{x}")).unwrap_or_default());
            w.write_record(&headers)?;
            for r in rows {
                w.write_record(&r)?;
            }
            w.flush()?;
            Ok(())
        })?,
        Format::Text => {
            let (headers, rows) = group_rate_rows(&out, f4_opt);
            let h: Vec<&str> = headers.iter().map(String::as_str).collect();
            let mut s = format!("naive vs {} group rates\n", out.corrected.method);
            s.push_str(&render::table(&h, &rows));
            s.into_bytes()
        }
    };
    emit(a.output.out.as_deref(), &bytes)
}

/// Table layout: group, (true,) naive, corrected, (errors and gain,) SE,
/// accuracy, AUC.
fn group_rate_rows(o: &GroupRatesOutput, cell: impl Fn(Option<f64>) -> String) -> (Vec<String>, Vec<Vec<String>>) {
    let m = &o.corrected.method;
    let mut headers = vec!["group".to_string()];
    if o.true_rates.is_some() {
        headers.push("true".into());
    }
    headers.extend(["naive".to_string(), m.clone()]);
    if o.true_rates.is_some() {
        headers.extend(["naive_error".to_string(), format!("{m}_error"), "gain".to_string()]);
    }
    headers.extend([format!("{m}_se"), "accuracy".to_string(), "auc".to_string()]);
    let rows = o
        .corrected
        .groups
        .iter()
        .enumerate()
        .map(|(g, gr)| {
            let naive = o.naive.groups[g].rate;
            let mut r = vec![gr.category.clone()];
            if let Some(t) = &o.true_rates {
                r.push(cell(t[g]));
            }
            r.push(cell(naive));
            r.push(cell(gr.rate));
            if let Some(t) = &o.true_rates {
                let ne = naive.zip(t[g]).map(|(a, b)| a - b);
                let ie = gr.rate.zip(t[g]).map(|(a, b)| a - b);
                r.push(cell(ne));
                r.push(cell(ie));
                r.push(cell(ne.zip(ie).map(|(a, b)| a.abs() - b.abs())));
            }
            r.push(cell(gr.std_error));
            let metric = o.metrics.iter().find(|c| c.category == gr.category);
            r.push(cell(metric.map(|c| c.accuracy)));
            r.push(cell(metric.and_then(|c| c.auc)));
            r
        })
        .collect();
    (headers, rows)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(a) => fit_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Diagnose(a) => diagnose_cmd(a),
        Command::McBench(a) => bench_cmd(a),
        Command::GroupRates(a) => group_rates_cmd(a),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let expanded = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("ipd: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(expanded) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Numeric(e)) => {
            println!("{}", error_json(&e));
            eprintln!("ipd: {e}");
            EXIT_NUMERIC
        }
        Err(e) => {
            eprintln!("ipd: {e}");
            e.exit_code()
        }
    }
}

//! CSV ingestion and export.
//!
//! Row numbers in errors count data rows from 1 (the header is row 0).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ipd_core::data::{CategoricalDataset, ColumnNames, Dataset, LabeledRow, UnlabeledRow};
use ipd_core::IpdError;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("row {row}, column '{column}': cannot parse '{value}'")]
    Parse { row: usize, column: String, value: String },
    #[error(transparent)]
    Data(#[from] IpdError),
}

/// Column roles for a continuous-outcome dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub outcome: String,
    pub prediction: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub features: Vec<String>,
    /// Hidden outcomes of unlabeled rows (simulation exports only).
    #[serde(default)]
    pub truth: Option<String>,
}

impl Schema {
    pub fn new(outcome: &str, prediction: &str, covariates: &[&str]) -> Self {
        Schema {
            outcome: outcome.into(),
            prediction: prediction.into(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            ..Schema::default()
        }
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, IoError> {
    headers.iter().position(|h| h == name).ok_or_else(|| IoError::MissingColumn(name.to_string()))
}

fn number(rec: &csv::StringRecord, col: usize, row: usize, name: &str) -> Result<f64, IoError> {
    let cell = rec.get(col).unwrap_or("");
    cell.parse().map_err(|_| IoError::Parse { row, column: name.to_string(), value: cell.to_string() })
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<File, IoError> {
    File::create(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

/// Reads a dataset. An empty or `NA` outcome marks a row unlabeled; row
/// order is kept within each subset.
pub fn load_csv<R: Read>(input: R, schema: &Schema) -> Result<Dataset, IoError> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let y_col = column(&headers, &schema.outcome)?;
    let f_col = column(&headers, &schema.prediction)?;
    let x_cols = schema.covariates.iter().map(|c| column(&headers, c)).collect::<Result<Vec<_>, _>>()?;
    let z_cols = schema.features.iter().map(|c| column(&headers, c)).collect::<Result<Vec<_>, _>>()?;
    let t_col = schema.truth.as_deref().map(|c| column(&headers, c)).transpose()?;

    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    let mut truth = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let y_hat = number(&rec, f_col, row, &schema.prediction)?;
        let x = x_cols
            .iter()
            .zip(&schema.covariates)
            .map(|(&c, n)| number(&rec, c, row, n))
            .collect::<Result<Vec<_>, _>>()?;
        let z = z_cols
            .iter()
            .zip(&schema.features)
            .map(|(&c, n)| number(&rec, c, row, n))
            .collect::<Result<Vec<_>, _>>()?;
        if is_missing(rec.get(y_col).unwrap_or("")) {
            if let (Some(c), Some(name)) = (t_col, &schema.truth) {
                truth.push(number(&rec, c, row, name)?);
            }
            unlabeled.push(UnlabeledRow { y_hat, x, z });
        } else {
            let y = number(&rec, y_col, row, &schema.outcome)?;
            labeled.push(LabeledRow { y, y_hat, x, z });
        }
    }
    let covs: Vec<&str> = schema.covariates.iter().map(String::as_str).collect();
    let feats: Vec<&str> = schema.features.iter().map(String::as_str).collect();
    let d = Dataset::new(labeled, unlabeled, ColumnNames::new(&schema.outcome, &schema.prediction, &covs, &feats))?;
    Ok(if t_col.is_some() { d.with_unlabeled_truth(truth)? } else { d })
}

pub fn load_csv_path(path: &Path, schema: &Schema) -> Result<Dataset, IoError> {
    load_csv(open(path)?, schema)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Writes labeled rows then unlabeled rows, with an empty outcome cell for
/// the latter. Values use the shortest representation that parses back to
/// the same number.
pub fn save_csv<W: Write>(out: W, d: &Dataset, schema: &Schema) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![schema.outcome.clone(), schema.prediction.clone()];
    header.extend(schema.covariates.iter().cloned());
    header.extend(schema.features.iter().cloned());
    let truth = d.unlabeled_truth().filter(|_| schema.truth.is_some());
    if let Some(name) = schema.truth.as_ref().filter(|_| truth.is_some()) {
        header.push(name.clone());
    }
    w.write_record(&header)?;
    for r in d.labeled() {
        let mut rec = vec![fmt(r.y), fmt(r.y_hat)];
        rec.extend(r.x.iter().chain(&r.z).map(|v| fmt(*v)));
        if truth.is_some() {
            rec.push(fmt(r.y));
        }
        w.write_record(&rec)?;
    }
    for (k, r) in d.unlabeled().iter().enumerate() {
        let mut rec = vec![String::new(), fmt(r.y_hat)];
        rec.extend(r.x.iter().chain(&r.z).map(|v| fmt(*v)));
        if let Some(t) = truth {
            rec.push(fmt(t[k]));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| IoError::File { path: "<output>".into(), source })?;
    Ok(())
}

pub fn save_csv_path(path: &Path, d: &Dataset, schema: &Schema) -> Result<(), IoError> {
    save_csv(create(path)?, d, schema)
}

/// Column roles for a group-label dataset. Categories are declared, never
/// inferred from the data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalSchema {
    pub group: String,
    pub group_hat: String,
    pub outcome: String,
    pub categories: Vec<String>,
    /// One score column per category, in category order.
    #[serde(default)]
    pub scores: Vec<String>,
    /// Fully observed group labels, when a simulation provides them.
    #[serde(default)]
    pub true_group: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalTable {
    pub data: CategoricalDataset,
    pub true_group: Option<Vec<usize>>,
}

fn category(cats: &[String], cell: &str, row: usize, name: &str) -> Result<usize, IoError> {
    cats.iter().position(|c| c == cell).ok_or_else(|| IoError::Parse {
        row,
        column: name.to_string(),
        value: cell.to_string(),
    })
}

fn boolean(cell: &str, row: usize, name: &str) -> Result<bool, IoError> {
    match cell {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" => Ok(false),
        _ => Err(IoError::Parse { row, column: name.to_string(), value: cell.to_string() }),
    }
}

/// Reads a group-label dataset; an empty or `NA` group cell marks the row
/// unlabeled.
pub fn load_categorical_csv<R: Read>(input: R, schema: &CategoricalSchema) -> Result<CategoricalTable, IoError> {
    let cats = &schema.categories;
    if !schema.scores.is_empty() && schema.scores.len() != cats.len() {
        return Err(IpdError::Validation("need one score column per category".into()).into());
    }
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let g_col = column(&headers, &schema.group)?;
    let h_col = column(&headers, &schema.group_hat)?;
    let o_col = column(&headers, &schema.outcome)?;
    let s_cols = schema.scores.iter().map(|c| column(&headers, c)).collect::<Result<Vec<_>, _>>()?;
    let t_col = schema.true_group.as_deref().map(|c| column(&headers, c)).transpose()?;

    let (mut group, mut hat, mut outcome, mut scores, mut truth) = (vec![], vec![], vec![], vec![], vec![]);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let g = rec.get(g_col).unwrap_or("");
        group.push(if is_missing(g) { None } else { Some(category(cats, g, row, &schema.group)?) });
        hat.push(category(cats, rec.get(h_col).unwrap_or(""), row, &schema.group_hat)?);
        outcome.push(boolean(rec.get(o_col).unwrap_or(""), row, &schema.outcome)?);
        if !s_cols.is_empty() {
            let s = s_cols
                .iter()
                .zip(&schema.scores)
                .map(|(&c, n)| number(&rec, c, row, n))
                .collect::<Result<Vec<_>, _>>()?;
            scores.push(s);
        }
        if let (Some(c), Some(name)) = (t_col, &schema.true_group) {
            truth.push(category(cats, rec.get(c).unwrap_or(""), row, name)?);
        }
    }
    let mut data = CategoricalDataset::new(cats.clone(), group, hat, outcome)?;
    if !s_cols.is_empty() {
        data = data.with_scores(scores)?;
    }
    Ok(CategoricalTable { data, true_group: t_col.map(|_| truth) })
}

pub fn load_categorical_csv_path(path: &Path, schema: &CategoricalSchema) -> Result<CategoricalTable, IoError> {
    load_categorical_csv(open(path)?, schema)
}

pub fn save_categorical_csv<W: Write>(
    out: W,
    table: &CategoricalTable,
    schema: &CategoricalSchema,
) -> Result<(), IoError> {
    let cd = &table.data;
    let cats = cd.categories();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![schema.group.clone(), schema.group_hat.clone(), schema.outcome.clone()];
    header.extend(schema.scores.iter().cloned());
    if let (Some(name), Some(_)) = (&schema.true_group, &table.true_group) {
        header.push(name.clone());
    }
    w.write_record(&header)?;
    for i in 0..cd.len() {
        let mut rec = vec![
            cd.group()[i].map(|g| cats[g].clone()).unwrap_or_default(),
            cats[cd.group_hat()[i]].clone(),
            if cd.outcome()[i] { "1" } else { "0" }.to_string(),
        ];
        if let Some(s) = cd.scores().filter(|_| !schema.scores.is_empty()) {
            rec.extend(s[i].iter().map(|v| fmt(*v)));
        }
        if let (Some(_), Some(t)) = (&schema.true_group, &table.true_group) {
            rec.push(cats[t[i]].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| IoError::File { path: "<output>".into(), source })?;
    Ok(())
}

pub fn save_categorical_csv_path(
    path: &Path,
    table: &CategoricalTable,
    schema: &CategoricalSchema,
) -> Result<(), IoError> {
    save_categorical_csv(create(path)?, table, schema)
}

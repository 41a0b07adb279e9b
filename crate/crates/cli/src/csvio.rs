//! CSV ingestion: comma-separated, header row, UTF-8, '.' decimal. Labels
//! may be coded -1/1 natively or 0/1 (0 maps to -1). Errors carry the line
//! number of the offending row.

use std::path::Path;

use serde::{Deserialize, Serialize};
use svmreg::model::{Dataset, Label, LabeledSample};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelEncoding {
    /// Labels arrived as -1 / 1.
    Native,
    /// Labels arrived as 0 / 1 and 0 was mapped to -1.
    ZeroOne,
}

#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub label_column: String,
    /// Explicit feature columns, or every non-label column in file order.
    pub feature_columns: Option<Vec<String>>,
}

pub struct LoadedData {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
    pub label_encoding: LabelEncoding,
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_field(field: &str, column: &str, line: u64) -> Result<f64, CliError> {
    field.parse::<f64>().map_err(|_| {
        CliError::Data(format!("line {line}: cannot parse '{field}' in column '{column}' as a number"))
    })
}

/// Load a labeled dataset according to the schema.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LoadedData, CliError> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read header row: {e}")))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == schema.label_column)
        .ok_or_else(|| {
            CliError::Data(format!("label column '{}' not found in header", schema.label_column))
        })?;

    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(cols) => {
            for c in cols {
                if !headers.iter().any(|h| h == c) {
                    return Err(CliError::Data(format!("feature column '{c}' not found in header")));
                }
                if *c == schema.label_column {
                    return Err(CliError::Data(format!(
                        "column '{c}' cannot be both label and feature"
                    )));
                }
            }
            cols.clone()
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx)
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    if feature_names.is_empty() {
        return Err(CliError::Data("no feature columns".into()));
    }
    let feature_idx: Vec<usize> = feature_names
        .iter()
        .map(|name| headers.iter().position(|h| h == name).expect("validated above"))
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<(f64, u64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line().to_string())
                .unwrap_or_else(|| "?".into());
            CliError::Data(format!("line {line}: malformed CSV row: {e}"))
        })?;
        let line = record_line(&record);
        if record.len() != headers.len() {
            return Err(CliError::Data(format!(
                "line {line}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        let label_field = record.get(label_idx).unwrap_or("");
        let raw = parse_field(label_field, &schema.label_column, line)?;
        if raw != -1.0 && raw != 0.0 && raw != 1.0 {
            return Err(CliError::Data(format!(
                "line {line}: label '{label_field}' is not one of -1, 0, 1"
            )));
        }
        raw_labels.push((raw, line));
        let mut row = Vec::with_capacity(feature_idx.len());
        for (&idx, name) in feature_idx.iter().zip(&feature_names) {
            let v = parse_field(record.get(idx).unwrap_or(""), name, line)?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "line {line}: non-finite value in column '{name}'"
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data("no data rows".into()));
    }

    let has_zero = raw_labels.iter().any(|(v, _)| *v == 0.0);
    let has_neg = raw_labels.iter().any(|(v, _)| *v == -1.0);
    if has_zero && has_neg {
        return Err(CliError::Data(
            "label column mixes -1 and 0; use a single encoding (-1/1 or 0/1)".into(),
        ));
    }
    let label_encoding = if has_zero { LabelEncoding::ZeroOne } else { LabelEncoding::Native };

    let samples = rows
        .into_iter()
        .zip(raw_labels)
        .map(|(x, (raw, line))| {
            let coded = if raw == 0.0 { -1.0 } else { raw };
            let y = Label::from_f64(coded)
                .map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
            LabeledSample::new(x, y).map_err(|e| CliError::Data(format!("line {line}: {e}")))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let dataset = Dataset::new(samples).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(LoadedData { dataset, feature_names, label_encoding })
}

/// Read only the given feature columns (prediction inputs); the label column
/// may be absent. Returns the rows plus the labels when present.
pub fn load_features(
    path: &Path,
    feature_names: &[String],
    label_column: &str,
) -> Result<(Vec<Vec<f64>>, Option<Vec<f64>>), CliError> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read header row: {e}")))?
        .clone();
    let feature_idx: Vec<usize> = feature_names
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == name).ok_or_else(|| {
                CliError::Data(format!(
                    "feature column '{name}' from the fit-time schema not found in input"
                ))
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let label_idx = headers.iter().position(|h| h == label_column);

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line().to_string())
                .unwrap_or_else(|| "?".into());
            CliError::Data(format!("line {line}: malformed CSV row: {e}"))
        })?;
        let line = record_line(&record);
        let mut row = Vec::with_capacity(feature_idx.len());
        for (&idx, name) in feature_idx.iter().zip(feature_names) {
            row.push(parse_field(record.get(idx).unwrap_or(""), name, line)?);
        }
        rows.push(row);
        if let Some(li) = label_idx {
            labels.push(parse_field(record.get(li).unwrap_or(""), label_column, line)?);
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data("no data rows".into()));
    }
    Ok((rows, label_idx.map(|_| labels)))
}

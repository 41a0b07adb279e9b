//! JSON report structures, the run manifest, and atomic file writes.
//!
//! The JSON report is the source of truth; the printed tables are views of
//! it. Reports are byte-deterministic for fixed inputs, flags, and seed,
//! except for the `created_unix` manifest field and the per-cell timings.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use svmreg::inference::InferenceReport;
use svmreg::model::Theta;
use svmreg::ExistenceReport;

use crate::csvio::LabelEncoding;
use crate::CliError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full flag configuration of the invocation.
    pub config: Value,
    pub seed: u64,
    /// SHA-256 of the input file bytes.
    pub input_digest: Option<String>,
    pub artifact_version: String,
    /// Wall-clock creation time; excluded from determinism comparisons.
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: u64, input_digest: Option<String>) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            input_digest,
            artifact_version: ARTIFACT_VERSION.to_string(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolySpec {
    pub c: f64,
    pub u: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaInfo {
    pub label_column: String,
    /// Raw input feature columns, in fit order.
    pub feature_columns: Vec<String>,
    pub label_encoding: LabelEncoding,
    pub poly: Option<PolySpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitStats {
    pub loglik_mean: f64,
    pub loglik_total: f64,
    pub converged: bool,
    pub n_iter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub all_start_logliks: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diverged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub existence_warning: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceJson {
    pub a_hat: Vec<Vec<f64>>,
    pub b_hat: Vec<Vec<f64>>,
    pub cov: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub kink_count: usize,
    pub kink_warning: bool,
}

impl From<&InferenceReport> for InferenceJson {
    fn from(r: &InferenceReport) -> Self {
        let (a_hat, b_hat, cov) = r.matrices_as_rows();
        InferenceJson {
            a_hat,
            b_hat,
            cov,
            se: r.se.clone(),
            z: r.z.clone(),
            p: r.p.clone(),
            kink_count: r.kink_count,
            kink_warning: r.kink_warning,
        }
    }
}

/// Report emitted by `fit` and consumed by `predict`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub manifest: RunManifest,
    pub model: String,
    pub schema: SchemaInfo,
    pub n: usize,
    /// Covariate dimension the model was fitted on (after any expansion).
    pub d: usize,
    /// Names of the fitted coefficients (monomial names under expansion).
    pub feature_names: Vec<String>,
    pub theta: Theta,
    pub fit: FitStats,
    pub in_sample_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inference: Option<InferenceJson>,
    pub existence: ExistenceReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvMethodReport {
    pub name: String,
    pub acc_mean: f64,
    pub acc_sd: f64,
    pub fold_accuracies: Vec<f64>,
    pub excluded_folds: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub manifest: RunManifest,
    pub k: usize,
    pub methods: Vec<CvMethodReport>,
}

/// Write bytes to `path` atomically (temp file in the same directory, then
/// rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let io_err =
        |e: std::io::Error| CliError::Data(format!("cannot write {}: {e}", path.display()));
    if let Some(dir) = dir {
        if !dir.exists() {
            return Err(CliError::Data(format!("output directory {} does not exist", dir.display())));
        }
    }
    let mut f = std::fs::File::create(&tmp).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)?;
    f.sync_all().map_err(io_err)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// Serialize a report as pretty JSON and either write it atomically or print
/// it to stdout.
pub fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("cannot serialize report: {e}")))?;
    json.push('\n');
    match out {
        Some(path) => write_atomic(path, json.as_bytes()),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

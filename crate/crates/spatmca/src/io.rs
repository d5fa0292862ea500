//! File formats: numeric CSV matrices, monthly detrending, the JSON model
//! file, and machine-readable run summaries.
//!
//! CSVs are comma-separated UTF-8 with `.` decimals and an optional single
//! header row, auto-detected: the first row is a header exactly when any of
//! its cells fails to parse as a number. Matrices are written at 17
//! significant digits so that write-then-read is the identity on finite
//! doubles. The model file is JSON whose floats round-trip bitwise.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::admm::{CoupledPatterns, PenaltyConfig, Zeta};
use crate::error::{Error, Result};
use crate::model::CoupledPatternModel;
use crate::spline::{LocationSet, SplineCoefficients};

/// Version tag written into every model file.
pub const MODEL_FORMAT_VERSION: u32 = 1;

fn parse_error(path: &Path, row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message: message.into(),
    }
}

fn read_csv_inner(path: &Path) -> Result<(Option<Vec<String>>, DMatrix<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    let mut first_data_line = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(path, idx + 1, 1, e.to_string()))?;
        let line = idx + 1;
        if idx == 0 {
            let is_header = record.iter().any(|c| c.parse::<f64>().is_err());
            if is_header {
                header = Some(record.iter().map(str::to_string).collect());
                continue;
            }
        }
        if rows.is_empty() {
            width = record.len();
            first_data_line = line;
        } else if record.len() != width {
            return Err(parse_error(
                path,
                line,
                record.len().min(width) + 1,
                format!(
                    "ragged row: {} fields, expected {width} (as in row {first_data_line})",
                    record.len()
                ),
            ));
        }
        let mut row = Vec::with_capacity(width);
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell
                .parse()
                .map_err(|_| parse_error(path, line, j + 1, format!("not a number: '{cell}'")))?;
            if !value.is_finite() {
                return Err(parse_error(
                    path,
                    line,
                    j + 1,
                    format!("non-finite value: '{cell}'"),
                ));
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(path, 1, 1, "no data rows"));
    }
    if width == 0 {
        return Err(parse_error(path, first_data_line, 1, "rows have no fields"));
    }
    let nrows = rows.len();
    let matrix = DMatrix::from_row_iterator(nrows, width, rows.into_iter().flatten());
    Ok((header, matrix))
}

/// Reads a rectangular numeric CSV into a matrix. A single header row is
/// skipped when any cell of the first row is non-numeric; every body cell
/// must be a finite number. Errors carry 1-based file row and column.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    Ok(read_csv_inner(path.as_ref())?.1)
}

/// Like [`read_matrix_csv`] but also returns the column names; columns of a
/// headerless file are named `c1..cp`.
pub fn read_named_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let (header, matrix) = read_csv_inner(path.as_ref())?;
    let names = header
        .unwrap_or_else(|| (1..=matrix.ncols()).map(|j| format!("c{j}")).collect());
    if names.len() != matrix.ncols() {
        return Err(parse_error(
            path.as_ref(),
            1,
            names.len().min(matrix.ncols()) + 1,
            format!(
                "header has {} fields but rows have {}",
                names.len(),
                matrix.ncols()
            ),
        ));
    }
    Ok((names, matrix))
}

/// Writes a matrix as CSV at 17 significant digits (exact round-trip),
/// optionally with a header row.
pub fn write_matrix_csv(
    path: impl AsRef<Path>,
    matrix: &DMatrix<f64>,
    header: Option<&[&str]>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    if let Some(names) = header {
        writer.write_record(names)?;
    }
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols())
            .map(|j| format_full(matrix[(i, j)]))
            .collect();
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// 17-significant-digit scientific notation: enough to reproduce any finite
/// double exactly on read-back.
pub fn format_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Reads a single-column CSV of month labels in `1..=12`.
pub fn read_month_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let m = read_matrix_csv(path)?;
    if m.ncols() != 1 {
        return Err(parse_error(
            path,
            1,
            2,
            format!("month file must have one column, found {}", m.ncols()),
        ));
    }
    let mut labels = Vec::with_capacity(m.nrows());
    for i in 0..m.nrows() {
        let v = m[(i, 0)];
        if v.fract() != 0.0 || !(1.0..=12.0).contains(&v) {
            return Err(parse_error(
                path,
                i + 1,
                1,
                format!("month label must be an integer in 1..=12, got {v}"),
            ));
        }
        labels.push(v as u32);
    }
    Ok(labels)
}

/// Removes the per-month mean from every column: for each month value and
/// each column, subtracts the mean over the rows carrying that month.
/// Months that never occur are skipped.
pub fn detrend_monthly(y: &DMatrix<f64>, months: &[u32]) -> Result<DMatrix<f64>> {
    if months.len() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} month labels for {} rows",
            months.len(),
            y.nrows()
        )));
    }
    if let Some(bad) = months.iter().find(|m| !(1..=12).contains(*m)) {
        return Err(Error::InvalidConfig(format!(
            "month label {bad} outside 1..=12"
        )));
    }
    let mut out = y.clone();
    for month in 1..=12u32 {
        let rows: Vec<usize> = months
            .iter()
            .enumerate()
            .filter(|(_, m)| **m == month)
            .map(|(i, _)| i)
            .collect();
        if rows.is_empty() {
            continue;
        }
        for j in 0..y.ncols() {
            let mean = rows.iter().map(|&i| y[(i, j)]).sum::<f64>() / rows.len() as f64;
            for &i in &rows {
                out[(i, j)] -= mean;
            }
        }
    }
    Ok(out)
}

/// SHA-256 digest of a file's bytes, hex-encoded.
pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path.as_ref())?;
    Ok(sha256_bytes(&bytes))
}

/// SHA-256 digest of a byte slice, hex-encoded.
pub fn sha256_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Serialized spline coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineData {
    pub kernel_weights: Vec<f64>,
    pub affine_weights: Vec<f64>,
}

impl From<&SplineCoefficients> for SplineData {
    fn from(c: &SplineCoefficients) -> Self {
        Self {
            kernel_weights: c.kernel_weights.iter().copied().collect(),
            affine_weights: c.affine_weights.iter().copied().collect(),
        }
    }
}

impl From<&SplineData> for SplineCoefficients {
    fn from(d: &SplineData) -> Self {
        Self {
            kernel_weights: DVector::from_column_slice(&d.kernel_weights),
            affine_weights: DVector::from_column_slice(&d.affine_weights),
        }
    }
}

/// Tuning values a model was fit with, plus the penalty parameter actually
/// used (the resolved value, even when it was chosen automatically).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningData {
    pub tau1u: f64,
    pub tau1v: f64,
    pub tau2u: f64,
    pub tau2v: f64,
    pub rank: usize,
    pub zeta_used: f64,
    pub tol: f64,
    pub max_iter: usize,
}

/// Where the model's inputs came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub y1_sha256: Option<String>,
    pub y2_sha256: Option<String>,
    pub locs1_sha256: Option<String>,
    pub locs2_sha256: Option<String>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub centered: Option<bool>,
}

/// The on-disk model: everything needed to evaluate the fitted patterns and
/// cross-covariance anywhere in the two domains. Matrices are stored row by
/// row; floats round-trip bitwise through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub dim1: usize,
    pub dim2: usize,
    pub locs1: Vec<Vec<f64>>,
    pub locs2: Vec<Vec<f64>>,
    /// `p1 x K`, row per site.
    pub u_hat: Vec<Vec<f64>>,
    /// `p2 x K`, row per site.
    pub v_hat: Vec<Vec<f64>>,
    pub d_hat: Vec<f64>,
    pub u_splines: Vec<SplineData>,
    pub v_splines: Vec<SplineData>,
    pub tuning: TuningData,
    pub converged: bool,
    pub iterations: usize,
    pub residuals: ResidualSummary,
    pub provenance: Provenance,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::ModelFile(format!("{what} has no rows")));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::ModelFile(format!("{what} rows have unequal lengths")));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        width,
        rows.iter().flatten().copied(),
    ))
}

impl ModelFile {
    pub fn from_model(model: &CoupledPatternModel, provenance: Provenance) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            dim1: model.locs1.dim(),
            dim2: model.locs2.dim(),
            locs1: matrix_rows(model.locs1.coords()),
            locs2: matrix_rows(model.locs2.coords()),
            u_hat: matrix_rows(&model.patterns.u_hat),
            v_hat: matrix_rows(&model.patterns.v_hat),
            d_hat: model.d_hat.clone(),
            u_splines: model.u_splines.iter().map(SplineData::from).collect(),
            v_splines: model.v_splines.iter().map(SplineData::from).collect(),
            tuning: TuningData {
                tau1u: model.config.tau1u,
                tau1v: model.config.tau1v,
                tau2u: model.config.tau2u,
                tau2v: model.config.tau2v,
                rank: model.config.rank,
                zeta_used: model.zeta,
                tol: model.config.tol,
                max_iter: model.config.max_iter,
            },
            converged: model.patterns.converged,
            iterations: model.patterns.iterations,
            residuals: ResidualSummary {
                delta_g: model.residuals.delta_g,
                primal_r: model.residuals.primal_r,
                primal_q: model.residuals.primal_q,
            },
            provenance,
        }
    }

    /// Rebuilds an evaluable model; validates dimensions and geometry.
    pub fn into_model(&self) -> Result<CoupledPatternModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFile(format!(
                "format version {} not supported (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let locs1 = LocationSet::new(rows_to_matrix(&self.locs1, "locs1")?)?;
        let locs2 = LocationSet::new(rows_to_matrix(&self.locs2, "locs2")?)?;
        if locs1.dim() != self.dim1 || locs2.dim() != self.dim2 {
            return Err(Error::ModelFile(
                "stored dimensions disagree with location tables".into(),
            ));
        }
        let u_hat = rows_to_matrix(&self.u_hat, "u_hat")?;
        let v_hat = rows_to_matrix(&self.v_hat, "v_hat")?;
        let k = u_hat.ncols();
        if v_hat.ncols() != k
            || self.d_hat.len() != k
            || self.u_splines.len() != k
            || self.v_splines.len() != k
        {
            return Err(Error::ModelFile(format!(
                "inconsistent rank: u {}, v {}, d {}, splines {}/{}",
                k,
                v_hat.ncols(),
                self.d_hat.len(),
                self.u_splines.len(),
                self.v_splines.len()
            )));
        }
        if u_hat.nrows() != locs1.len() || v_hat.nrows() != locs2.len() {
            return Err(Error::ModelFile(
                "pattern row counts disagree with location tables".into(),
            ));
        }
        let config = PenaltyConfig {
            tau1u: self.tuning.tau1u,
            tau1v: self.tuning.tau1v,
            tau2u: self.tuning.tau2u,
            tau2v: self.tuning.tau2v,
            rank: self.tuning.rank,
            zeta: Zeta::Fixed(self.tuning.zeta_used),
            tol: self.tuning.tol,
            max_iter: self.tuning.max_iter,
        };
        Ok(CoupledPatternModel {
            patterns: CoupledPatterns {
                u_hat,
                v_hat,
                converged: self.converged,
                iterations: self.iterations,
            },
            d_hat: self.d_hat.clone(),
            u_splines: self.u_splines.iter().map(SplineCoefficients::from).collect(),
            v_splines: self.v_splines.iter().map(SplineCoefficients::from).collect(),
            locs1,
            locs2,
            config,
            zeta: self.tuning.zeta_used,
            residuals: crate::admm::Residuals {
                delta_g: self.residuals.delta_g,
                primal_r: self.residuals.primal_r,
                primal_q: self.residuals.primal_q,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path.as_ref())?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact {
                    path: path.as_ref().to_path_buf(),
                    command: "fit".to_string(),
                }
            } else {
                Error::Io(e)
            }
        })?;
        let file: ModelFile = serde_json::from_slice(&bytes)
            .map_err(|e| Error::ModelFile(format!("{}: {e}", path.as_ref().display())))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFile(format!(
                "format version {} not supported (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        Ok(file)
    }
}

/// Solver diagnostics recorded in the run summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub delta_g: f64,
    pub primal_r: f64,
    pub primal_q: f64,
}

/// Machine-readable record of one CLI invocation: the settings that shaped
/// the run and what it produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub n: Option<usize>,
    pub p1: Option<usize>,
    pub p2: Option<usize>,
    pub k: Option<usize>,
    pub tau1u: Option<f64>,
    pub tau1v: Option<f64>,
    pub tau2u: Option<f64>,
    pub tau2v: Option<f64>,
    pub zeta_used: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub centered: Option<bool>,
    pub cv_score: Option<f64>,
    pub k_converged: Option<bool>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub residuals: Option<ResidualSummary>,
}

impl RunSummary {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            ..Self::default()
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path.as_ref())?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref())?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// One row of the benchmark loss table (`compare` output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub method: String,
    pub replicate: usize,
    pub k: usize,
    pub tau1u: f64,
    pub tau1v: f64,
    pub tau2u: f64,
    pub tau2v: f64,
    pub cv_score: f64,
    pub loss: f64,
}

/// One row of the cross-validation trace (`cv` output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTraceRow {
    pub k: usize,
    pub stage: String,
    pub tau1u: f64,
    pub tau1v: f64,
    pub tau2u: f64,
    pub tau2v: f64,
    pub score: f64,
}

fn write_records<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (idx, record) in reader.deserialize::<T>().enumerate() {
        rows.push(record.map_err(|e| parse_error(path, idx + 2, 1, e.to_string()))?);
    }
    Ok(rows)
}

pub fn write_loss_table(path: impl AsRef<Path>, rows: &[LossRow]) -> Result<()> {
    write_records(path, rows)
}

pub fn read_loss_table(path: impl AsRef<Path>) -> Result<Vec<LossRow>> {
    read_records(path.as_ref())
}

pub fn write_cv_trace(path: impl AsRef<Path>, rows: &[CvTraceRow]) -> Result<()> {
    write_records(path, rows)
}

pub fn read_cv_trace(path: impl AsRef<Path>) -> Result<Vec<CvTraceRow>> {
    read_records(path.as_ref())
}

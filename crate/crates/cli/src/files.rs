//! JSON file schemas.
//!
//! Matrices are row-major lists. Field files carry one record per sample point;
//! the `kind` tag says whether records hold `n×m` values (`one-form`), `m×m`
//! metrics (`metric`) or `n×n` rotations (`rotation`). `n` and `m` always
//! describe the underlying one-form shape.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use oneform::field::{MetricField, OneFormField, RotationField, SampledManifold};
use oneform::quotient::SpdMatrix;
use oneform::{DMatrix, FullRankMatrix};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    #[default]
    OneForm,
    Metric,
    Rotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub point_id: String,
    pub weight: f64,
    pub matrix: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFile {
    pub version: u32,
    #[serde(default)]
    pub kind: FieldKind,
    pub n: usize,
    pub m: usize,
    pub records: Vec<Record>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub version: u32,
    pub n: usize,
    pub m: usize,
    pub matrix: Vec<f64>,
}

fn input(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {msg}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| input(path, e))?;
    serde_json::from_str(&text).map_err(|e| input(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("file schemas serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn check_version(path: &Path, version: u32) -> Result<(), CliError> {
    if version != FORMAT_VERSION {
        return Err(input(path, format!("version: unsupported {version}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}

fn matrix_from(path: &Path, field: &str, rows: usize, cols: usize, data: &[f64]) -> Result<DMatrix<f64>, CliError> {
    if data.len() != rows * cols {
        return Err(input(
            path,
            format!("{field}: expected {} numbers ({rows}x{cols}), found {}", rows * cols, data.len()),
        ));
    }
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(input(path, format!("{field}[{k}]: not a finite number")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    a.transpose().as_slice().to_vec()
}

impl MatrixFile {
    pub fn new(a: &DMatrix<f64>) -> Self {
        MatrixFile {
            version: FORMAT_VERSION,
            n: a.nrows(),
            m: a.ncols(),
            matrix: row_major(a),
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let file: MatrixFile = read_json(path)?;
        check_version(path, file.version)?;
        Ok(file)
    }

    pub fn to_matrix(&self, path: &Path) -> Result<DMatrix<f64>, CliError> {
        matrix_from(path, "matrix", self.n, self.m, &self.matrix)
    }

    pub fn to_full_rank(&self, path: &Path, rank_tol: f64) -> Result<FullRankMatrix, CliError> {
        let a = self.to_matrix(path)?;
        FullRankMatrix::with_tol(a, rank_tol).map_err(|e| input(path, format!("matrix: {e}")))
    }

    pub fn to_spd(&self, path: &Path, rank_tol: f64) -> Result<SpdMatrix, CliError> {
        let a = self.to_matrix(path)?;
        SpdMatrix::with_tol(a, rank_tol).map_err(|e| input(path, format!("matrix: {e}")))
    }
}

impl FieldFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let file: FieldFile = read_json(path)?;
        check_version(path, file.version)?;
        file.manifold(path)?;
        Ok(file)
    }

    fn record_shape(&self) -> (usize, usize) {
        match self.kind {
            FieldKind::OneForm => (self.n, self.m),
            FieldKind::Metric => (self.m, self.m),
            FieldKind::Rotation => (self.n, self.n),
        }
    }

    /// Validates weights and identifiers and builds the sample manifold.
    pub fn manifold(&self, path: &Path) -> Result<Arc<SampledManifold>, CliError> {
        if self.m == 0 || self.n <= self.m {
            return Err(input(path, format!("n, m: need n > m >= 1, found n={} m={}", self.n, self.m)));
        }
        if self.records.is_empty() {
            return Err(input(path, "records: empty"));
        }
        for (k, r) in self.records.iter().enumerate() {
            if !(r.weight.is_finite() && r.weight > 0.0) {
                return Err(input(path, format!("records[{k}].weight: must be positive, found {}", r.weight)));
            }
            if self.records[..k].iter().any(|p| p.point_id == r.point_id) {
                return Err(input(path, format!("records[{k}].point_id: duplicate \"{}\"", r.point_id)));
            }
        }
        let ids = self.records.iter().map(|r| r.point_id.clone()).collect();
        let weights = self.records.iter().map(|r| r.weight).collect();
        SampledManifold::new(ids, weights, self.n, self.m)
            .map(Arc::new)
            .map_err(|e| input(path, format!("records: {e}")))
    }

    fn expect_kind(&self, path: &Path, kind: FieldKind) -> Result<(), CliError> {
        if self.kind != kind {
            return Err(input(path, format!("kind: expected {kind:?}, found {:?}", self.kind)));
        }
        Ok(())
    }

    fn record_matrix(&self, path: &Path, k: usize) -> Result<DMatrix<f64>, CliError> {
        let (rows, cols) = self.record_shape();
        let field = format!("records[{k}].matrix (point_id \"{}\")", self.records[k].point_id);
        matrix_from(path, &field, rows, cols, &self.records[k].matrix)
    }

    /// All record matrices, shape-checked but not rank-checked.
    pub fn raw_matrices(&self, path: &Path) -> Result<Vec<DMatrix<f64>>, CliError> {
        self.expect_kind(path, FieldKind::OneForm)?;
        (0..self.records.len()).map(|k| self.record_matrix(path, k)).collect()
    }

    pub fn to_one_form(&self, path: &Path, manifold: &Arc<SampledManifold>, rank_tol: f64) -> Result<OneFormField, CliError> {
        let values = self
            .raw_matrices(path)?
            .into_iter()
            .enumerate()
            .map(|(k, a)| {
                FullRankMatrix::with_tol(a, rank_tol).map_err(|e| {
                    input(path, format!("records[{k}].matrix (point_id \"{}\"): {e}", self.records[k].point_id))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        OneFormField::new(manifold.clone(), values).map_err(|e| input(path, e))
    }

    pub fn to_metric(&self, path: &Path, manifold: &Arc<SampledManifold>, rank_tol: f64) -> Result<MetricField, CliError> {
        self.expect_kind(path, FieldKind::Metric)?;
        let values = (0..self.records.len())
            .map(|k| {
                let g = self.record_matrix(path, k)?;
                SpdMatrix::with_tol(g, rank_tol).map_err(|e| {
                    input(path, format!("records[{k}].matrix (point_id \"{}\"): {e}", self.records[k].point_id))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        MetricField::new(manifold.clone(), values).map_err(|e| input(path, e))
    }

    fn from_matrices<'a>(
        kind: FieldKind,
        manifold: &SampledManifold,
        values: impl Iterator<Item = &'a DMatrix<f64>>,
        metadata: BTreeMap<String, serde_json::Value>,
    ) -> Self {
        let records = manifold
            .ids()
            .iter()
            .zip(manifold.weights())
            .zip(values)
            .map(|((id, w), a)| Record {
                point_id: id.clone(),
                weight: *w,
                matrix: row_major(a),
            })
            .collect();
        FieldFile {
            version: FORMAT_VERSION,
            kind,
            n: manifold.n(),
            m: manifold.m(),
            records,
            metadata,
        }
    }

    pub fn from_one_form(field: &OneFormField, metadata: BTreeMap<String, serde_json::Value>) -> Self {
        Self::from_matrices(FieldKind::OneForm, field.manifold(), field.values().iter().map(|v| v.entries()), metadata)
    }

    pub fn from_metric(field: &MetricField, metadata: BTreeMap<String, serde_json::Value>) -> Self {
        Self::from_matrices(FieldKind::Metric, field.manifold(), field.values().iter().map(|v| v.entries()), metadata)
    }

    pub fn from_rotation(field: &RotationField, metadata: BTreeMap<String, serde_json::Value>) -> Self {
        Self::from_matrices(FieldKind::Rotation, field.manifold(), field.values().iter().map(|v| v.entries()), metadata)
    }
}

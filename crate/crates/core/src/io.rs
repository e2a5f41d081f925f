//! JSON text formats: matrices, system descriptions, certificates and reports.
//!
//! Every top-level document carries a `schema_version`. Matrices are stored
//! with explicit dimensions and row-major data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcore::Matrix;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    Version { found: u32 },
    #[error("invalid document: {0}")]
    Invalid(String),
}

/// `{"rows": r, "cols": c, "data": [row-major values]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn to_matrix(&self) -> Result<Matrix, IoError> {
        if self.data.len() != self.rows * self.cols {
            return Err(IoError::Invalid(format!(
                "matrix declares {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(IoError::Invalid("matrix contains non-finite values".into()));
        }
        Ok(Matrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

impl From<&Matrix> for MatrixData {
    fn from(m: &Matrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MatrixData {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

/// Serde adapter for `Matrix` fields.
pub mod matrix_serde {
    use super::*;

    pub fn serialize<S: serde::Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        MatrixData::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        MatrixData::deserialize(d)?
            .to_matrix()
            .map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Vec<Matrix>` fields.
pub mod matrix_vec_serde {
    use super::*;

    pub fn serialize<S: serde::Serializer>(m: &[Matrix], s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(MatrixData::from)
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<Matrix>, D::Error> {
        Vec::<MatrixData>::deserialize(d)?
            .iter()
            .map(|m| m.to_matrix().map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Serde adapter for `Vec<Vec<Matrix>>` fields.
pub mod matrix_grid_serde {
    use super::*;

    pub fn serialize<S: serde::Serializer>(m: &[Vec<Matrix>], s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(|row| row.iter().map(MatrixData::from).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<Vec<Matrix>>, D::Error> {
        Vec::<Vec<MatrixData>>::deserialize(d)?
            .iter()
            .map(|row| {
                row.iter()
                    .map(|m| m.to_matrix().map_err(serde::de::Error::custom))
                    .collect()
            })
            .collect()
    }
}

pub fn read_text(path: &std::path::Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &std::path::Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn check_version(found: u32) -> Result<(), IoError> {
    if found == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(IoError::Version { found })
    }
}

//! Dense symmetric matrices and their file formats.
//!
//! [`CovMatrix`] is stored row-major. Estimators only ever write through
//! [`CovMatrix::set_sym`], so both triangles come from one computation and
//! symmetry holds with exact equality.
//!
//! Two serializations are supported:
//!
//! * CSV: a header row of asset ids, then `p` rows of `p` values.
//! * JSON: `{p, assets, entries, meta}` with `entries` in row-major order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    p: usize,
    data: Vec<f64>,
}

impl CovMatrix {
    pub fn zeros(p: usize) -> Self {
        Self {
            p,
            data: vec![0.0; p * p],
        }
    }

    pub fn identity(p: usize) -> Self {
        let mut m = Self::zeros(p);
        for i in 0..p {
            m.data[i * p + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set_sym(i, i, d);
        }
        m
    }

    /// Builds a matrix from row-major entries. The input must be square and symmetric.
    pub fn from_row_major(p: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != p * p {
            return Err(Error::DimensionMismatch {
                left: data.len(),
                right: p * p,
            });
        }
        let m = Self { p, data };
        for i in 0..p {
            for j in 0..i {
                if m.get(i, j) != m.get(j, i) {
                    return Err(Error::InvalidConfig(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        let mut data = Vec::with_capacity(p * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    left: row.len(),
                    right: p,
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(p, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    /// Writes `value` into both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.p + j] = value;
        self.data[j * self.p + i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.p).map(|i| self.get(i, i)).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            p: self.p,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.p).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Number of nonzero entries over all `p²` ordered positions.
    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.p, self.p, &self.data)
    }

    pub fn write_csv<W: Write>(&self, assets: &[String], writer: W) -> Result<()> {
        if assets.len() != self.p {
            return Err(Error::DimensionMismatch {
                left: assets.len(),
                right: self.p,
            });
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(assets)?;
        for i in 0..self.p {
            w.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Reads the CSV layout produced by [`CovMatrix::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<(Vec<String>, CovMatrix)> {
        let mut r = csv::Reader::from_reader(reader);
        let assets: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let p = assets.len();
        let mut data = Vec::with_capacity(p * p);
        for (row_idx, record) in r.records().enumerate() {
            let record = record?;
            let line = record.position().map_or(row_idx as u64 + 2, |pos| pos.line());
            if record.len() != p {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {p} columns, found {}", record.len()),
                });
            }
            for field in record.iter() {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid number {field:?}"),
                })?;
                data.push(v);
            }
        }
        Ok((assets, CovMatrix::from_row_major(p, data)?))
    }

    pub fn to_document(&self, assets: &[String], meta: MatrixMeta) -> MatrixDocument {
        MatrixDocument {
            p: self.p,
            assets: assets.to_vec(),
            entries: self.data.clone(),
            meta,
        }
    }
}

/// Provenance stored alongside a serialized estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub threshold_rule: String,
    pub window_rule: String,
    pub n_star: usize,
    #[serde(default)]
    pub diagonal_thresholded: bool,
}

/// JSON representation of a covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDocument {
    pub p: usize,
    pub assets: Vec<String>,
    pub entries: Vec<f64>,
    pub meta: MatrixMeta,
}

impl MatrixDocument {
    pub fn matrix(&self) -> Result<CovMatrix> {
        CovMatrix::from_row_major(self.p, self.entries.clone())
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `n x m` matrix of observations, stored column-major.
///
/// Rows are observations and columns are variables. Every entry is finite;
/// constructors reject NaN and infinities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_col_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::DimensionMismatch {
                what: "matrix buffer length",
                expected: nrows * ncols,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos % nrows.max(1),
                col: pos / nrows.max(1),
            });
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn from_row_major(nrows: usize, ncols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::DimensionMismatch {
                what: "matrix buffer length",
                expected: nrows * ncols,
                got: data.len(),
            });
        }
        let mut col_major = vec![0.0; data.len()];
        for i in 0..nrows {
            for j in 0..ncols {
                col_major[j * nrows + i] = data[i * ncols + j];
            }
        }
        Self::from_col_major(nrows, ncols, col_major)
    }

    /// Builds a matrix from a list of equally long columns.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let nrows = columns.first().map_or(0, |c| c.as_ref().len());
        let mut data = Vec::with_capacity(nrows * columns.len());
        for col in columns {
            let col = col.as_ref();
            if col.len() != nrows {
                return Err(Error::DimensionMismatch {
                    what: "column length",
                    expected: nrows,
                    got: col.len(),
                });
            }
            data.extend_from_slice(col);
        }
        Self::from_col_major(nrows, columns.len(), data)
    }

    /// Single-column matrix.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::from_col_major(values.len(), 1, values.to_vec())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.nrows + row]
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.nrows..(col + 1) * self.nrows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.ncols).map(move |j| self.column(j))
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.ncols).map(|j| self.get(row, j)).collect()
    }

    /// Raw column-major storage.
    pub fn as_col_major(&self) -> &[f64] {
        &self.data
    }

    pub fn column_matrix(&self, col: usize) -> SampleMatrix {
        SampleMatrix {
            nrows: self.nrows,
            ncols: 1,
            data: self.column(col).to_vec(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<SampleMatrix> {
        let mut data = Vec::with_capacity(self.nrows * cols.len());
        for &j in cols {
            if j >= self.ncols {
                return Err(Error::UnknownFeature(j));
            }
            data.extend_from_slice(self.column(j));
        }
        Ok(SampleMatrix {
            nrows: self.nrows,
            ncols: cols.len(),
            data,
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<SampleMatrix> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.nrows) {
            return Err(Error::InvalidParameter(format!(
                "row index {bad} out of range for {} rows",
                self.nrows
            )));
        }
        let mut data = Vec::with_capacity(rows.len() * self.ncols);
        for j in 0..self.ncols {
            let col = self.column(j);
            data.extend(rows.iter().map(|&i| col[i]));
        }
        Ok(SampleMatrix {
            nrows: rows.len(),
            ncols: self.ncols,
            data,
        })
    }

    /// Applies `f` to every entry. The caller guarantees `f` keeps entries finite.
    pub(crate) fn map_unchecked(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> SampleMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.ncols {
            for (i, &v) in self.column(j).iter().enumerate() {
                data.push(f(i, j, v));
            }
        }
        SampleMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            data,
        }
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hstack(&self, other: &SampleMatrix) -> Result<SampleMatrix> {
        if self.nrows != other.nrows {
            return Err(Error::DimensionMismatch {
                what: "row count for hstack",
                expected: self.nrows,
                got: other.nrows,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(SampleMatrix {
            nrows: self.nrows,
            ncols: self.ncols + other.ncols,
            data,
        })
    }
}

//! Minimal row-major matrix used for point clouds, embeddings, and grids.
//!
//! Deliberately thin: contiguous rows, no arithmetic. Anything that needs
//! real linear algebra converts to `nalgebra` at the call site.

use crate::{Result, VoltError};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    nrows: usize,
    ncols: usize,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix {
            data: vec![0.0; nrows * ncols],
            nrows,
            ncols,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(VoltError::DimensionMismatch {
                    expected: ncols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { data, nrows, ncols })
    }

    pub fn from_vec(data: Vec<f64>, nrows: usize, ncols: usize) -> Self {
        assert_eq!(data.len(), nrows * ncols, "shape does not match data length");
        Matrix { data, nrows, ncols }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.ncols + j] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.ncols.max(1))
    }

    /// Subtract the column means in place; returns the means.
    pub fn center_columns(&mut self) -> Vec<f64> {
        let mut means = vec![0.0; self.ncols];
        for row in self.data.chunks_exact(self.ncols) {
            for (m, &x) in means.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= self.nrows as f64;
        }
        for row in self.data.chunks_exact_mut(self.ncols) {
            for (x, m) in row.iter_mut().zip(&means) {
                *x -= m;
            }
        }
        means
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_iterator(self.nrows, self.ncols, self.data.iter().copied())
    }

    pub fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Matrix {
            data,
            nrows: m.nrows(),
            ncols: m.ncols(),
        }
    }
}

/// Euclidean distance between two coordinate slices of equal length.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_columns_removes_means() {
        let mut m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0]]).unwrap();
        let means = m.center_columns();
        assert_eq!(means, vec![2.0, 4.0]);
        assert_eq!(m.row(0), &[-1.0, -2.0]);
        assert_eq!(m.row(1), &[1.0, 2.0]);
    }

    #[test]
    fn nalgebra_round_trip() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let back = Matrix::from_nalgebra(&m.to_nalgebra());
        assert_eq!(m, back);
    }
}

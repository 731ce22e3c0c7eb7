use crate::error::{GbtError, Result};

/// Dense row-major feature matrix. `NaN` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    names: Vec<String>,
    n_rows: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn new(names: Vec<String>, n_rows: usize, values: Vec<f64>) -> Result<Self> {
        let expected = names.len() * n_rows;
        if values.len() != expected {
            return Err(GbtError::Shape {
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(GbtError::NonFinite("feature matrix"));
        }
        Ok(Self {
            names,
            n_rows,
            values,
        })
    }

    /// Builds a matrix from row slices; convenient in tests.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = names.len();
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(GbtError::Shape {
                    expected: n_cols,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(names, rows.len(), values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.names.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let p = self.names.len();
        &self.values[row * p..(row + 1) * p]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row indices of every column sorted by ascending value, missing cells
    /// dropped. Equal values keep row order.
    pub(crate) fn sorted_columns(&self) -> Vec<Vec<u32>> {
        (0..self.n_cols())
            .map(|c| {
                let mut idx: Vec<u32> = (0..self.n_rows as u32)
                    .filter(|&r| !self.get(r as usize, c).is_nan())
                    .collect();
                idx.sort_by(|&a, &b| {
                    self.get(a as usize, c)
                        .total_cmp(&self.get(b as usize, c))
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect()
    }
}

//! Regression engines used by the ABC methods.

mod binning;
pub mod forest;
pub mod gbm;
pub mod nn;
mod tree;
pub mod wls;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use binning::BinnedFeatures;
pub use forest::{Forest, ForestParams};
pub use gbm::{BoostedModel, GbmParams, Loss};
pub use nn::{NeuralFit, NnParams};
pub use wls::{wls_fit, WlsFit, WlsSolver};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Input(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }
}

fn check_fit_input(x: &Matrix, y_len: usize, w: Option<&[f64]>) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::Input("no training rows".into()));
    }
    if y_len != x.rows() {
        return Err(Error::Input(format!("{} rows but {y_len} targets", x.rows())));
    }
    if let Some(w) = w {
        if w.len() != x.rows() {
            return Err(Error::Input("weight length mismatch".into()));
        }
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Input("weights must be finite and non-negative".into()));
        }
        if !w.iter().any(|&v| v > 0.0) {
            return Err(Error::Input("all weights are zero".into()));
        }
    }
    Ok(())
}

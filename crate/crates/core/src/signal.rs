//! Dense feature blocks with paired gradient storage.

use crate::error::{Error, Result};
use ndarray::Array2;

/// An `N x C` block of signals (point features, lattice features, layer
/// activations). The gradient block, when allocated, always shape-matches
/// the data.
#[derive(Debug, Clone)]
pub struct SignalMatrix {
    pub data: Array2<f64>,
    pub grad: Option<Array2<f64>>,
}

impl SignalMatrix {
    pub fn new(data: Array2<f64>) -> Self {
        SignalMatrix { data, grad: None }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        SignalMatrix { data: Array2::zeros((rows, cols)), grad: None }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn ensure_grad(&mut self) -> &mut Array2<f64> {
        let shape = (self.data.nrows(), self.data.ncols());
        self.grad.get_or_insert_with(|| Array2::zeros(shape))
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite entry in {what}")));
        }
        Ok(())
    }
}

impl From<Array2<f64>> for SignalMatrix {
    fn from(data: Array2<f64>) -> Self {
        SignalMatrix::new(data)
    }
}

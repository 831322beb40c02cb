//! Training and evaluation data: synthetic environments, sliding windows over
//! range-time maps, and the shared dataset file format.

pub mod dataset;
pub mod synthetic;
pub mod windows;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};

/// One masked sample together with its surrounding feature window.
///
/// Feature rows are samples: row `j` holds `z_j` (not conjugated).
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPair {
    pub label: Vec<C64>,
    pub features: ComplexMatrix,
    pub truth: Option<ComplexMatrix>,
}

impl WindowPair {
    pub fn new(label: Vec<C64>, features: ComplexMatrix, truth: Option<ComplexMatrix>) -> Result<Self> {
        if features.cols() != label.len() {
            return Err(Error::ShapeMismatch(format!(
                "label of length {} with {}-column features",
                label.len(),
                features.cols()
            )));
        }
        if features.rows() == 0 {
            return Err(Error::ShapeMismatch("empty feature window".into()));
        }
        if let Some(t) = &truth {
            if t.shape() != (label.len(), label.len()) {
                return Err(Error::ShapeMismatch(format!("truth of shape {:?}", t.shape())));
            }
        }
        Ok(Self { label, features, truth })
    }

    pub fn dim(&self) -> usize {
        self.label.len()
    }

    pub fn window_size(&self) -> usize {
        self.features.rows()
    }
}

/// `sum_j z_j z_j^H` over the rows of a sample matrix.
///
/// With samples stored as rows this is the entrywise conjugate of the row
/// Gram `W^H W`.
pub fn outer_sum(samples: &ComplexMatrix) -> ComplexMatrix {
    crate::linalg::gram(samples).conj()
}

//! Gaussian negative log-likelihood loss and covariance error metrics.
//!
//! All values are the bare `z^H C^{-1} z + log|C|` with no additive
//! constant. Transposes in the real-valued formulas become conjugate
//! transposes for complex data.

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, HermitianPd, C64};

/// Whether an estimator emits the covariance or its inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    Precision,
    Covariance,
}

/// Loss split into its quadratic and log-determinant parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub quadratic: f64,
    pub logdet_part: f64,
}

impl LossValue {
    fn new(quadratic: f64, logdet_part: f64) -> Self {
        Self { value: quadratic + logdet_part, quadratic, logdet_part }
    }
}

/// Imaginary residue tolerated in a quadratic form of a Hermitian matrix.
const QUADRATIC_IMAG_TOL: f64 = 1e-10;

/// `z^H S z - log|S|` for a precision matrix `S`.
pub fn nll_inverse_param(z: &[C64], precision: &HermitianPd) -> Result<LossValue> {
    check_len(z, precision.dim())?;
    let q = precision.matrix().quadratic_form(z);
    if q.im.abs() > QUADRATIC_IMAG_TOL * (1.0 + q.re.abs()) {
        return Err(Error::NonFiniteValue(format!("quadratic form has imaginary part {}", q.im)));
    }
    Ok(LossValue::new(q.re, -precision.logdet()))
}

/// `z^H C^{-1} z + log|C|`.
pub fn nll_covariance_param(z: &[C64], covariance: &HermitianPd) -> Result<LossValue> {
    check_len(z, covariance.dim())?;
    Ok(LossValue::new(covariance.inverse_quadratic_form(z), covariance.logdet()))
}

/// Dispatches on the parameterization of `estimate`.
pub fn nll(z: &[C64], estimate: &HermitianPd, param: Parameterization) -> Result<LossValue> {
    match param {
        Parameterization::Precision => nll_inverse_param(z, estimate),
        Parameterization::Covariance => nll_covariance_param(z, estimate),
    }
}

/// `||C_hat - C||_F^2 / d^2`.
pub fn mse_frobenius(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> Result<f64> {
    if estimate.shape() != truth.shape() || !estimate.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "mse between {:?} and {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let d = estimate.rows() as f64;
    Ok(estimate.sub(truth).frobenius_norm_sq() / (d * d))
}

/// Mean of `nll_inverse_param` over `(label, precision)` pairs.
pub fn avg_nll<'a, I>(pairs: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [C64], &'a HermitianPd)>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for (index, (z, s)) in pairs.into_iter().enumerate() {
        total += nll_inverse_param(z, s).map_err(|e| Error::at(index, e))?.value;
        count += 1;
    }
    if count == 0 {
        return Err(Error::DegenerateInput("average NLL of an empty dataset".into()));
    }
    Ok(total / count as f64)
}

fn check_len(z: &[C64], d: usize) -> Result<()> {
    if z.len() != d {
        return Err(Error::ShapeMismatch(format!("sample of length {} for dimension {d}", z.len())));
    }
    Ok(())
}

/// Records the loss on a tape; `estimate` is a `d x d` node and `label` a
/// `d x 1` node.
pub fn tape_nll(tape: &mut Tape<'_>, label: NodeId, estimate: NodeId, param: Parameterization) -> Result<NodeId> {
    match param {
        Parameterization::Precision => {
            let quad = tape.quad_form(estimate, label);
            let ld = tape.logdet(estimate)?;
            let neg_ld = tape.scale(ld, -1.0);
            Ok(tape.add(quad, neg_ld))
        }
        Parameterization::Covariance => {
            let quad = tape.inv_quad_form(estimate, label)?;
            let ld = tape.logdet(estimate)?;
            Ok(tape.add(quad, ld))
        }
    }
}

//! Knowledge-aided architecture `C = A + alpha sum_j z_j z_j^H`.
//!
//! `A = B^H B + ridge I` for a free complex `B` and `alpha = exp(a)` for a
//! free real `a`, so both constraints hold for any parameter values.

use serde::{Deserialize, Serialize};

use super::Model;
use crate::autodiff::{NodeId, Tape};
use crate::data::outer_sum;
use crate::error::{Error, Result};
use crate::linalg::{gram, ComplexMatrix};
use crate::loss::Parameterization;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KaModelConfig {
    pub dim: usize,
    /// Window size used to initialise `alpha = 1 / |E|`.
    pub window: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

fn default_ridge() -> f64 {
    1e-6
}

impl KaModelConfig {
    pub fn new(dim: usize, window: usize) -> Self {
        Self { dim, window, ridge: default_ridge() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 || self.window < 1 {
            return Err(Error::InvalidConfig("KA model dim and window must be positive".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge < 1.0) {
            return Err(Error::InvalidConfig("KA ridge must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KaModel {
    config: KaModelConfig,
    b: ComplexMatrix,
    log_alpha: ComplexMatrix,
}

impl KaModel {
    /// Starts at `A = I`, `alpha = 1 / |E|`.
    pub fn init(config: KaModelConfig) -> Result<Self> {
        config.validate()?;
        let b = ComplexMatrix::identity(config.dim).scale((1.0 - config.ridge).sqrt());
        let log_alpha = ComplexMatrix::scalar(-(config.window as f64).ln());
        Ok(Self { config, b, log_alpha })
    }

    pub fn from_params(config: KaModelConfig, params: Vec<ComplexMatrix>) -> Result<Self> {
        config.validate()?;
        let [b, log_alpha]: [ComplexMatrix; 2] = params
            .try_into()
            .map_err(|p: Vec<_>| Error::ShapeMismatch(format!("KA model takes 2 parameter arrays, got {}", p.len())))?;
        if b.shape() != (config.dim, config.dim) || log_alpha.shape() != (1, 1) {
            return Err(Error::ShapeMismatch(format!("KA parameters of shape {:?} and {:?}", b.shape(), log_alpha.shape())));
        }
        Ok(Self { config, b, log_alpha })
    }

    pub fn config(&self) -> &KaModelConfig {
        &self.config
    }

    pub fn a_matrix(&self) -> ComplexMatrix {
        gram(&self.b).add_diagonal(self.config.ridge)
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha[(0, 0)].re.exp()
    }
}

impl Model for KaModel {
    fn parameterization(&self) -> Parameterization {
        Parameterization::Covariance
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    /// `B`, then `log alpha`.
    fn params(&self) -> Vec<&ComplexMatrix> {
        vec![&self.b, &self.log_alpha]
    }

    fn params_mut(&mut self) -> Vec<&mut ComplexMatrix> {
        vec![&mut self.b, &mut self.log_alpha]
    }

    fn record<'a>(&'a self, tape: &mut Tape<'a>, features: &'a ComplexMatrix) -> Result<NodeId> {
        if features.cols() != self.config.dim || features.rows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "window of shape {:?} for KA dim {}",
                features.shape(),
                self.config.dim
            )));
        }
        let b = tape.param(&self.b);
        let log_alpha = tape.param(&self.log_alpha);
        let bb = tape.gram(b);
        let ridge = tape.constant(ComplexMatrix::identity(self.config.dim).scale(self.config.ridge));
        let a = tape.add(bb, ridge);
        let alpha = tape.exp(log_alpha);
        let sum = tape.constant(outer_sum(features));
        let shrunk = tape.scale_by(sum, alpha);
        Ok(tape.add(a, shrunk))
    }
}

/// Covariance estimate `A + alpha sum_j z_j z_j^H` for one window.
pub fn ka_forward(model: &KaModel, window: &ComplexMatrix) -> Result<ComplexMatrix> {
    model.estimate(window)
}

/// The same formula for arbitrary `A` and `alpha >= 0`.
pub fn ka_formula(a: &ComplexMatrix, alpha: f64, window: &ComplexMatrix) -> ComplexMatrix {
    let mut out = a.clone();
    out.add_scaled(alpha, &outer_sum(window));
    out
}

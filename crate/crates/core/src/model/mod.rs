//! Trainable covariance estimators.
//!
//! [`SsceModel`] is the attention network that maps a feature window to an
//! inverse covariance. [`KaModel`] is the two-parameter knowledge-aided
//! architecture `A + alpha sum_j z_j z_j^H`, which predicts the covariance.

pub mod checkpoint;
pub mod ka;
pub mod ssce;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, OptimizerState};
pub use ka::{ka_formula, ka_forward, KaModel, KaModelConfig};
pub use ssce::{ssce_forward, AttentionLayer, EmbeddingNet, LogitOrder, SsceConfig, SsceModel};

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::error::Result;
use crate::linalg::ComplexMatrix;
use crate::loss::Parameterization;

/// A differentiable window-to-matrix estimator with a flat parameter list.
pub trait Model {
    /// What [`Model::record`] outputs.
    fn parameterization(&self) -> Parameterization;

    fn dim(&self) -> usize;

    /// Parameters in declared order; this order is also the order in which
    /// [`Model::record`] registers them on the tape.
    fn params(&self) -> Vec<&ComplexMatrix>;

    fn params_mut(&mut self) -> Vec<&mut ComplexMatrix>;

    /// Records the forward pass for one `|E| x d` feature window and returns
    /// the `d x d` output node.
    fn record<'a>(&'a self, tape: &mut Tape<'a>, features: &'a ComplexMatrix) -> Result<NodeId>;

    /// Forward pass without keeping the tape.
    fn estimate(&self, features: &ComplexMatrix) -> Result<ComplexMatrix> {
        let mut tape = Tape::new();
        let out = self.record(&mut tape, features)?;
        tape.check_finite()?;
        Ok(tape.value(out).clone())
    }

    fn num_scalars(&self) -> usize {
        self.params().iter().map(|p| 2 * p.rows() * p.cols()).sum()
    }
}

/// Either trainable architecture, tagged for configs and checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Ssce(SsceConfig),
    Ka(KaModelConfig),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Ssce(SsceConfig::default())
    }
}

impl ModelConfig {
    pub fn dim(&self) -> usize {
        match self {
            ModelConfig::Ssce(c) => c.dim,
            ModelConfig::Ka(c) => c.dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Ssce(c) => c.validate(),
            ModelConfig::Ka(c) => c.validate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Ssce(SsceModel),
    Ka(KaModel),
}

impl AnyModel {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match config {
            ModelConfig::Ssce(c) => AnyModel::Ssce(SsceModel::init(c.clone(), seed)?),
            ModelConfig::Ka(c) => AnyModel::Ka(KaModel::init(c.clone())?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            AnyModel::Ssce(m) => ModelConfig::Ssce(m.config().clone()),
            AnyModel::Ka(m) => ModelConfig::Ka(m.config().clone()),
        }
    }
}

impl Model for AnyModel {
    fn parameterization(&self) -> Parameterization {
        match self {
            AnyModel::Ssce(m) => m.parameterization(),
            AnyModel::Ka(m) => m.parameterization(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            AnyModel::Ssce(m) => m.dim(),
            AnyModel::Ka(m) => m.dim(),
        }
    }

    fn params(&self) -> Vec<&ComplexMatrix> {
        match self {
            AnyModel::Ssce(m) => m.params(),
            AnyModel::Ka(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut ComplexMatrix> {
        match self {
            AnyModel::Ssce(m) => m.params_mut(),
            AnyModel::Ka(m) => m.params_mut(),
        }
    }

    fn record<'a>(&'a self, tape: &mut Tape<'a>, features: &'a ComplexMatrix) -> Result<NodeId> {
        match self {
            AnyModel::Ssce(m) => m.record(tape, features),
            AnyModel::Ka(m) => m.record(tape, features),
        }
    }
}

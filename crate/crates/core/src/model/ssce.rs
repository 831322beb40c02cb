//! Attention-based inverse-covariance network.
//!
//! Each of `P` towers applies `L` self-attention layers to the feature
//! window `X_0` (one sample per row):
//!
//! ```text
//! A_l = softmax_rows(|Q_l(X) K_l(X)^H| / sqrt(d))
//! X_l = A_l V_l(X_{l-1})
//! ```
//!
//! and emits `X_L^H X_L / |E|`. The output is the tower average plus
//! `ridge * I`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Model;
use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::loss::Parameterization;
use crate::rng::{purpose_stream, Purpose};

/// Where the `1/sqrt(d)` logit scaling sits relative to the modulus. The two
/// orders agree exactly for a positive scale; both are kept so that can be
/// checked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogitOrder {
    #[default]
    ModulusThenScale,
    ScaleThenModulus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsceConfig {
    pub dim: usize,
    /// Hidden layers per embedding network.
    pub hidden_layers: usize,
    /// Width of each hidden layer.
    pub width: usize,
    /// Attention layers per tower.
    pub layers: usize,
    /// Parallel towers averaged at the output.
    pub towers: usize,
    pub ridge: f64,
    pub logit_order: LogitOrder,
}

impl Default for SsceConfig {
    fn default() -> Self {
        Self { dim: 6, hidden_layers: 3, width: 50, layers: 2, towers: 10, ridge: 1e-6, logit_order: LogitOrder::default() }
    }
}

impl SsceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.dim < 1 {
            return bad("model dim must be at least 1");
        }
        if self.layers < 1 || self.towers < 1 {
            return bad("layers and towers must be at least 1");
        }
        if self.hidden_layers > 0 && self.width < 1 {
            return bad("hidden width must be at least 1");
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return bad("ridge must be finite and non-negative");
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.dim];
        w.extend(std::iter::repeat_n(self.width, self.hidden_layers));
        w.push(self.dim);
        w
    }
}

/// Complex MLP `d -> width^h -> d`, split-ReLU between affine maps.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingNet {
    /// `in x out`, applied as `X W`.
    pub weights: Vec<ComplexMatrix>,
    /// `1 x out` row vectors.
    pub biases: Vec<ComplexMatrix>,
}

impl EmbeddingNet {
    fn init(widths: &[usize], sample: &mut impl FnMut(usize) -> f64) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in widths.windows(2) {
            let (fan_in, out) = (pair[0], pair[1]);
            weights.push(ComplexMatrix::from_fn(fan_in, out, |_, _| C64::new(sample(fan_in), sample(fan_in))));
            biases.push(ComplexMatrix::zeros(1, out));
        }
        Self { weights, biases }
    }

    fn record<'a>(&'a self, tape: &mut Tape<'a>, x: NodeId) -> NodeId {
        let mut h = x;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if i > 0 {
                h = tape.split_relu(h);
            }
            let w = tape.param(w);
            let b = tape.param(b);
            let y = tape.matmul(h, w);
            h = tape.add_row_bias(y, b);
        }
        h
    }

    /// Plain forward pass.
    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let out = self.record(&mut tape, input);
        tape.value(out).clone()
    }

    fn params(&self) -> impl Iterator<Item = &ComplexMatrix> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b])
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut ComplexMatrix> {
        self.weights.iter_mut().zip(self.biases.iter_mut()).flat_map(|(w, b)| [w, b])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayer {
    pub key: EmbeddingNet,
    pub query: EmbeddingNet,
    pub value: EmbeddingNet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SsceModel {
    config: SsceConfig,
    /// `towers[p][l]`
    towers: Vec<Vec<AttentionLayer>>,
}

impl SsceModel {
    /// Weights get independent `N(0, 1/fan_in)` real and imaginary parts,
    /// biases start at zero. Draw order is the declared parameter order.
    pub fn init(config: SsceConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = purpose_stream(seed, Purpose::Init, 0);
        let mut sample = |fan_in: usize| Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("finite sd").sample(&mut rng);
        let widths = config.widths();
        let towers = (0..config.towers)
            .map(|_| {
                (0..config.layers)
                    .map(|_| AttentionLayer {
                        key: EmbeddingNet::init(&widths, &mut sample),
                        query: EmbeddingNet::init(&widths, &mut sample),
                        value: EmbeddingNet::init(&widths, &mut sample),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { config, towers })
    }

    /// Builds a model around explicit parameters in declared order.
    pub fn from_params(config: SsceConfig, params: Vec<ComplexMatrix>) -> Result<Self> {
        let mut model = Self::init(config, 0)?;
        let slots = model.params_mut();
        if slots.len() != params.len() {
            return Err(Error::ShapeMismatch(format!("{} parameter arrays, model has {}", params.len(), slots.len())));
        }
        for (i, (slot, p)) in slots.into_iter().zip(params).enumerate() {
            if slot.shape() != p.shape() {
                return Err(Error::at(i, Error::ShapeMismatch(format!("{:?} vs {:?}", p.shape(), slot.shape()))));
            }
            *slot = p;
        }
        Ok(model)
    }

    pub fn config(&self) -> &SsceConfig {
        &self.config
    }

    pub fn towers(&self) -> &[Vec<AttentionLayer>] {
        &self.towers
    }

    fn check_window(&self, features: &ComplexMatrix) -> Result<()> {
        if features.cols() != self.config.dim || features.rows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "window of shape {:?} for model dim {}",
                features.shape(),
                self.config.dim
            )));
        }
        Ok(())
    }

    fn record_layer<'a>(&'a self, tape: &mut Tape<'a>, layer: &'a AttentionLayer, x: NodeId) -> (NodeId, NodeId) {
        let k = layer.key.record(tape, x);
        let q = layer.query.record(tape, x);
        let v = layer.value.record(tape, x);
        let qk = tape.matmul_adjoint(q, k);
        let inv_sqrt_d = 1.0 / (self.config.dim as f64).sqrt();
        let logits = match self.config.logit_order {
            LogitOrder::ModulusThenScale => {
                let m = tape.modulus(qk);
                tape.scale(m, inv_sqrt_d)
            }
            LogitOrder::ScaleThenModulus => {
                let s = tape.scale(qk, inv_sqrt_d);
                tape.modulus(s)
            }
        };
        let weights = tape.row_softmax(logits);
        (tape.matmul(weights, v), weights)
    }

    fn record_towers<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        features: &'a ComplexMatrix,
        mut on_weights: impl FnMut(usize, usize, NodeId),
    ) -> Result<NodeId> {
        self.check_window(features)?;
        let x0 = tape.constant_ref(features);
        let n = features.rows() as f64;
        let mut heads = Vec::with_capacity(self.towers.len());
        for (p, tower) in self.towers.iter().enumerate() {
            let mut x = x0;
            for (l, layer) in tower.iter().enumerate() {
                let (next, weights) = self.record_layer(tape, layer, x);
                on_weights(p, l, weights);
                x = next;
            }
            let g = tape.gram(x);
            heads.push(tape.scale(g, 1.0 / n));
        }
        let avg = tape.mean(&heads);
        if self.config.ridge > 0.0 {
            let ridge = tape.constant(ComplexMatrix::identity(self.config.dim).scale(self.config.ridge));
            Ok(tape.add(avg, ridge))
        } else {
            Ok(avg)
        }
    }

    /// Softmax weight matrices `[tower][layer]` for one window.
    pub fn attention_maps(&self, features: &ComplexMatrix) -> Result<Vec<Vec<ComplexMatrix>>> {
        let mut tape = Tape::new();
        let mut ids = Vec::new();
        self.record_towers(&mut tape, features, |p, l, id| ids.push((p, l, id)))?;
        let mut maps = vec![Vec::new(); self.towers.len()];
        for (p, _, id) in ids {
            maps[p].push(tape.value(id).clone());
        }
        Ok(maps)
    }
}

impl Model for SsceModel {
    fn parameterization(&self) -> Parameterization {
        Parameterization::Precision
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    /// Tower, then layer, then key/query/value, then affine map, then
    /// weight before bias.
    fn params(&self) -> Vec<&ComplexMatrix> {
        self.towers
            .iter()
            .flatten()
            .flat_map(|layer| layer.key.params().chain(layer.query.params()).chain(layer.value.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut ComplexMatrix> {
        self.towers
            .iter_mut()
            .flatten()
            .flat_map(|layer| {
                layer.key.params_mut().chain(layer.query.params_mut()).chain(layer.value.params_mut())
            })
            .collect()
    }

    fn record<'a>(&'a self, tape: &mut Tape<'a>, features: &'a ComplexMatrix) -> Result<NodeId> {
        self.record_towers(tape, features, |_, _, _| {})
    }
}

/// Inverse covariance estimate for one window.
pub fn ssce_forward(model: &SsceModel, window: &ComplexMatrix) -> Result<ComplexMatrix> {
    model.estimate(window)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SsceConfig {
        SsceConfig { dim: 3, hidden_layers: 1, width: 5, layers: 2, towers: 2, ..SsceConfig::default() }
    }

    #[test]
    fn parameter_count_and_order() {
        let cfg = small();
        let m = SsceModel::init(cfg.clone(), 1).unwrap();
        // towers * layers * 3 nets * 2 affine maps * (weight, bias)
        assert_eq!(m.params().len(), 2 * 2 * 3 * 2 * 2);
        assert_eq!(m.params()[0].shape(), (3, 5));
        assert_eq!(m.params()[1].shape(), (1, 5));
        assert_eq!(m.params()[2].shape(), (5, 3));
        let mut tape = Tape::new();
        let w = ComplexMatrix::identity(3);
        m.record(&mut tape, &w).unwrap();
        assert_eq!(tape.num_params(), m.params().len());
    }

    #[test]
    fn init_is_seeded() {
        let a = SsceModel::init(small(), 5).unwrap();
        let b = SsceModel::init(small(), 5).unwrap();
        let c = SsceModel::init(small(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let rebuilt = SsceModel::from_params(small(), a.params().into_iter().cloned().collect()).unwrap();
        assert_eq!(rebuilt, a);
    }

    #[test]
    fn rejects_wrong_window() {
        let m = SsceModel::init(small(), 0).unwrap();
        assert!(matches!(m.estimate(&ComplexMatrix::zeros(4, 2)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn logit_orders_agree() {
        let cfg = small();
        let a = SsceModel::init(cfg.clone(), 3).unwrap();
        let b = SsceModel::from_params(
            SsceConfig { logit_order: LogitOrder::ScaleThenModulus, ..cfg },
            a.params().into_iter().cloned().collect(),
        )
        .unwrap();
        let w = ComplexMatrix::from_fn(4, 3, |i, j| C64::new((i + j) as f64 * 0.3 - 0.5, i as f64 * 0.1));
        let diff = a.estimate(&w).unwrap().sub(&b.estimate(&w).unwrap()).max_abs();
        assert!(diff < 1e-12, "{diff}");
    }
}

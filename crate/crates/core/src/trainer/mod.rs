//! Self-supervised training: minimise the masked-sample NLL over windows.

pub mod evaluate;

pub use evaluate::{
    evaluate, evaluate_tuned, Baseline, CovarianceEstimator, Detector, EvalConfig, EvalReport, EvalTiming, Estimate,
    MetricSet, ModelEstimator, ShrinkageFamily, TunedAlphas,
};

use std::borrow::Cow;
use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradient, Tape};
use crate::data::synthetic::{KaConfig, SyntheticConfig};
use crate::data::WindowPair;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, HermitianPd, C64};
use crate::loss::{nll, tape_nll};
use crate::model::{Model, OptimizerState};
use crate::rng::{purpose_stream, Purpose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: u64,
    /// Windows per step; their gradients are averaged.
    pub batch_size: usize,
    /// Initial learning rate of the cosine schedule.
    pub learning_rate: f64,
    /// Learning rate reached at the last iteration.
    pub final_learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Iterations between checkpoints; 0 writes only the final one.
    pub checkpoint_period: u64,
    /// Iterations between log records.
    pub eval_period: u64,
    /// Consecutive bad steps tolerated before aborting.
    pub divergence_patience: u64,
    /// Losses above this count as bad steps.
    pub divergence_loss: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            iterations: 20_000,
            batch_size: 1,
            learning_rate: 1e-3,
            final_learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(10.0),
            seed: 0,
            checkpoint_period: 0,
            eval_period: 1000,
            divergence_patience: 100,
            divergence_loss: 1e6,
        }
    }

    pub fn paper() -> Self {
        Self { iterations: 100_000, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.iterations < 1 || self.batch_size < 1 {
            return bad("iterations and batch_size must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.final_learning_rate >= 0.0 && self.final_learning_rate <= self.learning_rate) {
            return bad("final_learning_rate must lie in [0, learning_rate]");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("need 0 <= beta1, beta2 < 1 and eps > 0");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        if self.eval_period < 1 || self.divergence_patience < 1 {
            return bad("eval_period and divergence_patience must be at least 1");
        }
        Ok(())
    }

    /// Cosine decay from `learning_rate` to `final_learning_rate`.
    pub fn learning_rate_at(&self, iteration: u64) -> f64 {
        let t = if self.iterations <= 1 { 1.0 } else { iteration as f64 / (self.iterations - 1) as f64 };
        let (lr0, lr1) = (self.learning_rate, self.final_learning_rate);
        lr1 + 0.5 * (lr0 - lr1) * (1.0 + (PI * t.min(1.0)).cos())
    }
}

/// Adaptive-moment optimiser acting on real and imaginary parts separately.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    state: OptimizerState,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, params: &[&ComplexMatrix]) -> Self {
        let zeros: Vec<ComplexMatrix> = params.iter().map(|p| ComplexMatrix::zeros(p.rows(), p.cols())).collect();
        Self::with_state(cfg, OptimizerState { step: 0, first: zeros.clone(), second: zeros })
    }

    pub fn with_state(cfg: &TrainConfig, state: OptimizerState) -> Self {
        Self { beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps, state }
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn step(&mut self, params: Vec<&mut ComplexMatrix>, grad: &Gradient, lr: f64) -> Result<()> {
        if params.len() != grad.len() || params.len() != self.state.first.len() {
            return Err(Error::ShapeMismatch("optimizer, gradient and parameters disagree".into()));
        }
        self.state.step += 1;
        let t = self.state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (k, p) in params.into_iter().enumerate() {
            let g = grad.get(k);
            let m = self.state.first[k].as_mut_slice();
            let v = self.state.second[k].as_mut_slice();
            for (((x, gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                mi.re = b1 * mi.re + (1.0 - b1) * gi.re;
                mi.im = b1 * mi.im + (1.0 - b1) * gi.im;
                vi.re = b2 * vi.re + (1.0 - b2) * gi.re * gi.re;
                vi.im = b2 * vi.im + (1.0 - b2) * gi.im * gi.im;
                let dre = lr * (mi.re / c1) / ((vi.re / c2).sqrt() + eps);
                let dim = lr * (mi.im / c1) / ((vi.im / c2).sqrt() + eps);
                *x -= C64::new(dre, dim);
            }
        }
        Ok(())
    }
}

/// Where training windows come from.
pub enum TrainData<'a> {
    /// A fresh synthetic environment per window.
    Synthetic(SyntheticConfig),
    /// A fresh knowledge-aided environment per window.
    Ka(KaConfig),
    /// A finite dataset, reshuffled every epoch.
    Pairs(&'a [WindowPair]),
}

impl TrainData<'_> {
    pub fn dim(&self) -> Option<usize> {
        match self {
            TrainData::Synthetic(c) => Some(c.dim),
            TrainData::Ka(c) => Some(c.dim),
            TrainData::Pairs(p) => p.first().map(|p| p.dim()),
        }
    }
}

struct Stream<'a> {
    data: &'a TrainData<'a>,
    seed: u64,
    epoch: Option<(u64, Vec<usize>)>,
}

impl<'a> Stream<'a> {
    fn pair(&mut self, index: u64) -> Result<Cow<'a, WindowPair>> {
        match self.data {
            TrainData::Synthetic(c) => Ok(Cow::Owned(c.environment(index)?)),
            TrainData::Ka(c) => Ok(Cow::Owned(c.environment(index)?)),
            TrainData::Pairs(pairs) => {
                let n = pairs.len() as u64;
                let epoch = index / n;
                if self.epoch.as_ref().map(|e| e.0) != Some(epoch) {
                    let mut order: Vec<usize> = (0..pairs.len()).collect();
                    order.shuffle(&mut purpose_stream(self.seed, Purpose::Shuffle, epoch));
                    self.epoch = Some((epoch, order));
                }
                let order = &self.epoch.as_ref().expect("just set").1;
                Ok(Cow::Borrowed(&pairs[order[(index % n) as usize]]))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: u64,
    /// Mean training loss over the finite steps since the previous record.
    pub train_loss: f64,
    pub heldout_nll: Option<f64>,
    pub learning_rate: f64,
    pub skipped_steps: u64,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    /// CSV with one row per record; `include_clock = false` drops the
    /// wall-clock column so logs of identical runs compare byte for byte.
    pub fn write_csv(&self, out: impl Write, include_clock: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut header = vec!["iteration", "train_loss", "heldout_nll", "learning_rate", "skipped_steps"];
        if include_clock {
            header.push("wall_clock_s");
        }
        w.write_record(&header).map_err(io)?;
        for r in &self.records {
            let mut row = vec![
                r.iteration.to_string(),
                r.train_loss.to_string(),
                r.heldout_nll.map(|v| v.to_string()).unwrap_or_default(),
                r.learning_rate.to_string(),
                r.skipped_steps.to_string(),
            ];
            if include_clock {
                row.push(format!("{:.3}", r.wall_clock_s));
            }
            w.write_record(&row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Records with the wall-clock field zeroed.
    pub fn without_clock(&self) -> Vec<LogRecord> {
        self.records.iter().map(|r| LogRecord { wall_clock_s: 0.0, ..r.clone() }).collect()
    }
}

/// Loss and parameter gradient for one window.
pub fn loss_and_gradient<M: Model>(model: &M, pair: &WindowPair) -> Result<(f64, Gradient)> {
    let mut tape = Tape::new();
    let out = model.record(&mut tape, &pair.features)?;
    let label = tape.constant(ComplexMatrix::column(&pair.label));
    let loss = tape_nll(&mut tape, label, out, model.parameterization())?;
    let value = tape.scalar(loss)?;
    Ok((value, tape.backward(loss)?))
}

/// Mean NLL of a model over held-out windows.
pub fn heldout_nll<M: Model>(model: &M, pairs: &[WindowPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::DegenerateInput("held-out set is empty".into()));
    }
    let mut total = 0.0;
    for (i, p) in pairs.iter().enumerate() {
        let est = model.estimate(&p.features).map_err(|e| Error::at(i, e))?;
        let pd = HermitianPd::with_tolerance(&est, 1e-9).map_err(|e| Error::at(i, e))?;
        total += nll(&p.label, &pd, model.parameterization()).map_err(|e| Error::at(i, e))?.value;
    }
    Ok(total / pairs.len() as f64)
}

/// Stateful training loop that can stop and resume exactly.
pub struct Trainer {
    cfg: TrainConfig,
    adam: Adam,
    iteration: u64,
}

impl Trainer {
    pub fn new<M: Model>(cfg: TrainConfig, model: &M) -> Result<Self> {
        cfg.validate()?;
        let adam = Adam::new(&cfg, &model.params());
        Ok(Self { cfg, adam, iteration: 0 })
    }

    /// Continues from a checkpointed optimiser state at `iteration`.
    pub fn resume<M: Model>(cfg: TrainConfig, model: &M, state: OptimizerState, iteration: u64) -> Result<Self> {
        cfg.validate()?;
        let params = model.params();
        let congruent = state.first.len() == params.len()
            && state.second.len() == params.len()
            && params.iter().zip(&state.first).zip(&state.second).all(|((p, m), v)| p.shape() == m.shape() && p.shape() == v.shape());
        if !congruent {
            return Err(Error::ShapeMismatch("optimizer state does not match the model".into()));
        }
        Ok(Self { adam: Adam::with_state(&cfg, state), cfg, iteration })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn optimizer_state(&self) -> &OptimizerState {
        self.adam.state()
    }

    /// Trains up to `cfg.iterations`. `on_checkpoint` is called every
    /// `checkpoint_period` iterations and at the end.
    ///
    /// On divergence the model keeps the parameters of the last good step
    /// and `on_checkpoint` is called once more before the error is returned.
    pub fn run<M: Model>(
        &mut self,
        model: &mut M,
        data: &TrainData<'_>,
        heldout: &[WindowPair],
        mut on_checkpoint: impl FnMut(&M, &Trainer) -> Result<()>,
    ) -> Result<TrainLog> {
        if let Some(d) = data.dim() {
            if d != model.dim() {
                return Err(Error::ShapeMismatch(format!("data of dim {d} for a model of dim {}", model.dim())));
            }
        } else {
            return Err(Error::DegenerateInput("training dataset is empty".into()));
        }
        let mut stream = Stream { data, seed: self.cfg.seed, epoch: None };
        let start = Instant::now();
        let mut log = TrainLog::default();
        let (mut loss_sum, mut loss_count, mut skipped) = (0.0, 0u64, 0u64);
        let mut bad_run = 0u64;
        let batch = self.cfg.batch_size as u64;

        while self.iteration < self.cfg.iterations {
            let it = self.iteration;
            let lr = self.cfg.learning_rate_at(it);
            let mut step = self.batch_gradient(model, &mut stream, it * batch);
            let loss = step.as_ref().map(|s| s.0).unwrap_or(f64::NAN);
            let finite = step.is_ok();
            if finite && loss <= self.cfg.divergence_loss {
                bad_run = 0;
            } else {
                bad_run += 1;
            }
            if let Ok((value, grad)) = &mut step {
                loss_sum += *value;
                loss_count += 1;
                if let Some(max) = self.cfg.clip_norm {
                    let norm = grad.global_norm();
                    if norm > max {
                        grad.scale(max / norm);
                    }
                }
                self.adam.step(model.params_mut(), grad, lr)?;
            } else {
                skipped += 1;
            }
            self.iteration += 1;

            if bad_run >= self.cfg.divergence_patience {
                on_checkpoint(model, self)?;
                return Err(Error::DivergenceDetected { iteration: self.iteration, loss });
            }
            if self.iteration.is_multiple_of(self.cfg.eval_period) || self.iteration == self.cfg.iterations {
                let heldout_nll = if heldout.is_empty() { None } else { Some(heldout_nll(model, heldout)?) };
                log.records.push(LogRecord {
                    iteration: self.iteration,
                    train_loss: if loss_count > 0 { loss_sum / loss_count as f64 } else { f64::NAN },
                    heldout_nll,
                    learning_rate: lr,
                    skipped_steps: skipped,
                    wall_clock_s: start.elapsed().as_secs_f64(),
                });
                log::info!("iteration {} train loss {:.5}", self.iteration, loss_sum / loss_count.max(1) as f64);
                (loss_sum, loss_count, skipped) = (0.0, 0, 0);
            }
            let period = self.cfg.checkpoint_period;
            if period > 0 && self.iteration.is_multiple_of(period) && self.iteration < self.cfg.iterations {
                on_checkpoint(model, self)?;
            }
        }
        on_checkpoint(model, self)?;
        Ok(log)
    }

    fn batch_gradient<M: Model>(&self, model: &M, stream: &mut Stream<'_>, first: u64) -> Result<(f64, Gradient)> {
        let batch = self.cfg.batch_size as u64;
        let pair = stream.pair(first)?;
        let (mut loss, mut grad) = loss_and_gradient(model, &pair)?;
        for b in 1..batch {
            let pair = stream.pair(first + b)?;
            let (l, g) = loss_and_gradient(model, &pair)?;
            loss += l;
            grad.accumulate(1.0, &g);
        }
        if batch > 1 {
            loss /= batch as f64;
            grad.scale(1.0 / batch as f64);
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteValue(format!("loss {loss} or its gradient")));
        }
        Ok((loss, grad))
    }
}

/// Trains a fresh optimiser from iteration 0 without checkpoints.
pub fn train<M: Model>(model: &mut M, data: &TrainData<'_>, cfg: &TrainConfig, heldout: &[WindowPair]) -> Result<TrainLog> {
    Trainer::new(cfg.clone(), model)?.run(model, data, heldout, |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KaModel, KaModelConfig};

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = TrainConfig { iterations: 11, ..TrainConfig::desk() };
        assert!((cfg.learning_rate_at(0) - 1e-3).abs() < 1e-18);
        assert!((cfg.learning_rate_at(10) - 1e-4).abs() < 1e-18);
        assert!((cfg.learning_rate_at(5) - 5.5e-4).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let ka = KaConfig { n_envs: 10, ..KaConfig::example(3) };
        let mut model = KaModel::init(KaModelConfig::new(4, 20)).unwrap();
        let before = model.clone();
        let cfg = TrainConfig { iterations: 50, learning_rate: 0.0, final_learning_rate: 0.0, eval_period: 10, ..TrainConfig::desk() };
        let log = train(&mut model, &TrainData::Ka(ka), &cfg, &[]).unwrap();
        assert_eq!(model, before);
        assert_eq!(log.records.len(), 5);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut model = KaModel::init(KaModelConfig::new(3, 20)).unwrap();
        let data = TrainData::Ka(KaConfig::example(0));
        assert!(matches!(train(&mut model, &data, &TrainConfig::desk(), &[]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn epoch_shuffle_visits_every_pair() {
        let pairs = KaConfig { n_envs: 7, ..KaConfig::example(1) }.generate().unwrap();
        let data = TrainData::Pairs(&pairs);
        let mut stream = Stream { data: &data, seed: 4, epoch: None };
        for epoch in 0..3u64 {
            let mut seen: Vec<usize> = (0..7)
                .map(|k| {
                    let p = stream.pair(epoch * 7 + k).unwrap();
                    pairs.iter().position(|q| *q == *p).unwrap()
                })
                .collect();
            seen.sort();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
    }
}

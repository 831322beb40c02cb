//! Evaluation of estimators on a window set: MSE, NLL, amplitude error and
//! detection pAUC.
//!
//! Detection protocol: every label gives one H0 score; each of its
//! `injections` planted copies gives one H1 score and one amplitude error.
//! Injection `k` of window `i` draws its phase from injection stream
//! `i * injections + k`, so every estimator sees identical targets.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{ka_shrink, rscm, scm, toeplitz_ap, tune_alpha, Goal, ShrinkageGrid, ToeplitzConfig};
use crate::data::WindowPair;
use crate::downstream::{amf, anmf, inject, roc, wls_amplitude, RocCurve, TargetSpec};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, HermitianPd, C64};
use crate::loss::{mse_frobenius, nll, Parameterization};
use crate::model::Model;
use crate::rng::{purpose_stream, Purpose};

/// What an estimator returns for one window.
#[derive(Clone, Debug, PartialEq)]
pub enum Estimate {
    Covariance(ComplexMatrix),
    Precision(ComplexMatrix),
}

pub trait CovarianceEstimator {
    fn name(&self) -> String;
    fn estimate(&self, pair: &WindowPair) -> Result<Estimate>;
}

#[derive(Clone, Debug, PartialEq)]
pub enum Baseline {
    /// Sample covariance plus `ridge I`.
    Scm { ridge: f64 },
    Rscm { alpha: f64 },
    Ka { alpha: f64, global_scm: ComplexMatrix },
    Toeplitz(ToeplitzConfig),
    /// The attached ground-truth covariance.
    Oracle,
}

impl CovarianceEstimator for Baseline {
    fn name(&self) -> String {
        match self {
            Baseline::Scm { .. } => "scm".into(),
            Baseline::Rscm { .. } => "rscm".into(),
            Baseline::Ka { .. } => "ka".into(),
            Baseline::Toeplitz(_) => "toeplitz".into(),
            Baseline::Oracle => "oracle".into(),
        }
    }

    fn estimate(&self, pair: &WindowPair) -> Result<Estimate> {
        let w = &pair.features;
        Ok(Estimate::Covariance(match self {
            Baseline::Scm { ridge } => scm(w).add_diagonal(*ridge),
            Baseline::Rscm { alpha } => rscm(w, *alpha)?.into_matrix(),
            Baseline::Ka { alpha, global_scm } => ka_shrink(w, *alpha, global_scm)?.into_matrix(),
            Baseline::Toeplitz(cfg) => toeplitz_ap(w, cfg)?.estimate,
            Baseline::Oracle => {
                pair.truth.clone().ok_or_else(|| Error::DegenerateInput("oracle needs ground-truth covariances".into()))?
            }
        }))
    }
}

/// Wraps a trained model under a report name.
pub struct ModelEstimator<'m, M> {
    pub name: String,
    pub model: &'m M,
}

impl<M: Model> CovarianceEstimator for ModelEstimator<'_, M> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn estimate(&self, pair: &WindowPair) -> Result<Estimate> {
        let out = self.model.estimate(&pair.features)?;
        Ok(match self.model.parameterization() {
            Parameterization::Precision => Estimate::Precision(out),
            Parameterization::Covariance => Estimate::Covariance(out),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Amf,
    Anmf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSet {
    pub mse: bool,
    pub nll: bool,
    pub err: bool,
    pub pauc: bool,
}

impl Default for MetricSet {
    fn default() -> Self {
        Self::all()
    }
}

impl MetricSet {
    pub fn all() -> Self {
        Self { mse: true, nll: true, err: true, pauc: true }
    }

    pub fn none() -> Self {
        Self { mse: false, nll: false, err: false, pauc: false }
    }

    pub fn is_empty(&self) -> bool {
        !(self.mse || self.nll || self.err || self.pauc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub target: TargetSpec,
    #[serde(default = "default_max_fpr")]
    pub max_fpr: f64,
    /// Planted copies per label.
    #[serde(default = "default_injections")]
    pub injections: usize,
    /// Seed of the injection streams.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_detector")]
    pub detector: Detector,
    #[serde(default)]
    pub metrics: MetricSet,
}

fn default_max_fpr() -> f64 {
    0.1
}

fn default_injections() -> usize {
    1
}

fn default_detector() -> Detector {
    Detector::Amf
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::new(TargetSpec::default())
    }
}

impl EvalConfig {
    pub fn new(target: TargetSpec) -> Self {
        Self {
            target,
            max_fpr: default_max_fpr(),
            injections: default_injections(),
            seed: 0,
            detector: default_detector(),
            metrics: MetricSet::all(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        if !(self.max_fpr > 0.0 && self.max_fpr <= 1.0) {
            return Err(Error::InvalidConfig("max_fpr must lie in (0, 1]".into()));
        }
        if self.injections < 1 {
            return Err(Error::InvalidConfig("injections must be at least 1".into()));
        }
        Ok(())
    }
}

/// Shrinkage weight chosen for each metric of a tuned baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunedAlphas {
    pub mse: Option<f64>,
    pub nll: Option<f64>,
    pub err: Option<f64>,
    pub pauc01: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub estimator: String,
    pub windows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nll: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pauc01: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pauc_raw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pauc_mcclish: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuned_alpha: Option<TunedAlphas>,
    #[serde(skip)]
    pub roc: Option<RocCurve>,
}

impl EvalReport {
    fn empty(estimator: String, windows: usize) -> Self {
        Self {
            estimator,
            windows,
            mse: None,
            nll: None,
            err: None,
            pauc01: None,
            pauc_raw: None,
            pauc_mcclish: None,
            tuned_alpha: None,
            roc: None,
        }
    }
}

/// Wall-clock cost of producing the estimates, kept out of [`EvalReport`]
/// so reports of identical runs are identical.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalTiming {
    pub estimator: String,
    pub windows: usize,
    pub total_s: f64,
    pub mean_per_window_s: f64,
}

pub fn evaluate(estimator: &dyn CovarianceEstimator, pairs: &[WindowPair], cfg: &EvalConfig) -> Result<(EvalReport, EvalTiming)> {
    cfg.validate()?;
    let name = estimator.name();
    let mut report = EvalReport::empty(name.clone(), pairs.len());
    let mut timing = EvalTiming { estimator: name, windows: pairs.len(), total_s: 0.0, mean_per_window_s: 0.0 };
    let m = cfg.metrics;
    if m.is_empty() {
        return Ok((report, timing));
    }
    if pairs.is_empty() {
        return Err(Error::DegenerateInput("evaluation set is empty".into()));
    }
    let with_truth = m.mse && pairs.iter().all(|p| p.truth.is_some());
    let d = pairs[0].dim();
    let steering = cfg.target.steering(d);

    let (mut mse_sum, mut nll_sum, mut err_sum) = (0.0, 0.0, 0.0);
    let mut h0 = Vec::with_capacity(pairs.len());
    let mut h1 = Vec::with_capacity(pairs.len() * cfg.injections);
    let mut estimate_time = 0.0;
    for (i, pair) in pairs.iter().enumerate() {
        let wrap = |e: Error| Error::at(i, e);
        if pair.dim() != d {
            return Err(wrap(Error::ShapeMismatch(format!("window of dim {} in a dim {d} set", pair.dim()))));
        }
        let t0 = Instant::now();
        let est = estimator.estimate(pair).map_err(wrap)?;
        estimate_time += t0.elapsed().as_secs_f64();

        let (given, param) = match &est {
            Estimate::Precision(s) => (s, Parameterization::Precision),
            Estimate::Covariance(c) => (c, Parameterization::Covariance),
        };
        let given = HermitianPd::with_tolerance(given, 1e-9).map_err(wrap)?;
        let other = || given.inverse();
        let precision = match param {
            Parameterization::Precision => given.matrix().clone(),
            Parameterization::Covariance => other(),
        };
        if m.nll {
            nll_sum += nll(&pair.label, &given, param).map_err(wrap)?.value;
        }
        if with_truth {
            let cov = match param {
                Parameterization::Precision => other(),
                Parameterization::Covariance => given.matrix().clone(),
            };
            mse_sum += mse_frobenius(&cov, pair.truth.as_ref().expect("checked")).map_err(wrap)?;
        }
        if m.pauc || m.err {
            if m.pauc {
                h0.push(score(cfg.detector, &pair.label, &steering, &precision).map_err(wrap)?);
            }
            for k in 0..cfg.injections {
                let mut rng = purpose_stream(cfg.seed, Purpose::Injection, (i * cfg.injections + k) as u64);
                let inj = inject(&pair.label, &cfg.target, &mut rng);
                if m.pauc {
                    h1.push(score(cfg.detector, &inj.sample, &steering, &precision).map_err(wrap)?);
                }
                if m.err {
                    err_sum += (wls_amplitude(&inj.sample, &steering, &precision).map_err(wrap)? - inj.amplitude).norm_sqr();
                }
            }
        }
    }
    let n = pairs.len() as f64;
    if with_truth {
        report.mse = Some(mse_sum / n);
    }
    if m.nll {
        report.nll = Some(nll_sum / n);
    }
    if m.err {
        report.err = Some(err_sum / (n * cfg.injections as f64));
    }
    if m.pauc {
        let curve = roc(&h0, &h1, cfg.max_fpr)?;
        report.pauc01 = Some(curve.pauc01);
        report.pauc_raw = Some(curve.pauc_raw);
        report.pauc_mcclish = Some(curve.pauc_mcclish);
        report.roc = Some(curve);
    }
    timing.total_s = estimate_time;
    timing.mean_per_window_s = estimate_time / n;
    Ok((report, timing))
}

fn score(detector: Detector, z: &[C64], s: &[C64], precision: &ComplexMatrix) -> Result<f64> {
    match detector {
        Detector::Amf => amf(z, s, precision),
        Detector::Anmf => anmf(z, s, precision),
    }
}

/// Shrinkage baselines tuned over a grid.
#[derive(Clone, Debug, PartialEq)]
pub enum ShrinkageFamily {
    Rscm,
    Ka { global_scm: ComplexMatrix },
}

impl ShrinkageFamily {
    pub fn at(&self, alpha: f64) -> Baseline {
        match self {
            ShrinkageFamily::Rscm => Baseline::Rscm { alpha },
            ShrinkageFamily::Ka { global_scm } => Baseline::Ka { alpha, global_scm: global_scm.clone() },
        }
    }
}

/// Evaluates every grid point and reports each metric at its own best
/// weight. Grid points where the estimate is singular are skipped.
pub fn evaluate_tuned(
    family: &ShrinkageFamily,
    grid: &ShrinkageGrid,
    pairs: &[WindowPair],
    cfg: &EvalConfig,
) -> Result<(EvalReport, crate::baselines::TuneResult)> {
    let goals = [Goal::Minimize, Goal::Minimize, Goal::Minimize, Goal::Maximize];
    let mut name = String::new();
    let table = tune_alpha(grid, &goals, |alpha| {
        let est = family.at(alpha);
        name = est.name();
        match evaluate(&est, pairs, cfg) {
            Ok((r, _)) => Ok(vec![
                r.mse.unwrap_or(f64::NAN),
                r.nll.unwrap_or(f64::NAN),
                r.err.unwrap_or(f64::NAN),
                r.pauc01.unwrap_or(f64::NAN),
            ]),
            Err(e) if matches!(e.root(), Error::NotPositiveDefinite { .. }) => Ok(vec![f64::NAN; 4]),
            Err(e) => Err(e),
        }
    })?;
    let pick = |k: usize| {
        let b = &table.best[k];
        if b.value.is_nan() {
            (None, None)
        } else {
            (Some(b.value), Some(b.alpha))
        }
    };
    let (mse, a_mse) = pick(0);
    let (nll, a_nll) = pick(1);
    let (err, a_err) = pick(2);
    let (pauc01, a_pauc) = pick(3);
    let mut report = EvalReport::empty(name, pairs.len());
    report.mse = mse;
    report.nll = nll;
    report.err = err;
    report.pauc01 = pauc01;
    if let Some(alpha) = a_pauc {
        let (r, _) = evaluate(&family.at(alpha), pairs, &EvalConfig { metrics: MetricSet { pauc: true, ..MetricSet::none() }, ..cfg.clone() })?;
        report.pauc_raw = r.pauc_raw;
        report.pauc_mcclish = r.pauc_mcclish;
        report.roc = r.roc;
    }
    report.tuned_alpha = Some(TunedAlphas { mse: a_mse, nll: a_nll, err: a_err, pauc01: a_pauc });
    Ok((report, table))
}

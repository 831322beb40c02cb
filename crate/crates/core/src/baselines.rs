//! Classical per-window covariance estimators and shrinkage tuning.

use serde::{Deserialize, Serialize};

use crate::data::{outer_sum, WindowPair};
use crate::error::{Error, Result};
use crate::linalg::{clip_eigenvalues, ComplexMatrix, HermitianPd, C64};

/// `(1/|E|) sum_j z_j z_j^H`.
pub fn scm(window: &ComplexMatrix) -> ComplexMatrix {
    outer_sum(window).scale(1.0 / window.rows() as f64)
}

/// `(1 - alpha) SCM + alpha target`.
pub fn shrink(scm: &ComplexMatrix, alpha: f64, target: &ComplexMatrix) -> Result<HermitianPd> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("shrinkage weight {alpha} outside [0, 1]")));
    }
    if scm.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!("SCM {:?} vs target {:?}", scm.shape(), target.shape())));
    }
    let mut out = scm.scale(1.0 - alpha);
    out.add_scaled(alpha, target);
    HermitianPd::new(&out)
}

/// `(1 - alpha) SCM + alpha I`.
pub fn rscm(window: &ComplexMatrix, alpha: f64) -> Result<HermitianPd> {
    shrink(&scm(window), alpha, &ComplexMatrix::identity(window.cols()))
}

/// `(1 - alpha) SCM + alpha global_scm`.
pub fn ka_shrink(window: &ComplexMatrix, alpha: f64, global_scm: &ComplexMatrix) -> Result<HermitianPd> {
    shrink(&scm(window), alpha, global_scm)
}

/// SCM over every feature sample of a training set.
pub fn global_scm(pairs: &[WindowPair]) -> Result<ComplexMatrix> {
    let first = pairs.first().ok_or_else(|| Error::DegenerateInput("global SCM of an empty dataset".into()))?;
    let d = first.dim();
    let mut acc = ComplexMatrix::zeros(d, d);
    let mut count = 0usize;
    for (i, p) in pairs.iter().enumerate() {
        if p.dim() != d {
            return Err(Error::at(i, Error::ShapeMismatch(format!("dim {} in a dim {d} dataset", p.dim()))));
        }
        acc.add_assign(&outer_sum(&p.features));
        count += p.window_size();
    }
    Ok(acc.scale(1.0 / count as f64))
}

/// Projection onto Hermitian Toeplitz matrices by averaging each diagonal.
pub fn toeplitz_projection(m: &ComplexMatrix) -> ComplexMatrix {
    let d = m.rows();
    let mut out = ComplexMatrix::zeros(d, d);
    for k in 0..d {
        // lower diagonal k holds t_k; upper diagonal holds conj(t_k)
        let mut sum = C64::new(0.0, 0.0);
        for i in 0..d - k {
            sum += m[(i + k, i)] + m[(i, i + k)].conj();
        }
        let mut t = sum / (2.0 * (d - k) as f64);
        if k == 0 {
            t.im = 0.0;
        }
        for i in 0..d - k {
            out[(i + k, i)] = t;
            out[(i, i + k)] = t.conj();
        }
    }
    out
}

/// Largest deviation of `m` from its Toeplitz projection.
pub fn toeplitz_residual(m: &ComplexMatrix) -> f64 {
    m.sub(&toeplitz_projection(m)).max_abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToeplitzConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Eigenvalue floor of the PSD projection.
    pub floor: f64,
}

impl Default for ToeplitzConfig {
    fn default() -> Self {
        Self { max_iters: 1000, tol: 1e-10, floor: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToeplitzEstimate {
    pub estimate: ComplexMatrix,
    pub iterations: usize,
    /// False when `max_iters` ran out; `estimate` is then the last iterate.
    pub converged: bool,
    pub last_change: f64,
}

/// Alternating projections between Hermitian Toeplitz matrices and
/// matrices with eigenvalues at least `floor`, starting from the SCM.
pub fn toeplitz_ap(window: &ComplexMatrix, cfg: &ToeplitzConfig) -> Result<ToeplitzEstimate> {
    toeplitz_ap_from(&scm(window), cfg)
}

pub fn toeplitz_ap_from(start: &ComplexMatrix, cfg: &ToeplitzConfig) -> Result<ToeplitzEstimate> {
    if cfg.max_iters < 1 || !(cfg.floor > 0.0) || !(cfg.tol > 0.0) {
        return Err(Error::InvalidConfig("toeplitz max_iters, tol and floor must be positive".into()));
    }
    let mut x = start.hermitian_part();
    let mut last_change = f64::INFINITY;
    for it in 1..=cfg.max_iters {
        let next = clip_eigenvalues(&toeplitz_projection(&x), cfg.floor)?;
        last_change = next.sub(&x).frobenius_norm();
        x = next;
        if last_change < cfg.tol {
            return Ok(ToeplitzEstimate { estimate: x, iterations: it, converged: true, last_change });
        }
    }
    log::warn!("toeplitz projection stopped after {} iterations (change {last_change:e})", cfg.max_iters);
    Ok(ToeplitzEstimate { estimate: x, iterations: cfg.max_iters, converged: false, last_change })
}

/// Strict variant of [`toeplitz_ap`] that fails instead of flagging.
pub fn toeplitz_ap_strict(window: &ComplexMatrix, cfg: &ToeplitzConfig) -> Result<ComplexMatrix> {
    let out = toeplitz_ap(window, cfg)?;
    if !out.converged {
        return Err(Error::NoConvergence { iterations: out.iterations, last_change: out.last_change });
    }
    Ok(out.estimate)
}

/// Ordered shrinkage weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ShrinkageGrid {
    alphas: Vec<f64>,
}

impl ShrinkageGrid {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidConfig("shrinkage grid is empty".into()));
        }
        if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidConfig("shrinkage weights must lie in [0, 1]".into()));
        }
        if alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("shrinkage grid must be strictly increasing".into()));
        }
        Ok(Self { alphas })
    }

    /// `n` evenly spaced points from 0 to 1.
    pub fn uniform(n: usize) -> Result<Self> {
        match n {
            0 => Self::new(vec![]),
            1 => Self::new(vec![1.0]),
            _ => Self::new((0..n).map(|i| i as f64 / (n - 1) as f64).collect()),
        }
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
}

impl Default for ShrinkageGrid {
    fn default() -> Self {
        Self::uniform(21).expect("valid grid")
    }
}

impl TryFrom<Vec<f64>> for ShrinkageGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ShrinkageGrid> for Vec<f64> {
    fn from(g: ShrinkageGrid) -> Self {
        g.alphas
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricOptimum {
    pub alpha: f64,
    pub value: f64,
}

/// Scores of every grid point and the optimum per metric.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuneResult {
    pub alphas: Vec<f64>,
    /// `scores[i][m]` is metric `m` at `alphas[i]`.
    pub scores: Vec<Vec<f64>>,
    pub best: Vec<MetricOptimum>,
}

/// Evaluates `score` at every grid point and picks each metric's optimum.
/// Ties go to the larger alpha; NaN scores never win.
pub fn tune_alpha<F>(grid: &ShrinkageGrid, goals: &[Goal], mut score: F) -> Result<TuneResult>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    let mut scores = Vec::with_capacity(grid.alphas.len());
    for &alpha in &grid.alphas {
        let s = score(alpha)?;
        if s.len() != goals.len() {
            return Err(Error::ShapeMismatch(format!("{} scores for {} metrics", s.len(), goals.len())));
        }
        scores.push(s);
    }
    let best = goals
        .iter()
        .enumerate()
        .map(|(m, goal)| {
            let mut best: Option<MetricOptimum> = None;
            for (i, &alpha) in grid.alphas.iter().enumerate() {
                let v = scores[i][m];
                if v.is_nan() {
                    continue;
                }
                let better = match (&best, goal) {
                    (None, _) => true,
                    (Some(b), Goal::Minimize) => v <= b.value,
                    (Some(b), Goal::Maximize) => v >= b.value,
                };
                if better {
                    best = Some(MetricOptimum { alpha, value: v });
                }
            }
            best.unwrap_or(MetricOptimum { alpha: f64::NAN, value: f64::NAN })
        })
        .collect();
    Ok(TuneResult { alphas: grid.alphas.clone(), scores, best })
}

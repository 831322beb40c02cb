//! Target injection, matched-filter detection, amplitude estimation and ROC
//! analysis.
//!
//! Scores use the precision `S` (inverse covariance) directly:
//!
//! ```text
//! AMF  = |s^H S z|^2 / (s^H S s)
//! ANMF = |s^H S z|^2 / ((s^H S s)(z^H S z))
//! WLS  = (s^H S z) / (s^H S s)
//! ```

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::synthetic::gen_steering;
use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sq, ComplexMatrix, C64};
use crate::rng::Rng;

/// Planted target `a exp(i phi) [exp(i omega t)]_t`, with `phi` uniform per
/// injection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub omega: f64,
    pub amplitude: f64,
}

impl Default for TargetSpec {
    /// Midway between the first two default clutter frequencies, with the
    /// amplitude at which the oracle AMF reaches pauc01 = 0.78 on the
    /// default synthetic environments.
    fn default() -> Self {
        Self { omega: 3.0 * PI / 7.0, amplitude: 0.42485885322093964 }
    }
}

impl TargetSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() || !self.omega.is_finite() {
            return Err(Error::InvalidConfig("target amplitude must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Zero-phase steering vector of the target.
    pub fn steering(&self, d: usize) -> Vec<C64> {
        gen_steering(self.omega, 0.0, d)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub sample: Vec<C64>,
    /// The complex amplitude `a exp(i phi)` that was planted.
    pub amplitude: C64,
}

/// `z + a exp(i phi) s(omega)` with a fresh phase from `rng`.
pub fn inject(z: &[C64], spec: &TargetSpec, rng: &mut Rng) -> Injection {
    let phi = rng.random_range(0.0..2.0 * PI);
    let amplitude = C64::from_polar(spec.amplitude, phi);
    let s = spec.steering(z.len());
    let sample = z.iter().zip(&s).map(|(zi, si)| zi + amplitude * si).collect();
    Injection { sample, amplitude }
}

fn check(z: &[C64], s: &[C64], precision: &ComplexMatrix) -> Result<()> {
    let d = precision.rows();
    if !precision.is_square() || z.len() != d || s.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "sample {} and steering {} for a {:?} precision",
            z.len(),
            s.len(),
            precision.shape()
        )));
    }
    Ok(())
}

/// `(s^H S z, s^H S s)`.
fn whitened(z: &[C64], s: &[C64], precision: &ComplexMatrix) -> (C64, f64) {
    let sz = precision.mul_vec(z);
    let ss = precision.mul_vec(s);
    (inner(s, &sz), inner(s, &ss).re)
}

pub fn amf(z: &[C64], s: &[C64], precision: &ComplexMatrix) -> Result<f64> {
    check(z, s, precision)?;
    let (num, den) = whitened(z, s, precision);
    if !(den > 0.0) {
        return Err(Error::DegenerateInput("steering vector has zero whitened energy".into()));
    }
    Ok(num.norm_sqr() / den)
}

pub fn anmf(z: &[C64], s: &[C64], precision: &ComplexMatrix) -> Result<f64> {
    check(z, s, precision)?;
    if norm_sq(z) == 0.0 {
        return Err(Error::DegenerateInput("ANMF of a zero sample".into()));
    }
    let (num, den) = whitened(z, s, precision);
    let zz = precision.quadratic_form(z).re;
    if !(den > 0.0) || !(zz > 0.0) {
        return Err(Error::DegenerateInput("zero whitened energy in ANMF".into()));
    }
    Ok((num.norm_sqr() / (den * zz)).min(1.0))
}

pub fn wls_amplitude(z: &[C64], s: &[C64], precision: &ComplexMatrix) -> Result<C64> {
    check(z, s, precision)?;
    if norm_sq(s) == 0.0 {
        return Err(Error::DegenerateInput("WLS with a zero steering vector".into()));
    }
    let (num, den) = whitened(z, s, precision);
    if !(den > 0.0) {
        return Err(Error::DegenerateInput("steering vector has zero whitened energy".into()));
    }
    Ok(num / den)
}

/// Empirical ROC curve with partial-area summaries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RocCurve {
    /// Decreasing; the first point is `+inf` with `(fpr, tpr) = (0, 0)`.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub max_fpr: f64,
    /// Area under TPR for `FPR <= max_fpr`, divided by `max_fpr`.
    pub pauc01: f64,
    /// The same area without normalisation.
    pub pauc_raw: f64,
    /// McClish-standardised area: chance 0.5, perfect 1.
    pub pauc_mcclish: f64,
    pub n_h0: usize,
    pub n_h1: usize,
}

/// Threshold sweep over the pooled scores; a score at or above the threshold
/// is a detection.
pub fn roc(scores_h0: &[f64], scores_h1: &[f64], max_fpr: f64) -> Result<RocCurve> {
    if scores_h0.is_empty() || scores_h1.is_empty() {
        return Err(Error::DegenerateInput("ROC needs scores under both hypotheses".into()));
    }
    if !(max_fpr > 0.0 && max_fpr <= 1.0) {
        return Err(Error::InvalidConfig(format!("max_fpr = {max_fpr} outside (0, 1]")));
    }
    if scores_h0.iter().chain(scores_h1).any(|s| s.is_nan()) {
        return Err(Error::NonFiniteValue("NaN detection score".into()));
    }
    let mut pooled: Vec<(f64, bool)> =
        scores_h0.iter().map(|&s| (s, false)).chain(scores_h1.iter().map(|&s| (s, true))).collect();
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (n0, n1) = (scores_h0.len() as f64, scores_h1.len() as f64);
    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == t {
            if pooled[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(t);
        fpr.push(fp as f64 / n0);
        tpr.push(tp as f64 / n1);
    }

    let pauc_raw = partial_area(&fpr, &tpr, max_fpr);
    let (lo, hi) = (max_fpr * max_fpr / 2.0, max_fpr);
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        max_fpr,
        pauc01: pauc_raw / max_fpr,
        pauc_raw,
        pauc_mcclish: 0.5 * (1.0 + (pauc_raw - lo) / (hi - lo)),
        n_h0: scores_h0.len(),
        n_h1: scores_h1.len(),
    })
}

/// Trapezoid area under `tpr(fpr)` on `[0, max_fpr]`, interpolating the
/// segment that crosses `max_fpr`.
fn partial_area(fpr: &[f64], tpr: &[f64], max_fpr: f64) -> f64 {
    let mut area = 0.0;
    for k in 1..fpr.len() {
        let (x0, x1, y0, y1) = (fpr[k - 1], fpr[k], tpr[k - 1], tpr[k]);
        if x0 >= max_fpr {
            break;
        }
        if x1 <= max_fpr {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y = y0 + (y1 - y0) * (max_fpr - x0) / (x1 - x0);
            area += (max_fpr - x0) * (y0 + y) / 2.0;
            break;
        }
    }
    area
}

pub fn write_roc_csv(out: impl Write, curve: &RocCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["threshold", "fpr", "tpr"]).map_err(io)?;
    for k in 0..curve.fpr.len() {
        w.write_record([curve.thresholds[k].to_string(), curve.fpr[k].to_string(), curve.tpr[k].to_string()])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Bisection for the amplitude at which `pauc_of(amplitude)` reaches `target`.
/// `pauc_of` must be nondecreasing on `[lo, hi]`.
pub fn calibrate_amplitude(
    target: f64,
    mut lo: f64,
    mut hi: f64,
    iterations: usize,
    mut pauc_of: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    if !(pauc_of(lo)? <= target && pauc_of(hi)? >= target) {
        return Err(Error::InvalidConfig(format!("target pAUC {target} not bracketed by amplitudes [{lo}, {hi}]")));
    }
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if pauc_of(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

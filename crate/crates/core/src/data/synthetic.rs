//! Synthetic non-stationary clutter and inverse-Wishart environments.
//!
//! Clutter environments follow
//! `C_i = sum_k A_i s_ik v_k v_k^H + noise_var I` with `s_i ~ Dirichlet`,
//! `A_i ~ U(0, amp_max)` and steering vectors `[v_k]_t = exp(i(w_k t + phi_k))`.
//! Knowledge-aided environments draw `C_i ~ InverseWishart(nu, nu C)` so that
//! `E[C_i^{-1}] = C^{-1}`.
//!
//! Every environment `i` is generated from its own random stream
//! (see [`crate::rng`]), so a dataset is reproducible item by item and two
//! configs that differ only in window size share covariances and labels, and
//! the smaller feature window is a prefix of the larger one.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::WindowPair;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, HermitianPd, C64};
use crate::rng::{purpose_stream, Purpose, Rng};

/// `[v]_t = exp(i(omega t + phi))` for `t = 0..d`.
pub fn gen_steering(omega: f64, phi: f64, d: usize) -> Vec<C64> {
    (0..d).map(|t| C64::from_polar(1.0, omega * t as f64 + phi)).collect()
}

/// `2 pi k / 7` for `k = 1..=5`.
pub fn default_frequencies() -> Vec<f64> {
    (1..=5).map(|k| 2.0 * PI * k as f64 / 7.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub window: usize,
    /// Clutter angular frequencies; their count is the number of components.
    pub frequencies: Vec<f64>,
    pub dirichlet_alpha: f64,
    pub amp_max: f64,
    pub noise_var: f64,
    pub n_envs: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            dim: 6,
            window: 20,
            frequencies: default_frequencies(),
            dirichlet_alpha: 0.1,
            amp_max: 2.0,
            noise_var: 0.1,
            n_envs: 1000,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.dim < 2 {
            return bad("synthetic dim must be at least 2");
        }
        if self.frequencies.is_empty() {
            return bad("at least one clutter frequency is required");
        }
        if self.window < 1 {
            return bad("window must be at least 1");
        }
        if !(self.noise_var > 0.0) {
            return bad("noise_var must be positive");
        }
        if !(self.dirichlet_alpha > 0.0) {
            return bad("dirichlet_alpha must be positive");
        }
        if !(self.amp_max >= 0.0) {
            return bad("amp_max must be non-negative");
        }
        if self.n_envs == 0 {
            return bad("n_envs must be at least 1");
        }
        Ok(())
    }

    /// Environment `index` of this config's stream.
    pub fn environment(&self, index: u64) -> Result<WindowPair> {
        gen_environment(self, &mut purpose_stream(self.seed, Purpose::Environment, index))
    }

    pub fn generate(&self) -> Result<Vec<WindowPair>> {
        self.validate()?;
        (0..self.n_envs as u64).map(|i| self.environment(i)).collect()
    }
}

/// Symmetric Dirichlet draw, robust to small concentrations.
///
/// Uses `G = Gamma(alpha + 1) * U^(1/alpha)` in log space so tiny gamma
/// variates do not underflow to an all-zero vector.
pub fn sample_dirichlet(rng: &mut Rng, alpha: f64, k: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha + 1.0, 1.0).expect("positive gamma shape");
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = 1.0 - rng.random::<f64>();
            g.ln() + u.ln() / alpha
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Circular complex Gaussian with `E[z z^H] = L L^H`.
pub fn sample_complex_gaussian(rng: &mut Rng, chol: &ComplexMatrix) -> Vec<C64> {
    let d = chol.rows();
    let g: Vec<C64> = (0..d)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect();
    lower_mul(chol, &g)
}

/// Real Gaussian with covariance `L L^T`, embedded with zero imaginary parts.
pub fn sample_real_gaussian(rng: &mut Rng, chol: &ComplexMatrix) -> Vec<C64> {
    let g: Vec<C64> = (0..chol.rows()).map(|_| C64::new(rng.sample(StandardNormal), 0.0)).collect();
    lower_mul(chol, &g)
}

fn lower_mul(l: &ComplexMatrix, g: &[C64]) -> Vec<C64> {
    (0..l.rows()).map(|i| (0..=i).map(|k| l[(i, k)] * g[k]).sum()).collect()
}

/// Clutter covariance for given component powers and phases.
pub fn clutter_covariance(frequencies: &[f64], powers: &[f64], phases: &[f64], noise_var: f64, d: usize) -> ComplexMatrix {
    let mut c = ComplexMatrix::identity(d).scale(noise_var);
    for ((&omega, &p), &phi) in frequencies.iter().zip(powers).zip(phases) {
        if p == 0.0 {
            continue;
        }
        let v = gen_steering(omega, phi, d);
        for i in 0..d {
            for j in 0..d {
                c[(i, j)] += v[i] * v[j].conj() * p;
            }
        }
    }
    c.hermitian_part()
}

/// One clutter environment: `window + 1` i.i.d. samples, the first being the
/// label.
pub fn gen_environment(cfg: &SyntheticConfig, rng: &mut Rng) -> Result<WindowPair> {
    let k = cfg.frequencies.len();
    let s = sample_dirichlet(rng, cfg.dirichlet_alpha, k);
    let amplitude = rng.random::<f64>() * cfg.amp_max;
    let phases: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    let powers: Vec<f64> = s.iter().map(|x| amplitude * x).collect();
    let truth = clutter_covariance(&cfg.frequencies, &powers, &phases, cfg.noise_var, cfg.dim);
    let chol = HermitianPd::new(&truth)?.cholesky().clone();
    draw_pair(rng, &chol, cfg.window, truth, sample_complex_gaussian)
}

fn draw_pair(
    rng: &mut Rng,
    chol: &ComplexMatrix,
    window: usize,
    truth: ComplexMatrix,
    sampler: fn(&mut Rng, &ComplexMatrix) -> Vec<C64>,
) -> Result<WindowPair> {
    let d = chol.rows();
    let label = sampler(rng, chol);
    let mut rows = Vec::with_capacity(window * d);
    for _ in 0..window {
        rows.extend(sampler(rng, chol));
    }
    let features = ComplexMatrix::new(window, d, rows)?;
    WindowPair::new(label, features, Some(truth))
}

/// Scalar field of knowledge-aided samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleField {
    Real,
    Complex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KaConfig {
    pub dim: usize,
    pub window: usize,
    /// Inverse-Wishart degrees of freedom.
    pub nu: f64,
    /// Prior location `C`; the inverse-Wishart scale matrix is `nu * C`.
    pub scale: ComplexMatrix,
    pub field: SampleField,
    pub n_envs: usize,
    pub seed: u64,
}

impl KaConfig {
    /// Defaults used by the closed-form check: `d = 4`, `|E| = 20`, `nu = 10`,
    /// real samples and `C[s][t] = 0.5^|s - t|`.
    pub fn example(seed: u64) -> Self {
        let dim = 4;
        Self {
            dim,
            window: 20,
            nu: 10.0,
            scale: ComplexMatrix::from_fn(dim, dim, |i, j| C64::new(0.5f64.powi((i as i32 - j as i32).abs()), 0.0)),
            field: SampleField::Real,
            n_envs: 1000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 || self.window < 1 || self.n_envs == 0 {
            return Err(Error::InvalidConfig("dim, window and n_envs must be positive".into()));
        }
        if !(self.nu > self.dim as f64 + 1.0) {
            return Err(Error::InvalidConfig(format!(
                "nu = {} must exceed d + 1 = {} for a finite inverse-Wishart mean",
                self.nu,
                self.dim + 1
            )));
        }
        if self.scale.shape() != (self.dim, self.dim) {
            return Err(Error::InvalidConfig(format!("scale must be {0}x{0}", self.dim)));
        }
        HermitianPd::new(&self.scale).map_err(|e| Error::InvalidConfig(format!("scale: {e}")))?;
        if self.field == SampleField::Real && self.scale.as_slice().iter().any(|z| z.im != 0.0) {
            return Err(Error::InvalidConfig("real-field scale must have zero imaginary part".into()));
        }
        Ok(())
    }

    fn dof_offset(&self) -> f64 {
        match self.field {
            SampleField::Real => self.dim as f64 + 1.0,
            SampleField::Complex => self.dim as f64,
        }
    }

    /// `E[C_i] = nu C / (nu - d - 1)` (real) or `nu C / (nu - d)` (complex).
    pub fn prior_mean(&self) -> ComplexMatrix {
        self.scale.scale(self.nu / (self.nu - self.dof_offset()))
    }

    /// Posterior-mean architecture `A + alpha sum_j z_j z_j^H`: returns
    /// `(A, alpha)` with `alpha = 1 / (nu + |E| - d - 1)` and `A = nu alpha C`
    /// (real field; the complex field uses `d` in place of `d + 1`).
    pub fn closed_form(&self) -> (ComplexMatrix, f64) {
        let alpha = 1.0 / (self.nu + self.window as f64 - self.dof_offset());
        (self.scale.scale(self.nu * alpha), alpha)
    }

    pub fn environment(&self, index: u64) -> Result<WindowPair> {
        gen_ka_environment(self, &mut purpose_stream(self.seed, Purpose::Environment, index))
    }

    pub fn generate(&self) -> Result<Vec<WindowPair>> {
        self.validate()?;
        (0..self.n_envs as u64).map(|i| self.environment(i)).collect()
    }
}

const WISHART_RETRIES: usize = 10;

/// `W ~ Wishart(nu, sigma)` via the Bartlett decomposition.
pub fn sample_wishart(rng: &mut Rng, nu: f64, sigma_chol: &ComplexMatrix, field: SampleField) -> ComplexMatrix {
    let d = sigma_chol.rows();
    let mut a = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        let diag = match field {
            SampleField::Real => {
                let chi2: f64 = Gamma::new((nu - i as f64) / 2.0, 2.0).expect("dof > 0").sample(rng);
                chi2.sqrt()
            }
            SampleField::Complex => {
                let g: f64 = Gamma::new(nu - i as f64, 1.0).expect("dof > 0").sample(rng);
                g.sqrt()
            }
        };
        a[(i, i)] = C64::new(diag, 0.0);
        for j in 0..i {
            a[(i, j)] = match field {
                SampleField::Real => C64::new(rng.sample(StandardNormal), 0.0),
                SampleField::Complex => {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                }
            };
        }
    }
    let la = sigma_chol.matmul(&a);
    la.matmul_adjoint(&la).hermitian_part()
}

/// One knowledge-aided environment with `C_i ~ InverseWishart(nu, nu C)`.
pub fn gen_ka_environment(cfg: &KaConfig, rng: &mut Rng) -> Result<WindowPair> {
    // W ~ Wishart(nu, (nu C)^{-1}), C_i = W^{-1}
    let psi = HermitianPd::new(&cfg.scale.scale(cfg.nu))?;
    let sigma = HermitianPd::new(&psi.inverse())?;
    let mut last_err = None;
    for _ in 0..WISHART_RETRIES {
        let w = sample_wishart(rng, cfg.nu, sigma.cholesky(), cfg.field);
        match HermitianPd::new(&w).and_then(|w| HermitianPd::new(&w.inverse())) {
            Ok(cov) => {
                let chol = cov.cholesky().clone();
                let sampler = match cfg.field {
                    SampleField::Real => sample_real_gaussian,
                    SampleField::Complex => sample_complex_gaussian,
                };
                return draw_pair(rng, &chol, cfg.window, cov.into_matrix(), sampler);
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

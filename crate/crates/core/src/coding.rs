//! Sparse-code inference against a fixed frequency-domain dictionary.
//!
//! Solves `min 1/(2P) ||x~ - sum_k D~(:,k) .* Z~(:,k)||^2 + beta ||U||_1`
//! subject to `U(:,k) = F^-1(Z~(:,k))` by ADMM. The `Z~` block decouples into
//! `P` rank-one systems of size `K`; the `U` block is a soft-threshold; the
//! scaled dual lives in the spatial domain.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::FreqDictionary;
use crate::tensor_freq::norm_sq;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodingConfig {
    /// Weight of the l1 penalty.
    pub beta: f64,
    /// ADMM penalty.
    pub rho: f64,
    pub max_iters: usize,
    /// Relative change in `U` (and relative primal residual) at which to stop.
    pub rel_tol: f64,
}

impl Default for CodingConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            rho: 1.0,
            max_iters: 300,
            rel_tol: 1e-3,
        }
    }
}

impl CodingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "rho must be > 0, got {}",
                self.rho
            )));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "relative tolerance must be > 0, got {}",
                self.rel_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// ADMM iterate for one sample. Arrays are `P x K`, column after column.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeState {
    pub z_freq: Vec<Complex64>,
    /// Spatial codes; exactly sparse.
    pub u: Vec<f64>,
    /// Scaled dual of `U(:,k) = F^-1(Z~(:,k))`.
    pub dual: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl CodeState {
    pub fn zeros(p: usize, k: usize) -> Self {
        Self {
            z_freq: vec![Complex64::default(); p * k],
            u: vec![0.0; p * k],
            dual: vec![0.0; p * k],
            iterations: 0,
            converged: false,
        }
    }

    pub fn num_filters(&self, p: usize) -> usize {
        self.u.len() / p
    }

    pub fn zero_fraction(&self) -> f64 {
        if self.u.is_empty() {
            return 0.0;
        }
        self.u.iter().filter(|v| **v == 0.0).count() as f64 / self.u.len() as f64
    }
}

/// Elementwise `sign(v) * max(|v| - kappa, 0)`.
pub fn soft_threshold(v: &[f64], kappa: f64) -> Vec<f64> {
    v.iter().map(|&x| shrink(x, kappa)).collect()
}

#[inline]
fn shrink(x: f64, kappa: f64) -> f64 {
    if x > kappa {
        x - kappa
    } else if x < -kappa {
        x + kappa
    } else {
        0.0
    }
}

/// Minimizer of `|x - d^T z|^2 + rho ||z - target||^2` (both terms share the
/// `1/2P` weight, which cancels).
///
/// The normal matrix is `conj(d) d^T + rho I`, inverted with Sherman-Morrison
/// in `O(K)`.
pub fn solve_code_frequency_row(
    d_row: &[Complex64],
    x: Complex64,
    target: &[Complex64],
    rho: f64,
) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); d_row.len()];
    solve_code_row_into(d_row, x, target, rho, &mut out);
    out
}

fn solve_code_row_into(
    d_row: &[Complex64],
    x: Complex64,
    target: &[Complex64],
    rho: f64,
    out: &mut [Complex64],
) {
    // r = conj(d) x + rho t ;  z = (r - conj(d) (d^T r) / (rho + |d|^2)) / rho
    let mut d_norm = 0.0;
    let mut dtr = Complex64::default();
    for ((o, d), t) in out.iter_mut().zip(d_row).zip(target) {
        *o = d.conj() * x + t * rho;
        d_norm += d.norm_sqr();
        dtr += d * *o;
    }
    let coef = dtr / (rho + d_norm);
    let inv_rho = 1.0 / rho;
    for (o, d) in out.iter_mut().zip(d_row) {
        *o = (*o - d.conj() * coef) * inv_rho;
    }
}

/// Progress of one ADMM round.
#[derive(Clone, Copy, Debug)]
pub struct CodeStep {
    /// `||F^-1(Z~) - U||`.
    pub primal_residual: f64,
    /// `||U - U_prev||`.
    pub change: f64,
    /// `max(||U||, ||F^-1(Z~)||)`.
    pub scale: f64,
}

/// Stepwise code ADMM, for callers that monitor iterates.
pub struct CodeAdmm<'a> {
    dict: &'a FreqDictionary,
    cfg: CodingConfig,
    x_freq: Vec<Complex64>,
    x_norm: f64,
    state: CodeState,
    spatial: Vec<f64>,
    target: Vec<Complex64>,
    spectrum: Vec<Complex64>,
    work: Vec<Complex64>,
    d_row: Vec<Complex64>,
    t_row: Vec<Complex64>,
    z_row: Vec<Complex64>,
    u_prev: Vec<f64>,
}

impl<'a> CodeAdmm<'a> {
    pub fn new(
        x: &[f64],
        dict: &'a FreqDictionary,
        cfg: CodingConfig,
        warm_start: Option<&CodeState>,
    ) -> Result<Self> {
        let x_freq = dict.fourier().forward(x)?;
        Self::from_freq(x_freq, norm_sq(x).sqrt(), dict, cfg, warm_start)
    }

    pub fn from_freq(
        x_freq: Vec<Complex64>,
        x_norm: f64,
        dict: &'a FreqDictionary,
        cfg: CodingConfig,
        warm_start: Option<&CodeState>,
    ) -> Result<Self> {
        cfg.validate()?;
        let p = dict.fourier().len();
        let k = dict.num_filters();
        if x_freq.len() != p {
            return Err(Error::Shape(format!(
                "sample spectrum has {} entries, dictionary expects {p}",
                x_freq.len()
            )));
        }
        if !x_norm.is_finite() || !x_freq.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite("sample".into()));
        }
        let state = match warm_start {
            Some(w) if w.u.len() == p * k && w.dual.len() == p * k && w.z_freq.len() == p * k => {
                let mut w = w.clone();
                w.iterations = 0;
                w.converged = false;
                w
            }
            Some(_) => {
                return Err(Error::Shape(
                    "warm start does not match the dictionary".into(),
                ));
            }
            None => CodeState::zeros(p, k),
        };
        Ok(Self {
            dict,
            cfg,
            x_freq,
            x_norm,
            state,
            spatial: vec![0.0; p],
            target: vec![Complex64::default(); p * k],
            spectrum: Vec::with_capacity(p),
            work: Vec::with_capacity(p),
            d_row: vec![Complex64::default(); k],
            t_row: vec![Complex64::default(); k],
            z_row: vec![Complex64::default(); k],
            u_prev: vec![0.0; p * k],
        })
    }

    pub fn state(&self) -> &CodeState {
        &self.state
    }

    pub fn into_state(self) -> CodeState {
        self.state
    }

    pub fn step(&mut self) -> Result<CodeStep> {
        let fourier = self.dict.fourier();
        let p = fourier.len();
        let k = self.dict.num_filters();
        let iteration = self.state.iterations + 1;

        // target = F(U - Gamma), column by column
        for col in 0..k {
            let range = col * p..(col + 1) * p;
            for ((s, u), g) in self
                .spatial
                .iter_mut()
                .zip(&self.state.u[range.clone()])
                .zip(&self.state.dual[range.clone()])
            {
                *s = u - g;
            }
            fourier.forward_into(&self.spatial, &mut self.spectrum)?;
            self.target[range].copy_from_slice(&self.spectrum);
        }

        for freq in 0..p {
            for col in 0..k {
                self.d_row[col] = self.dict.column(col)[freq];
                self.t_row[col] = self.target[col * p + freq];
            }
            solve_code_row_into(
                &self.d_row,
                self.x_freq[freq],
                &self.t_row,
                self.cfg.rho,
                &mut self.z_row,
            );
            for col in 0..k {
                self.state.z_freq[col * p + freq] = self.z_row[col];
            }
        }

        self.u_prev.copy_from_slice(&self.state.u);
        let kappa = self.cfg.beta / self.cfg.rho;
        let (mut primal, mut change, mut u_norm, mut z_norm) = (0.0, 0.0, 0.0, 0.0);
        for col in 0..k {
            let range = col * p..(col + 1) * p;
            fourier.inverse_into(
                &self.state.z_freq[range.clone()],
                &mut self.work,
                &mut self.spatial,
            )?;
            let u = &mut self.state.u[range.clone()];
            let dual = &mut self.state.dual[range.clone()];
            let prev = &self.u_prev[range];
            for i in 0..p {
                let zs = self.spatial[i];
                let un = shrink(zs + dual[i], kappa);
                dual[i] += zs - un;
                primal += (zs - un) * (zs - un);
                change += (un - prev[i]) * (un - prev[i]);
                u_norm += un * un;
                z_norm += zs * zs;
                u[i] = un;
            }
        }
        self.state.iterations = iteration;
        if !(primal.is_finite() && u_norm.is_finite() && z_norm.is_finite()) {
            return Err(Error::Divergence {
                iteration,
                context: "non-finite sparse codes".into(),
            });
        }
        Ok(CodeStep {
            primal_residual: primal.sqrt(),
            change: change.sqrt(),
            scale: u_norm.sqrt().max(z_norm.sqrt()),
        })
    }

    fn is_converged(&self, step: &CodeStep) -> bool {
        let tol = self.cfg.rel_tol;
        if step.scale <= 1e-3 * tol * self.x_norm {
            return true;
        }
        step.change <= tol * step.scale && step.primal_residual <= tol * step.scale
    }

    /// Iterates until converged or `max_iters` rounds.
    pub fn run(mut self) -> Result<CodeState> {
        while self.state.iterations < self.cfg.max_iters {
            let step = self.step()?;
            if self.is_converged(&step) {
                self.state.converged = true;
                break;
            }
        }
        Ok(self.state)
    }
}

/// Codes one spatial sample against `dict`; the returned `u` is the code.
pub fn infer_code(
    x: &[f64],
    dict: &FreqDictionary,
    cfg: &CodingConfig,
    warm_start: Option<&CodeState>,
) -> Result<CodeState> {
    CodeAdmm::new(x, dict, *cfg, warm_start)?.run()
}

/// `1/2 ||x - sum_k d_k * u_k||^2 + beta ||u||_1`.
pub fn code_objective(x: &[f64], dict: &FreqDictionary, u: &[f64], beta: f64) -> Result<f64> {
    let rec = dict.reconstruct(u)?;
    let fit: f64 = x.iter().zip(&rec).map(|(a, b)| (a - b) * (a - b)).sum();
    let l1: f64 = u.iter().map(|v| v.abs()).sum();
    Ok(0.5 * fit + beta * l1)
}

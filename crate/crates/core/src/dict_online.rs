//! Online dictionary update.
//!
//! After coding sample `t`, every frequency `p` keeps two sufficient
//! statistics of all samples seen so far:
//!
//! * `b^p_t = (1/t) sum_i conj(x~_i(p)) z_i(p)`, where `z_i(p)` is the length-`K`
//!   column `Z~_i(p,:)^T`;
//! * `C^p_t`, the inverse of `A^p_t + (rho/t) P I` with
//!   `A^p_t = (1/t) sum_i z_i(p) z_i(p)^H`, maintained by rank-one
//!   Sherman-Morrison updates in `O(K^2)`.
//!
//! `A^p_t` itself is never stored. The ADMM penalty of the dictionary step at
//! time `t` is `rho / t`, which is the penalty the recursion bakes into
//! `C^p_t`.
//!
//! With these, the dictionary subproblem
//! `min (1/2P) sum_p D~(p,:) A^p D~(p,:)^H - (1/P) sum_p Re(D~(p,:) b^p)` over
//! dictionaries whose filters are supported on the leading block and lie in
//! the unit ball is solved by ADMM with closed-form row solves and a
//! crop-and-scale projection.

use std::mem::size_of;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::FreqDictionary;
use crate::tensor_freq::{complex_norm_sq, crop_filter, norm_sq, pad_filter_into, Fourier};

fn check_codes(
    fourier: &Fourier,
    k: usize,
    z_freq: &[Complex64],
    x_freq: &[Complex64],
) -> Result<()> {
    let p = fourier.len();
    if z_freq.len() != p * k || x_freq.len() != p {
        return Err(Error::Shape(format!(
            "history update expects {} code and {p} sample entries, got {} and {}",
            p * k,
            z_freq.len(),
            x_freq.len()
        )));
    }
    if !z_freq
        .iter()
        .chain(x_freq)
        .all(|v| v.re.is_finite() && v.im.is_finite())
    {
        return Err(Error::NonFinite("history update inputs".into()));
    }
    Ok(())
}

/// Per-frequency history `{b^p_t}, {C^p_t}` with sample counter `t`.
#[derive(Clone, Debug)]
pub struct HistoryState {
    fourier: Arc<Fourier>,
    num_filters: usize,
    rho: f64,
    /// Penalty baked into `C^p`.
    penalty: f64,
    t: u64,
    /// `b^p` at `p * K ..`.
    b: Vec<Complex64>,
    /// Row-major `C^p` at `p * K * K ..`.
    c: Vec<Complex64>,
}

impl HistoryState {
    pub fn new(fourier: Arc<Fourier>, num_filters: usize, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "dictionary rho must be > 0, got {rho}"
            )));
        }
        if num_filters == 0 {
            return Err(Error::InvalidConfig("need at least one filter".into()));
        }
        let p = fourier.len();
        Ok(Self {
            fourier,
            num_filters,
            rho,
            penalty: rho,
            t: 0,
            b: vec![Complex64::default(); p * num_filters],
            c: vec![Complex64::default(); p * num_filters * num_filters],
        })
    }

    /// Batch history from all `(x~_i, Z~_i)` pairs with uniform weights.
    ///
    /// `A^p, b^p` equal `N` online updates with the same codes; `C^p` is the
    /// direct Cholesky inverse of `A^p + rho P I` with the penalty fixed at
    /// `rho`, so duplicated samples leave it unchanged.
    pub fn from_batch(
        fourier: Arc<Fourier>,
        num_filters: usize,
        rho: f64,
        pairs: &[(&[Complex64], &[Complex64])],
    ) -> Result<Self> {
        let mut raw = RawHistory::new(fourier, num_filters)?;
        for (x_freq, z_freq) in pairs {
            raw.update(z_freq, x_freq)?;
        }
        Self::from_raw(&raw, rho)
    }

    /// Inverts `A^p + rho P I` for every `p` of an accumulated history.
    pub fn from_raw(raw: &RawHistory, rho: f64) -> Result<Self> {
        let mut h = Self::new(Arc::clone(&raw.fourier), raw.num_filters, rho)?;
        if raw.t == 0 {
            return Ok(h);
        }
        h.t = raw.t;
        h.b.copy_from_slice(&raw.b);
        let k = h.num_filters;
        let shift = rho * h.fourier.len() as f64;
        for p in 0..h.fourier.len() {
            let mut m = DMatrix::from_row_slice(k, k, raw.gram_at(p));
            for i in 0..k {
                m[(i, i)] += Complex64::new(shift, 0.0);
            }
            let inv = m
                .cholesky()
                .ok_or_else(|| {
                    Error::NumericalConsistency(format!(
                        "history matrix at frequency {p} is not positive definite"
                    ))
                })?
                .inverse();
            let dst = &mut h.c[p * k * k..(p + 1) * k * k];
            for i in 0..k {
                for j in 0..k {
                    dst[i * k + j] = inv[(i, j)];
                }
            }
        }
        Ok(h)
    }

    pub fn fourier(&self) -> &Arc<Fourier> {
        &self.fourier
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Base penalty fixed at construction.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Penalty baked into the current `C^p`: `rho / t` for online updates,
    /// `rho` for a batch-built history.
    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn b_at(&self, p: usize) -> &[Complex64] {
        let k = self.num_filters;
        &self.b[p * k..(p + 1) * k]
    }

    /// Row-major `K x K` block `C^p`.
    pub fn inverse_at(&self, p: usize) -> &[Complex64] {
        let kk = self.num_filters * self.num_filters;
        &self.c[p * kk..(p + 1) * kk]
    }

    /// Bytes held by the state; a function of `(K, P)` only.
    pub fn byte_size(&self) -> usize {
        size_of::<Self>() + (self.b.capacity() + self.c.capacity()) * size_of::<Complex64>()
    }

    /// Folds sample `t + 1` into the statistics.
    pub fn update(&mut self, z_freq: &[Complex64], x_freq: &[Complex64]) -> Result<()> {
        let k = self.num_filters;
        check_codes(&self.fourier, k, z_freq, x_freq)?;
        let p_len = self.fourier.len();
        self.t += 1;
        let t = self.t as f64;
        let rho_p = self.rho * p_len as f64;
        self.penalty = if self.t == 1 {
            self.rho
        } else {
            self.penalty * (t - 1.0) / t
        };

        let mut u = vec![Complex64::default(); k];
        let mut g = vec![Complex64::default(); k];
        for p in 0..p_len {
            for (kk, slot) in u.iter_mut().enumerate() {
                *slot = z_freq[kk * p_len + p];
            }
            let xc = x_freq[p].conj();
            let b = &mut self.b[p * k..(p + 1) * k];
            for (bi, ui) in b.iter_mut().zip(&u) {
                *bi = *bi * (1.0 - 1.0 / t) + xc * ui / t;
            }

            let c = &mut self.c[p * k * k..(p + 1) * k * k];
            if self.t == 1 {
                let unorm: f64 = u.iter().map(|v| v.norm_sqr()).sum();
                let denom = rho_p + unorm;
                for i in 0..k {
                    for j in 0..k {
                        let id = if i == j { 1.0 } else { 0.0 };
                        c[i * k + j] =
                            (Complex64::new(id, 0.0) - u[i] * u[j].conj() / denom) / rho_p;
                    }
                }
            } else {
                for i in 0..k {
                    g[i] = (0..k).map(|j| c[i * k + j] * u[j]).sum();
                }
                let quad: Complex64 = u.iter().zip(&g).map(|(a, b)| a.conj() * b).sum();
                let denom = (t - 1.0) + quad.re;
                let scale = t / (t - 1.0);
                for i in 0..k {
                    for j in 0..k {
                        let v = &mut c[i * k + j];
                        *v = (*v - g[i] * g[j].conj() / denom) * scale;
                    }
                }
            }
            // re-symmetrize
            for i in 0..k {
                c[i * k + i].im = 0.0;
                for j in i + 1..k {
                    let avg = (c[i * k + j] + c[j * k + i].conj()) * 0.5;
                    c[i * k + j] = avg;
                    c[j * k + i] = avg.conj();
                }
            }
        }
        Ok(())
    }

    /// `A^p = (C^p)^-1 - penalty P I`, for monitoring and tests.
    pub fn reconstruct_gram(&self, p: usize) -> Result<DMatrix<Complex64>> {
        if self.t == 0 {
            return Err(Error::UninitializedHistory);
        }
        let k = self.num_filters;
        let c = DMatrix::from_row_slice(k, k, self.inverse_at(p));
        let mut a = c.try_inverse().ok_or_else(|| {
            Error::NumericalConsistency(format!("C at frequency {p} is singular"))
        })?;
        let shift = self.penalty() * self.fourier.len() as f64;
        for i in 0..k {
            a[(i, i)] -= Complex64::new(shift, 0.0);
        }
        Ok(a)
    }
}

/// History that keeps `A^p` itself, as gradient methods need it.
#[derive(Clone, Debug)]
pub struct RawHistory {
    fourier: Arc<Fourier>,
    num_filters: usize,
    t: u64,
    b: Vec<Complex64>,
    a: Vec<Complex64>,
}

impl RawHistory {
    pub fn new(fourier: Arc<Fourier>, num_filters: usize) -> Result<Self> {
        if num_filters == 0 {
            return Err(Error::InvalidConfig("need at least one filter".into()));
        }
        let p = fourier.len();
        Ok(Self {
            fourier,
            num_filters,
            t: 0,
            b: vec![Complex64::default(); p * num_filters],
            a: vec![Complex64::default(); p * num_filters * num_filters],
        })
    }

    pub fn fourier(&self) -> &Arc<Fourier> {
        &self.fourier
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn b_at(&self, p: usize) -> &[Complex64] {
        let k = self.num_filters;
        &self.b[p * k..(p + 1) * k]
    }

    /// Row-major `K x K` block `A^p`.
    pub fn gram_at(&self, p: usize) -> &[Complex64] {
        let kk = self.num_filters * self.num_filters;
        &self.a[p * kk..(p + 1) * kk]
    }

    pub fn byte_size(&self) -> usize {
        size_of::<Self>() + (self.b.capacity() + self.a.capacity()) * size_of::<Complex64>()
    }

    /// Mean eigenvalue of the `A^p`, `sum_p tr(A^p) / (K P)`.
    pub fn mean_eigenvalue(&self) -> f64 {
        let k = self.num_filters;
        let p_len = self.fourier.len();
        let trace: f64 = (0..p_len)
            .map(|p| {
                let a = self.gram_at(p);
                (0..k).map(|i| a[i * k + i].re).sum::<f64>()
            })
            .sum();
        trace / (k * p_len) as f64
    }

    pub fn update(&mut self, z_freq: &[Complex64], x_freq: &[Complex64]) -> Result<()> {
        let k = self.num_filters;
        check_codes(&self.fourier, k, z_freq, x_freq)?;
        let p_len = self.fourier.len();
        self.t += 1;
        let t = self.t as f64;
        let keep = 1.0 - 1.0 / t;
        let mut u = vec![Complex64::default(); k];
        for p in 0..p_len {
            for (kk, slot) in u.iter_mut().enumerate() {
                *slot = z_freq[kk * p_len + p];
            }
            let xc = x_freq[p].conj();
            for (bi, ui) in self.b[p * k..(p + 1) * k].iter_mut().zip(&u) {
                *bi = *bi * keep + xc * ui / t;
            }
            let a = &mut self.a[p * k * k..(p + 1) * k * k];
            for i in 0..k {
                for j in 0..k {
                    a[i * k + j] = a[i * k + j] * keep + u[i] * u[j].conj() / t;
                }
            }
        }
        Ok(())
    }

    /// Surrogate objective at a frequency dictionary.
    pub fn objective(&self, d_freq: &[Complex64]) -> Result<f64> {
        if self.t == 0 {
            return Err(Error::UninitializedHistory);
        }
        let k = self.num_filters;
        let p_len = self.fourier.len();
        check_dict_len(d_freq, p_len, k)?;
        let mut row = vec![Complex64::default(); k];
        let mut total = 0.0;
        for p in 0..p_len {
            for (kk, slot) in row.iter_mut().enumerate() {
                *slot = d_freq[kk * p_len + p];
            }
            total += row_objective(&row, self.gram_at(p), self.b_at(p));
        }
        Ok(total / p_len as f64)
    }

    /// Largest eigenvalue of `A^p` by power iteration.
    pub fn max_eigenvalue(&self, p: usize, iters: usize) -> f64 {
        let k = self.num_filters;
        let a = self.gram_at(p);
        let mut v = vec![Complex64::new(1.0, 0.0); k];
        let mut lambda = 0.0;
        for _ in 0..iters {
            let w: Vec<Complex64> = (0..k)
                .map(|i| (0..k).map(|j| a[i * k + j] * v[j]).sum())
                .collect();
            let norm = complex_norm_sq(&w).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            // Rayleigh quotient with the unit-norm iterate
            let vnorm = complex_norm_sq(&v);
            lambda = v
                .iter()
                .zip(&w)
                .map(|(a, b)| (a.conj() * b).re)
                .sum::<f64>()
                / vnorm;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        lambda.max(0.0)
    }
}

fn check_dict_len(d_freq: &[Complex64], p: usize, k: usize) -> Result<()> {
    if d_freq.len() != p * k {
        return Err(Error::Shape(format!(
            "frequency dictionary has {} entries, expected {}",
            d_freq.len(),
            p * k
        )));
    }
    Ok(())
}

/// `1/2 d A d^H - Re(d b)` for one row.
fn row_objective(row: &[Complex64], a: &[Complex64], b: &[Complex64]) -> f64 {
    let k = row.len();
    let mut quad = 0.0;
    for i in 0..k {
        let mut acc = Complex64::default();
        for j in 0..k {
            acc += a[i * k + j] * row[j].conj();
        }
        quad += (row[i] * acc).re;
    }
    let lin: f64 = row.iter().zip(b).map(|(d, bb)| (d * bb).re).sum();
    0.5 * quad - lin
}

/// Closed-form minimizer of one row subproblem:
/// `(b^H + rho_t P (v - theta)) C^p`.
pub fn solve_dict_row(
    p: usize,
    v_row: &[Complex64],
    theta_row: &[Complex64],
    h: &HistoryState,
) -> Result<Vec<Complex64>> {
    if h.t == 0 {
        return Err(Error::UninitializedHistory);
    }
    let mut out = vec![Complex64::default(); h.num_filters];
    let mut w = vec![Complex64::default(); h.num_filters];
    solve_dict_row_into(p, v_row, theta_row, h, &mut w, &mut out);
    Ok(out)
}

fn solve_dict_row_into(
    p: usize,
    v_row: &[Complex64],
    theta_row: &[Complex64],
    h: &HistoryState,
    w: &mut [Complex64],
    out: &mut [Complex64],
) {
    let k = h.num_filters;
    let rho_p = h.penalty() * h.fourier.len() as f64;
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = h.b_at(p)[i].conj() + (v_row[i] - theta_row[i]) * rho_p;
    }
    let c = h.inverse_at(p);
    for (j, o) in out.iter_mut().enumerate() {
        *o = (0..k).map(|i| w[i] * c[i * k + j]).sum();
    }
}

/// Euclidean projection of `F^-1(d + theta)` onto filters supported on the
/// leading block with unit norm at most; returned zero-padded.
pub fn project_filter(d_plus_theta: &[Complex64], fourier: &Fourier) -> Result<Vec<f64>> {
    let mut out = vec![0.0; fourier.len()];
    let mut work = Vec::new();
    let mut spatial = vec![0.0; fourier.len()];
    project_filter_into(d_plus_theta, fourier, &mut work, &mut spatial, &mut out)?;
    Ok(out)
}

pub(crate) fn project_filter_into(
    d_plus_theta: &[Complex64],
    fourier: &Fourier,
    work: &mut Vec<Complex64>,
    spatial: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    fourier.inverse_into(d_plus_theta, work, spatial)?;
    let shape = fourier.shape();
    let mut alpha = crop_filter(spatial, shape)?;
    let norm = norm_sq(&alpha).sqrt();
    if norm > 1.0 {
        for a in alpha.iter_mut() {
            *a /= norm;
        }
    }
    pad_filter_into(&alpha, shape, out)
}

/// ADMM iterate of the dictionary subproblem. Arrays are `P x K`, column
/// after column.
#[derive(Clone, Debug, PartialEq)]
pub struct DictState {
    pub d_freq: Vec<Complex64>,
    /// Spatial auxiliary, zero-padded to `P` per column.
    pub v: Vec<f64>,
    /// `F(V)`, kept in sync with `v`.
    pub v_freq: Vec<Complex64>,
    /// Scaled dual of `D~ = F(V)`.
    pub theta: Vec<Complex64>,
}

impl DictState {
    /// Starts from a dictionary whose filters are already feasible.
    pub fn from_dictionary(dict: &FreqDictionary) -> Result<Self> {
        let fourier = dict.fourier();
        let p = fourier.len();
        let k = dict.num_filters();
        let mut v = vec![0.0; p * k];
        let mut v_freq = Vec::with_capacity(p * k);
        let mut work = Vec::new();
        let mut spatial = vec![0.0; p];
        let mut spectrum = Vec::with_capacity(p);
        for col in 0..k {
            project_filter_into(
                dict.column(col),
                fourier,
                &mut work,
                &mut spatial,
                &mut v[col * p..(col + 1) * p],
            )?;
            fourier.forward_into(&v[col * p..(col + 1) * p], &mut spectrum)?;
            v_freq.extend_from_slice(&spectrum);
        }
        Ok(Self {
            d_freq: dict.data().to_vec(),
            v,
            v_freq,
            theta: vec![Complex64::default(); p * k],
        })
    }

    pub fn num_filters(&self, p: usize) -> usize {
        self.v.len() / p
    }

    /// `F(V)`: the feasible dictionary.
    pub fn feasible(&self, fourier: &Arc<Fourier>) -> Result<FreqDictionary> {
        let p = fourier.len();
        FreqDictionary::from_columns(Arc::clone(fourier), self.v.len() / p, self.v_freq.clone())
    }

    /// `max_k ||D~(:,k) - F(V(:,k))|| / ||D~(:,k)||`.
    pub fn constraint_violation(&self, p: usize) -> f64 {
        self.d_freq
            .chunks(p)
            .zip(self.v_freq.chunks(p))
            .map(|(d, v)| {
                let diff: f64 = d.iter().zip(v).map(|(a, b)| (a - b).norm_sqr()).sum();
                let scale = complex_norm_sq(d);
                if scale == 0.0 {
                    diff.sqrt()
                } else {
                    (diff / scale).sqrt()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Stepwise dictionary ADMM.
pub struct DictAdmm<'a> {
    h: &'a HistoryState,
    state: DictState,
    rounds: usize,
    v_row: Vec<Complex64>,
    t_row: Vec<Complex64>,
    w: Vec<Complex64>,
    d_row: Vec<Complex64>,
    sum: Vec<Complex64>,
    work: Vec<Complex64>,
    spatial: Vec<f64>,
    spectrum: Vec<Complex64>,
}

impl<'a> DictAdmm<'a> {
    /// `V` starts from `prev`, the dual starts at zero.
    pub fn new(prev: &DictState, h: &'a HistoryState) -> Result<Self> {
        if h.t == 0 {
            return Err(Error::UninitializedHistory);
        }
        let p = h.fourier.len();
        let k = h.num_filters;
        if prev.v.len() != p * k || prev.d_freq.len() != p * k || prev.v_freq.len() != p * k {
            return Err(Error::Shape(
                "dictionary state does not match history".into(),
            ));
        }
        let mut state = prev.clone();
        state
            .theta
            .iter_mut()
            .for_each(|v| *v = Complex64::default());
        Ok(Self {
            h,
            state,
            rounds: 0,
            v_row: vec![Complex64::default(); k],
            t_row: vec![Complex64::default(); k],
            w: vec![Complex64::default(); k],
            d_row: vec![Complex64::default(); k],
            sum: vec![Complex64::default(); p],
            work: Vec::with_capacity(p),
            spatial: vec![0.0; p],
            spectrum: Vec::with_capacity(p),
        })
    }

    pub fn state(&self) -> &DictState {
        &self.state
    }

    pub fn into_state(self) -> DictState {
        self.state
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn step(&mut self) -> Result<()> {
        let fourier = &*self.h.fourier;
        let p_len = fourier.len();
        let k = self.h.num_filters;
        let st = &mut self.state;

        for p in 0..p_len {
            for col in 0..k {
                self.v_row[col] = st.v_freq[col * p_len + p];
                self.t_row[col] = st.theta[col * p_len + p];
            }
            solve_dict_row_into(
                p,
                &self.v_row,
                &self.t_row,
                self.h,
                &mut self.w,
                &mut self.d_row,
            );
            for col in 0..k {
                st.d_freq[col * p_len + p] = self.d_row[col];
            }
        }

        for col in 0..k {
            let range = col * p_len..(col + 1) * p_len;
            for ((s, d), t) in self
                .sum
                .iter_mut()
                .zip(&st.d_freq[range.clone()])
                .zip(&st.theta[range.clone()])
            {
                *s = d + t;
            }
            project_filter_into(
                &self.sum,
                fourier,
                &mut self.work,
                &mut self.spatial,
                &mut st.v[range.clone()],
            )?;
            fourier.forward_into(&st.v[range.clone()], &mut self.spectrum)?;
            st.v_freq[range.clone()].copy_from_slice(&self.spectrum);
            for ((t, d), v) in st.theta[range.clone()]
                .iter_mut()
                .zip(&st.d_freq[range.clone()])
                .zip(&self.spectrum)
            {
                *t += d - v;
            }
        }
        self.rounds += 1;
        if !st
            .d_freq
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
        {
            return Err(Error::Divergence {
                iteration: self.rounds,
                context: "non-finite dictionary".into(),
            });
        }
        Ok(())
    }
}

/// Runs `rounds` ADMM rounds of the dictionary update.
pub fn dict_ocsc(prev: &DictState, h: &HistoryState, rounds: usize) -> Result<DictState> {
    if rounds == 0 {
        return Ok(prev.clone());
    }
    let mut admm = DictAdmm::new(prev, h)?;
    for _ in 0..rounds {
        admm.step()?;
    }
    Ok(admm.into_state())
}

/// Runs until both the relative constraint violation and the relative
/// change in `V` drop below `tol`, or `max_rounds` is reached. Returns the
/// state and the rounds used.
pub fn dict_ocsc_until(
    prev: &DictState,
    h: &HistoryState,
    max_rounds: usize,
    tol: f64,
) -> Result<(DictState, usize)> {
    let mut admm = DictAdmm::new(prev, h)?;
    let p = h.fourier.len();
    let mut v_prev = prev.v.clone();
    while admm.rounds() < max_rounds {
        admm.step()?;
        let v = &admm.state().v;
        let diff: f64 = v.iter().zip(&v_prev).map(|(a, b)| (a - b) * (a - b)).sum();
        let scale = norm_sq(v).max(f64::MIN_POSITIVE);
        if admm.state().constraint_violation(p) < tol && (diff / scale).sqrt() < tol {
            break;
        }
        v_prev.copy_from_slice(v);
    }
    let rounds = admm.rounds();
    Ok((admm.into_state(), rounds))
}

/// Surrogate objective `(1/2P) sum_p D A D^H - (1/P) sum_p Re(D b)`, with
/// `A^p` recovered from `C^p`. Equals the averaged data term up to the
/// constant `(1/2tP) sum_i ||x~_i||^2`.
pub fn eval_dict_objective(d_freq: &[Complex64], h: &HistoryState) -> Result<f64> {
    if h.t == 0 {
        return Err(Error::UninitializedHistory);
    }
    let k = h.num_filters;
    let p_len = h.fourier.len();
    check_dict_len(d_freq, p_len, k)?;
    let mut row = vec![Complex64::default(); k];
    let mut total = 0.0;
    for p in 0..p_len {
        let a = h.reconstruct_gram(p)?;
        let a: Vec<Complex64> = (0..k * k).map(|idx| a[(idx / k, idx % k)]).collect();
        for (kk, slot) in row.iter_mut().enumerate() {
            *slot = d_freq[kk * p_len + p];
        }
        total += row_objective(&row, &a, h.b_at(p));
    }
    Ok(total / p_len as f64)
}

//! Training drivers: the online learner, the batch alternating baseline, the
//! projected-gradient (FISTA) dictionary baseline, and synthetic data.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coding::{CodeAdmm, CodeState, CodingConfig};
use crate::dict_online::{
    dict_ocsc, dict_ocsc_until, project_filter_into, DictState, HistoryState, RawHistory,
};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{FreqDictionary, Sample, SpatialDictionary};
use crate::tensor_freq::{complex_norm_sq, crop_filter, norm_sq, Fourier, SignalShape};

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;

/// Batch dictionary steps run to this constraint violation.
pub const BATCH_DICT_TOL: f64 = 1e-4;
pub const BATCH_DICT_MAX_ROUNDS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Online,
    Batch,
    /// Online schedule with the dictionary step solved by FISTA on the raw
    /// history.
    FistaDict,
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(Self::Online),
            "batch" => Ok(Self::Batch),
            "fista-dict" | "fista" => Ok(Self::FistaDict),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode {other:?}, expected online, batch or fista-dict"
            ))),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Online => "online",
            Self::Batch => "batch",
            Self::FistaDict => "fista-dict",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub num_filters: usize,
    pub filter_dims: Vec<usize>,
    pub beta: f64,
    pub rho_code: f64,
    pub rho_dict: f64,
    /// Dictionary ADMM (or FISTA) iterations per sample.
    pub inner_j: usize,
    pub max_passes: usize,
    pub stop_tol: f64,
    pub seed: u64,
    pub mode: TrainMode,
    pub code_max_iters: usize,
    pub code_rel_tol: f64,
    /// Also record every this many samples in online modes.
    pub eval_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_filters: 100,
            filter_dims: vec![11, 11],
            beta: 1.0,
            rho_code: 1.0,
            rho_dict: 10.0,
            inner_j: 10,
            max_passes: 10,
            stop_tol: 1e-3,
            seed: 0,
            mode: TrainMode::Online,
            code_max_iters: 300,
            code_rel_tol: 1e-3,
            eval_every: None,
        }
    }
}

impl TrainConfig {
    pub fn coding(&self) -> CodingConfig {
        CodingConfig {
            beta: self.beta,
            rho: self.rho_code,
            max_iters: self.code_max_iters,
            rel_tol: self.code_rel_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.coding().validate()?;
        let bad = |what: &str| Err(Error::InvalidConfig(format!("{what} must be positive")));
        if self.num_filters == 0 {
            return bad("K");
        }
        if self.filter_dims.is_empty()
            || self.filter_dims.len() > 2
            || self.filter_dims.contains(&0)
        {
            return Err(Error::InvalidConfig(format!(
                "bad filter dims {:?}",
                self.filter_dims
            )));
        }
        if !(self.rho_dict > 0.0) || !self.rho_dict.is_finite() {
            return bad("rho_dict");
        }
        if self.inner_j == 0 {
            return bad("inner_j");
        }
        if self.max_passes == 0 {
            return bad("max_passes");
        }
        if !(self.stop_tol > 0.0) {
            return bad("stop_tol");
        }
        if self.eval_every == Some(0) {
            return bad("eval_every");
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct PassRecord {
    pub pass: usize,
    pub samples_seen: u64,
    /// Training wall time so far; evaluation is not counted.
    pub time_s: f64,
    /// Mean per-sample objective at the codes computed during the pass.
    pub train_objective: f64,
    pub test_objective: Option<f64>,
    pub psnr: Option<f64>,
    pub history_bytes: usize,
    /// CRC-32 of the dictionary payload at this point.
    pub snapshot_id: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub records: Vec<PassRecord>,
    pub samples_seen: u64,
    pub stopped_early: bool,
}

/// Random-access sample provider; lets online training stream from disk.
pub trait SampleSource {
    fn len(&self) -> usize;

    fn get(&self, index: usize) -> Result<Sample>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSource for [Sample] {
    fn len(&self) -> usize {
        <[Sample]>::len(self)
    }

    fn get(&self, index: usize) -> Result<Sample> {
        self.as_ref()
            .get(index)
            .cloned()
            .ok_or_else(|| Error::Shape(format!("sample index {index} out of range")))
    }
}

impl SampleSource for Vec<Sample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn get(&self, index: usize) -> Result<Sample> {
        SampleSource::get(self.as_slice(), index)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// I.i.d. standard normal filters, each scaled to unit norm.
pub fn init_spatial_dictionary(cfg: &TrainConfig) -> Result<SpatialDictionary> {
    let m: usize = cfg.filter_dims.iter().product();
    let mut rng = stream_rng(cfg.seed, STREAM_INIT);
    let mut filters = Vec::with_capacity(m * cfg.num_filters);
    for _ in 0..cfg.num_filters {
        let mut f: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let norm = norm_sq(&f).sqrt();
        if norm > 0.0 {
            f.iter_mut().for_each(|v| *v /= norm);
        }
        filters.extend(f);
    }
    SpatialDictionary::new(cfg.filter_dims.clone(), cfg.num_filters, filters)
}

pub fn init_dictionary(cfg: &TrainConfig, fourier: &Arc<Fourier>) -> Result<FreqDictionary> {
    init_spatial_dictionary(cfg)?.to_freq(fourier)
}

fn relative_change(new: &[Complex64], old: &[Complex64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b).norm_sqr()).sum();
    let scale = complex_norm_sq(new);
    if scale == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (diff / scale).sqrt()
    }
}

fn relative_change_real(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum();
    let scale = norm_sq(new);
    if scale == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (diff / scale).sqrt()
    }
}

/// `F(U)` column by column.
fn code_spectrum(fourier: &Fourier, u: &[f64]) -> Result<Vec<Complex64>> {
    let p = fourier.len();
    let mut out = Vec::with_capacity(u.len());
    let mut spectrum = Vec::with_capacity(p);
    for column in u.chunks(p) {
        fourier.forward_into(column, &mut spectrum)?;
        out.extend_from_slice(&spectrum);
    }
    Ok(out)
}

/// `1/2 ||x - D * U||^2 + beta ||U||_1` from spectra.
fn sample_objective(
    dict: &FreqDictionary,
    x_freq: &[Complex64],
    z_freq: &[Complex64],
    u: &[f64],
    beta: f64,
) -> f64 {
    let rec = dict.reconstruct_freq(z_freq);
    let fit: f64 = rec
        .iter()
        .zip(x_freq)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        / x_freq.len() as f64;
    let l1: f64 = u.iter().map(|v| v.abs()).sum();
    0.5 * fit + beta * l1
}

fn snapshot_id(dict: &SpatialDictionary) -> u32 {
    let mut hasher = crc32fast::Hasher::new();
    for v in dict.filters() {
        hasher.update(&v.to_le_bytes());
    }
    hasher.finalize()
}

enum Learner {
    Admm {
        history: HistoryState,
        state: DictState,
    },
    Fista {
        history: RawHistory,
    },
}

/// Outcome of one online step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    /// `||U_t - U_{t-1}|| / ||U_t||` between consecutive samples.
    pub code_change: f64,
    /// `||D_t - D_{t-1}|| / ||D_t||`.
    pub dict_change: f64,
    /// Objective of the sample at its code, before the dictionary moved.
    pub objective: f64,
    pub code_iterations: usize,
}

/// Streaming learner: one sample in, one dictionary update out. State size
/// depends on `(K, P)` only.
pub struct OnlineTrainer {
    cfg: TrainConfig,
    coding: CodingConfig,
    fourier: Arc<Fourier>,
    dict: FreqDictionary,
    learner: Learner,
    prev_code: Option<Vec<f64>>,
}

impl OnlineTrainer {
    pub fn new(cfg: &TrainConfig, signal_dims: &[usize]) -> Result<Self> {
        cfg.validate()?;
        let shape = SignalShape::new(signal_dims.to_vec(), cfg.filter_dims.clone())?;
        let fourier = Arc::new(Fourier::new(&shape));
        let init = init_dictionary(cfg, &fourier)?;
        Self::with_dictionary(cfg, init)
    }

    /// Starts from a given dictionary; its filters are projected to the
    /// unit ball first.
    pub fn with_dictionary(cfg: &TrainConfig, init: FreqDictionary) -> Result<Self> {
        cfg.validate()?;
        let fourier = Arc::clone(init.fourier());
        let k = init.num_filters();
        let state = DictState::from_dictionary(&init)?;
        let dict = state.feasible(&fourier)?;
        let learner = match cfg.mode {
            TrainMode::FistaDict => Learner::Fista {
                history: RawHistory::new(Arc::clone(&fourier), k)?,
            },
            _ => Learner::Admm {
                history: HistoryState::new(Arc::clone(&fourier), k, cfg.rho_dict)?,
                state,
            },
        };
        Ok(Self {
            cfg: cfg.clone(),
            coding: cfg.coding(),
            fourier,
            dict,
            learner,
            prev_code: None,
        })
    }

    pub fn shape(&self) -> &SignalShape {
        self.fourier.shape()
    }

    pub fn samples_seen(&self) -> u64 {
        match &self.learner {
            Learner::Admm { history, .. } => history.t(),
            Learner::Fista { history } => history.t(),
        }
    }

    pub fn history_bytes(&self) -> usize {
        match &self.learner {
            Learner::Admm { history, .. } => history.byte_size(),
            Learner::Fista { history } => history.byte_size(),
        }
    }

    pub fn history(&self) -> Option<&HistoryState> {
        match &self.learner {
            Learner::Admm { history, .. } => Some(history),
            Learner::Fista { .. } => None,
        }
    }

    /// Current feasible frequency dictionary.
    pub fn freq_dictionary(&self) -> &FreqDictionary {
        &self.dict
    }

    pub fn dictionary(&self) -> Result<SpatialDictionary> {
        match &self.learner {
            Learner::Admm { state, .. } => {
                let shape = self.fourier.shape();
                let p = shape.len();
                let mut filters = Vec::with_capacity(shape.filter_len() * self.dict.num_filters());
                for column in state.v.chunks(p) {
                    filters.extend(crop_filter(column, shape)?);
                }
                SpatialDictionary::new(
                    shape.filter_dims().to_vec(),
                    self.dict.num_filters(),
                    filters,
                )
            }
            Learner::Fista { .. } => self.dict.to_spatial(),
        }
    }

    pub fn step(&mut self, x: &Sample) -> Result<StepInfo> {
        x.check_shape(self.fourier.shape())?;
        let x_freq = self.fourier.forward(x.data())?;
        let x_norm = norm_sq(x.data()).sqrt();
        let code =
            CodeAdmm::from_freq(x_freq.clone(), x_norm, &self.dict, self.coding, None)?.run()?;
        let z_freq = code_spectrum(&self.fourier, &code.u)?;
        let objective = sample_objective(&self.dict, &x_freq, &z_freq, &code.u, self.cfg.beta);

        let new_dict = match &mut self.learner {
            Learner::Admm { history, state } => {
                history.update(&z_freq, &x_freq)?;
                *state = dict_ocsc(state, history, self.cfg.inner_j)?;
                state.feasible(&self.fourier)?
            }
            Learner::Fista { history } => {
                history.update(&z_freq, &x_freq)?;
                fista_dict_update(history, &self.dict, self.cfg.inner_j)?.0
            }
        };
        let dict_change = relative_change(new_dict.data(), self.dict.data());
        self.dict = new_dict;
        let code_change = match &self.prev_code {
            Some(prev) => relative_change_real(&code.u, prev),
            None => f64::INFINITY,
        };
        let code_iterations = code.iterations;
        self.prev_code = Some(code.u);
        Ok(StepInfo {
            code_change,
            dict_change,
            objective,
            code_iterations,
        })
    }
}

struct Recorder<'a> {
    test_set: Option<&'a [Sample]>,
    coding: CodingConfig,
    report: TrainReport,
}

impl Recorder<'_> {
    fn record(
        &mut self,
        pass: usize,
        samples_seen: u64,
        time_s: f64,
        train_objective: f64,
        history_bytes: usize,
        dict: &SpatialDictionary,
    ) -> Result<()> {
        let (test_objective, psnr) = match self.test_set {
            Some(test) if !test.is_empty() => {
                let r = evaluate(dict, test, &self.coding, false)?;
                (Some(r.test_objective), Some(r.psnr))
            }
            _ => (None, None),
        };
        log::info!(
            "pass {pass} samples {samples_seen} time {time_s:.3}s train {train_objective:.6} test {test_objective:?}"
        );
        self.report.records.push(PassRecord {
            pass,
            samples_seen,
            time_s,
            train_objective,
            test_objective,
            psnr,
            history_bytes,
            snapshot_id: snapshot_id(dict),
        });
        Ok(())
    }
}

/// Online training over `data`, shuffled once per pass.
pub fn train_online<S: SampleSource + ?Sized>(
    data: &S,
    cfg: &TrainConfig,
    test_set: Option<&[Sample]>,
) -> Result<(SpatialDictionary, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Ok((init_spatial_dictionary(cfg)?, TrainReport::default()));
    }
    let first = data.get(0).map_err(|e| e.at_sample(0))?;
    let mut trainer = OnlineTrainer::new(cfg, first.dims()).map_err(|e| e.at_sample(0))?;
    drop(first);
    let mut rng = stream_rng(cfg.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rec = Recorder {
        test_set,
        coding: cfg.coding(),
        report: TrainReport::default(),
    };
    let mut elapsed = 0.0;

    'passes: for pass in 1..=cfg.max_passes {
        order.shuffle(&mut rng);
        let mut obj_sum = 0.0;
        let mut count = 0usize;
        for &idx in &order {
            let start = Instant::now();
            let x = data.get(idx).map_err(|e| e.at_sample(idx))?;
            let info = trainer.step(&x).map_err(|e| e.at_sample(idx))?;
            elapsed += start.elapsed().as_secs_f64();
            obj_sum += info.objective;
            count += 1;
            let seen = trainer.samples_seen();
            let converged = info.code_change < cfg.stop_tol && info.dict_change < cfg.stop_tol;
            if converged {
                rec.report.stopped_early = true;
                rec.record(
                    pass,
                    seen,
                    elapsed,
                    obj_sum / count as f64,
                    trainer.history_bytes(),
                    &trainer.dictionary()?,
                )?;
                break 'passes;
            }
            if let Some(every) = cfg.eval_every {
                if seen % every as u64 == 0 && count < order.len() {
                    rec.record(
                        pass,
                        seen,
                        elapsed,
                        obj_sum / count as f64,
                        trainer.history_bytes(),
                        &trainer.dictionary()?,
                    )?;
                }
            }
        }
        rec.record(
            pass,
            trainer.samples_seen(),
            elapsed,
            obj_sum / count as f64,
            trainer.history_bytes(),
            &trainer.dictionary()?,
        )?;
    }
    let mut report = rec.report;
    report.samples_seen = trainer.samples_seen();
    Ok((trainer.dictionary()?, report))
}

/// Penalty of a batch dictionary step: `rho P` equals `rho_dict` times the
/// mean eigenvalue of the `A^p`, so ADMM is equally well conditioned at any
/// code scale. Falls back to `rho_dict` for all-zero codes.
pub fn batch_penalty(raw: &RawHistory, rho_dict: f64) -> f64 {
    let scale = raw.mean_eigenvalue() / raw.fourier().len() as f64;
    if scale > 0.0 && scale.is_finite() {
        rho_dict * scale
    } else {
        rho_dict
    }
}

/// Alternates coding every sample and solving the dictionary subproblem on
/// the batch history.
pub fn train_batch(
    data: &[Sample],
    cfg: &TrainConfig,
    test_set: Option<&[Sample]>,
) -> Result<(SpatialDictionary, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Ok((init_spatial_dictionary(cfg)?, TrainReport::default()));
    }
    let shape = SignalShape::new(data[0].dims().to_vec(), cfg.filter_dims.clone())?;
    for (i, x) in data.iter().enumerate() {
        x.check_shape(&shape).map_err(|e| e.at_sample(i))?;
    }
    let fourier = Arc::new(Fourier::new(&shape));
    let k = cfg.num_filters;
    let coding = cfg.coding();
    let x_freqs = data
        .iter()
        .map(|x| fourier.forward(x.data()))
        .collect::<Result<Vec<_>>>()?;
    let x_norms: Vec<f64> = data.iter().map(|x| norm_sq(x.data()).sqrt()).collect();

    let mut state = DictState::from_dictionary(&init_dictionary(cfg, &fourier)?)?;
    let mut dict = state.feasible(&fourier)?;
    let mut codes: Vec<Option<CodeState>> = vec![None; data.len()];
    let mut rec = Recorder {
        test_set,
        coding,
        report: TrainReport::default(),
    };
    let mut elapsed = 0.0;

    for pass in 1..=cfg.max_passes {
        let start = Instant::now();
        let mut z_freqs = Vec::with_capacity(data.len());
        let mut obj_sum = 0.0;
        let mut code_change = 0.0;
        for i in 0..data.len() {
            let code = CodeAdmm::from_freq(
                x_freqs[i].clone(),
                x_norms[i],
                &dict,
                coding,
                codes[i].as_ref(),
            )
            .and_then(|a| a.run())
            .map_err(|e| e.at_sample(i))?;
            let z = code_spectrum(&fourier, &code.u)?;
            obj_sum += sample_objective(&dict, &x_freqs[i], &z, &code.u, cfg.beta);
            code_change += match &codes[i] {
                Some(prev) => relative_change_real(&code.u, &prev.u),
                None => f64::INFINITY,
            };
            z_freqs.push(z);
            codes[i] = Some(code);
        }
        code_change /= data.len() as f64;

        let mut raw = RawHistory::new(Arc::clone(&fourier), k)?;
        for (x, z) in x_freqs.iter().zip(&z_freqs) {
            raw.update(z, x)?;
        }
        let history = HistoryState::from_raw(&raw, batch_penalty(&raw, cfg.rho_dict))?;
        let history_bytes = history.byte_size();
        let (next, rounds) =
            dict_ocsc_until(&state, &history, BATCH_DICT_MAX_ROUNDS, BATCH_DICT_TOL)?;
        log::debug!("batch pass {pass}: dictionary ADMM took {rounds} rounds");
        state = next;
        let new_dict = state.feasible(&fourier)?;
        let dict_change = relative_change(new_dict.data(), dict.data());
        dict = new_dict;
        elapsed += start.elapsed().as_secs_f64();

        let spatial = dict.to_spatial()?;
        rec.record(
            pass,
            pass as u64 * data.len() as u64,
            elapsed,
            obj_sum / data.len() as f64,
            history_bytes,
            &spatial,
        )?;
        if code_change < cfg.stop_tol && dict_change < cfg.stop_tol {
            rec.report.stopped_early = true;
            break;
        }
    }
    let mut report = rec.report;
    report.samples_seen = report.records.last().map_or(0, |r| r.samples_seen);
    Ok((dict.to_spatial()?, report))
}

/// Dispatches on `cfg.mode`.
pub fn train<S: SampleSource + ?Sized>(
    data: &S,
    cfg: &TrainConfig,
    test_set: Option<&[Sample]>,
) -> Result<(SpatialDictionary, TrainReport)> {
    match cfg.mode {
        TrainMode::Online | TrainMode::FistaDict => train_online(data, cfg, test_set),
        TrainMode::Batch => {
            let all = (0..data.len())
                .map(|i| data.get(i).map_err(|e| e.at_sample(i)))
                .collect::<Result<Vec<_>>>()?;
            train_batch(&all, cfg, test_set)
        }
    }
}

/// Projects every column onto filters supported on the leading block with
/// norm at most one, in place.
fn project_columns(data: &mut [Complex64], fourier: &Fourier) -> Result<()> {
    let p = fourier.len();
    let mut work = Vec::with_capacity(p);
    let mut spatial = vec![0.0; p];
    let mut padded = vec![0.0; p];
    let mut spectrum = Vec::with_capacity(p);
    for column in data.chunks_mut(p) {
        project_filter_into(column, fourier, &mut work, &mut spatial, &mut padded)?;
        fourier.forward_into(&padded, &mut spectrum)?;
        column.copy_from_slice(&spectrum);
    }
    Ok(())
}

/// Gradient of the surrogate objective: row `p` is `(1/P)(d A^p - b^p^H)`.
fn surrogate_gradient(h: &RawHistory, d: &[Complex64], out: &mut [Complex64]) {
    let k = h.num_filters();
    let p_len = h.fourier().len();
    let inv_p = 1.0 / p_len as f64;
    for p in 0..p_len {
        let a = h.gram_at(p);
        let b = h.b_at(p);
        for j in 0..k {
            let mut acc = Complex64::default();
            for i in 0..k {
                acc += d[i * p_len + p] * a[i * k + j];
            }
            out[j * p_len + p] = (acc - b[j].conj()) * inv_p;
        }
    }
}

/// `max_p lambda_max(A^p) / P`.
pub fn lipschitz_constant(h: &RawHistory) -> f64 {
    let p_len = h.fourier().len();
    (0..p_len)
        .map(|p| h.max_eigenvalue(p, 50))
        .fold(0.0, f64::max)
        / p_len as f64
}

/// Accelerated projected gradient on the surrogate objective. Returns the
/// final dictionary and the objective after every iteration.
pub fn fista_dict_update(
    h: &RawHistory,
    d_init: &FreqDictionary,
    iters: usize,
) -> Result<(FreqDictionary, Vec<f64>)> {
    if h.t() == 0 {
        return Err(Error::UninitializedHistory);
    }
    let fourier = Arc::clone(h.fourier());
    let k = h.num_filters();
    if d_init.num_filters() != k || d_init.fourier().len() != fourier.len() {
        return Err(Error::Shape(
            "initial dictionary does not match history".into(),
        ));
    }
    let lipschitz = lipschitz_constant(h);
    let mut trace = Vec::with_capacity(iters);
    if lipschitz <= 0.0 {
        let obj = h.objective(d_init.data())?;
        trace.resize(iters, obj);
        return Ok((d_init.clone(), trace));
    }
    let step = 1.0 / lipschitz;
    let mut d = d_init.data().to_vec();
    let mut y = d.clone();
    let mut grad = vec![Complex64::default(); d.len()];
    let mut momentum = 1.0f64;
    for iteration in 1..=iters {
        surrogate_gradient(h, &y, &mut grad);
        let mut next: Vec<Complex64> = y.iter().zip(&grad).map(|(a, g)| a - g * step).collect();
        project_columns(&mut next, &fourier)?;
        let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let w = (momentum - 1.0) / m_next;
        for ((yi, ni), di) in y.iter_mut().zip(&next).zip(&d) {
            *yi = ni + (ni - di) * w;
        }
        d = next;
        momentum = m_next;
        let obj = h.objective(&d)?;
        if !obj.is_finite() {
            return Err(Error::Divergence {
                iteration,
                context: "FISTA dictionary objective is not finite".into(),
            });
        }
        trace.push(obj);
    }
    Ok((FreqDictionary::from_columns(fourier, k, d)?, trace))
}

/// `L ||D - proj(D - grad / L)||`, the gradient mapping of the surrogate
/// objective over the feasible set. Zero exactly at stationary points.
pub fn projected_gradient_norm(h: &RawHistory, dict: &FreqDictionary) -> Result<f64> {
    if h.t() == 0 {
        return Err(Error::UninitializedHistory);
    }
    let lipschitz = lipschitz_constant(h);
    if lipschitz <= 0.0 {
        return Ok(0.0);
    }
    let d = dict.data();
    let mut grad = vec![Complex64::default(); d.len()];
    surrogate_gradient(h, d, &mut grad);
    let mut moved: Vec<Complex64> = d
        .iter()
        .zip(&grad)
        .map(|(a, g)| a - g / lipschitz)
        .collect();
    project_columns(&mut moved, h.fourier())?;
    let diff: f64 = d.iter().zip(&moved).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(lipschitz * diff.sqrt())
}

/// Synthetic problem description.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub dims: Vec<usize>,
    pub filter_dims: Vec<usize>,
    pub num_filters: usize,
    pub num_samples: usize,
    /// Noise level of the consistent variant.
    pub noise_sigma: f64,
    /// Probability that a code entry is nonzero; 1 gives dense codes.
    pub code_density: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(
        dims: Vec<usize>,
        filter_dims: Vec<usize>,
        num_filters: usize,
        num_samples: usize,
        seed: u64,
    ) -> Self {
        Self {
            dims,
            filter_dims,
            num_filters,
            num_samples,
            noise_sigma: 0.01,
            code_density: 1.0,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub dictionary: SpatialDictionary,
    /// Spatial codes per sample, `P x K` column after column.
    pub codes: Vec<Vec<f64>>,
    /// Independent standard normal signals.
    pub raw: Vec<Sample>,
    /// `sum_k d_k * z_k + sigma * noise`.
    pub consistent: Vec<Sample>,
}

/// Draws filters and codes from `N(0, 1)`, projects filters to the unit
/// ball and emits both signal variants. Deterministic in the seed.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthData> {
    let shape = SignalShape::new(spec.dims.clone(), spec.filter_dims.clone())?;
    if spec.num_filters == 0 {
        return Err(Error::InvalidConfig("need at least one filter".into()));
    }
    if !(spec.code_density > 0.0 && spec.code_density <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "code density must lie in (0, 1], got {}",
            spec.code_density
        )));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::InvalidConfig("noise sigma must be >= 0".into()));
    }
    let p = shape.len();
    let m = shape.filter_len();
    let k = spec.num_filters;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut filters: Vec<f64> = (0..k * m).map(|_| rng.sample(StandardNormal)).collect();
    for f in filters.chunks_mut(m) {
        let norm = norm_sq(f).sqrt();
        if norm > 1.0 {
            f.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let dictionary = SpatialDictionary::new(spec.filter_dims.clone(), k, filters)?;
    let fourier = Arc::new(Fourier::new(&shape));
    let freq = dictionary.to_freq(&fourier)?;

    let mut codes = Vec::with_capacity(spec.num_samples);
    let mut raw = Vec::with_capacity(spec.num_samples);
    let mut consistent = Vec::with_capacity(spec.num_samples);
    for _ in 0..spec.num_samples {
        let z: Vec<f64> = (0..k * p)
            .map(|_| {
                let v: f64 = rng.sample(StandardNormal);
                if spec.code_density >= 1.0 || rng.random::<f64>() < spec.code_density {
                    v
                } else {
                    0.0
                }
            })
            .collect();
        let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        raw.push(Sample::new(spec.dims.clone(), x)?);
        let mut y = freq.reconstruct(&z)?;
        for v in y.iter_mut() {
            *v += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
        consistent.push(Sample::new(spec.dims.clone(), y)?);
        codes.push(z);
    }
    Ok(SynthData {
        dictionary,
        codes,
        raw,
        consistent,
    })
}

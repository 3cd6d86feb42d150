//! C ABI over the `ocsc` library.
//!
//! Objects are opaque handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible call returns an
//! [`OcscStatus`]; on failure, [`ocsc_last_error_message`] describes the
//! error for the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::slice;
use std::sync::Arc;

use ocsc::coding::infer_code;
use ocsc::io::{load_dictionary, save_dictionary};
use ocsc::pipeline::TrainMode;
use ocsc::{Error, Fourier, OnlineTrainer, Sample, SignalShape, SpatialDictionary, TrainConfig};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OcscStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Format = 5,
    Divergence = 6,
    Panic = 7,
}

/// A learned dictionary: `K` real filters with one or two axes.
pub struct OcscDictionary {
    inner: SpatialDictionary,
}

/// An online learner bound to one signal shape.
pub struct OcscTrainer {
    inner: OnlineTrainer,
}

/// Training parameters; obtain defaults from [`ocsc_train_config_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct OcscTrainConfig {
    pub num_filters: usize,
    /// Filter extents; only the first `filter_ndims` entries are read.
    pub filter_dims: [usize; 2],
    pub filter_ndims: usize,
    pub beta: f64,
    pub rho_code: f64,
    pub rho_dict: f64,
    pub inner_j: usize,
    pub code_max_iters: usize,
    pub code_rel_tol: f64,
    pub seed: u64,
    /// Nonzero selects the FISTA dictionary step instead of ADMM.
    pub use_fista: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn status_of(e: &Error) -> OcscStatus {
    match e.root() {
        Error::Shape(_) => OcscStatus::Shape,
        Error::InvalidConfig(_) | Error::UninitializedHistory | Error::UndefinedVariance => {
            OcscStatus::InvalidArgument
        }
        Error::Divergence { .. } | Error::NumericalConsistency(_) | Error::NonFinite(_) => {
            OcscStatus::Divergence
        }
        Error::Io { .. } => OcscStatus::Io,
        _ => OcscStatus::Format,
    }
}

struct Fail(OcscStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OcscStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            OcscStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            OcscStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(OcscStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn read_path(path: *const c_char) -> Result<PathBuf, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| {
        Fail(
            OcscStatus::InvalidArgument,
            "path is not valid UTF-8".into(),
        )
    })?;
    Ok(PathBuf::from(s))
}

unsafe fn dims_from(ptr: *const usize, ndims: usize) -> Result<Vec<usize>, Fail> {
    if !(1..=2).contains(&ndims) {
        return Err(Fail(
            OcscStatus::InvalidArgument,
            format!("ndims must be 1 or 2, got {ndims}"),
        ));
    }
    Ok(read_slice(ptr, ndims, "dims")?.to_vec())
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ocsc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Static, NUL-terminated version string.
#[no_mangle]
pub extern "C" fn ocsc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn ocsc_train_config_default() -> OcscTrainConfig {
    let d = TrainConfig::default();
    OcscTrainConfig {
        num_filters: d.num_filters,
        filter_dims: [d.filter_dims[0], d.filter_dims[1]],
        filter_ndims: 2,
        beta: d.beta,
        rho_code: d.rho_code,
        rho_dict: d.rho_dict,
        inner_j: d.inner_j,
        code_max_iters: d.code_max_iters,
        code_rel_tol: d.code_rel_tol,
        seed: d.seed,
        use_fista: 0,
    }
}

/// Builds a dictionary from `num_filters` filters of extent `filter_dims`,
/// stored filter after filter in row-major order.
///
/// # Safety
/// `filter_dims` must point to `ndims` values and `filters` to `len` values.
#[no_mangle]
pub unsafe extern "C" fn ocsc_dictionary_new(
    filter_dims: *const usize,
    ndims: usize,
    num_filters: usize,
    filters: *const f64,
    len: usize,
    out: *mut *mut OcscDictionary,
) -> OcscStatus {
    guard(|| {
        let dims = dims_from(filter_dims, ndims)?;
        let data = read_slice(filters, len, "filters")?.to_vec();
        let inner = SpatialDictionary::new(dims, num_filters, data)?;
        write_out(out, Box::into_raw(Box::new(OcscDictionary { inner })))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ocsc_dictionary_load(
    path: *const c_char,
    out: *mut *mut OcscDictionary,
) -> OcscStatus {
    guard(|| {
        let path = read_path(path)?;
        let inner = load_dictionary(&path)?;
        write_out(out, Box::into_raw(Box::new(OcscDictionary { inner })))
    })
}

/// # Safety
/// `dict` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ocsc_dictionary_save(
    dict: *const OcscDictionary,
    path: *const c_char,
) -> OcscStatus {
    guard(|| {
        let dict = dict.as_ref().ok_or_else(|| null("dictionary"))?;
        let path = read_path(path)?;
        save_dictionary(&dict.inner, &path)?;
        Ok(())
    })
}

/// # Safety
/// `dict` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ocsc_dictionary_free(dict: *mut OcscDictionary) {
    if !dict.is_null() {
        drop(Box::from_raw(dict));
    }
}

/// # Safety
/// `dict` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ocsc_dictionary_shape(
    dict: *const OcscDictionary,
    num_filters: *mut usize,
    filter_len: *mut usize,
) -> OcscStatus {
    guard(|| {
        let dict = dict.as_ref().ok_or_else(|| null("dictionary"))?;
        write_out(num_filters, dict.inner.num_filters())?;
        write_out(filter_len, dict.inner.filter_len())
    })
}

/// Copies all `K * M` filter values into `buf`, which holds `len` values.
///
/// # Safety
/// `dict` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ocsc_dictionary_copy_filters(
    dict: *const OcscDictionary,
    buf: *mut f64,
    len: usize,
) -> OcscStatus {
    guard(|| {
        let dict = dict.as_ref().ok_or_else(|| null("dictionary"))?;
        let src = dict.inner.filters();
        if len != src.len() {
            return Err(Fail(
                OcscStatus::Shape,
                format!("buffer holds {len} values, dictionary has {}", src.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buffer"));
        }
        slice::from_raw_parts_mut(buf, len).copy_from_slice(src);
        Ok(())
    })
}

/// Codes a signal against the dictionary and writes its reconstruction to
/// `out` (same length as the signal).
///
/// # Safety
/// `dims` holds `ndims` extents; `data` and `out` hold their product.
#[no_mangle]
pub unsafe extern "C" fn ocsc_reconstruct(
    dict: *const OcscDictionary,
    dims: *const usize,
    ndims: usize,
    data: *const f64,
    beta: f64,
    out: *mut f64,
) -> OcscStatus {
    guard(|| {
        let dict = dict.as_ref().ok_or_else(|| null("dictionary"))?;
        let dims = dims_from(dims, ndims)?;
        let len: usize = dims.iter().product();
        let x = read_slice(data, len, "data")?;
        let shape = SignalShape::new(dims, dict.inner.filter_dims().to_vec())?;
        let freq = dict.inner.to_freq(&Arc::new(Fourier::new(&shape)))?;
        let cfg = ocsc::CodingConfig {
            beta,
            ..Default::default()
        };
        let code = infer_code(x, &freq, &cfg, None)?;
        let rec = freq.reconstruct(&code.u)?;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        slice::from_raw_parts_mut(out, len).copy_from_slice(&rec);
        Ok(())
    })
}

/// Creates a learner for signals of extent `signal_dims`.
///
/// # Safety
/// `config` must be valid; `signal_dims` holds `ndims` values.
#[no_mangle]
pub unsafe extern "C" fn ocsc_trainer_new(
    config: *const OcscTrainConfig,
    signal_dims: *const usize,
    ndims: usize,
    out: *mut *mut OcscTrainer,
) -> OcscStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        let filter_dims = dims_from(c.filter_dims.as_ptr(), c.filter_ndims)?;
        let dims = dims_from(signal_dims, ndims)?;
        let cfg = TrainConfig {
            num_filters: c.num_filters,
            filter_dims,
            beta: c.beta,
            rho_code: c.rho_code,
            rho_dict: c.rho_dict,
            inner_j: c.inner_j,
            code_max_iters: c.code_max_iters,
            code_rel_tol: c.code_rel_tol,
            seed: c.seed,
            mode: if c.use_fista != 0 {
                TrainMode::FistaDict
            } else {
                TrainMode::Online
            },
            ..TrainConfig::default()
        };
        let inner = OnlineTrainer::new(&cfg, &dims)?;
        write_out(out, Box::into_raw(Box::new(OcscTrainer { inner })))
    })
}

/// Feeds one sample of `len` values. `objective` (may be null) receives the
/// sample's objective at its code.
///
/// # Safety
/// `trainer` must be a live handle; `data` holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ocsc_trainer_step(
    trainer: *mut OcscTrainer,
    data: *const f64,
    len: usize,
    objective: *mut f64,
) -> OcscStatus {
    guard(|| {
        let trainer = trainer.as_mut().ok_or_else(|| null("trainer"))?;
        let dims = trainer.inner.shape().dims().to_vec();
        let expected: usize = dims.iter().product();
        if len != expected {
            return Err(Fail(
                OcscStatus::Shape,
                format!("sample has {len} values, trainer expects {expected}"),
            ));
        }
        let x = Sample::new(dims, read_slice(data, len, "data")?.to_vec())?;
        let info = trainer.inner.step(&x)?;
        if !objective.is_null() {
            objective.write(info.objective);
        }
        Ok(())
    })
}

/// # Safety
/// `trainer` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ocsc_trainer_samples_seen(
    trainer: *const OcscTrainer,
    out: *mut u64,
) -> OcscStatus {
    guard(|| {
        let trainer = trainer.as_ref().ok_or_else(|| null("trainer"))?;
        write_out(out, trainer.inner.samples_seen())
    })
}

/// Bytes held by the learner's history; constant in the sample count.
///
/// # Safety
/// `trainer` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ocsc_trainer_history_bytes(
    trainer: *const OcscTrainer,
    out: *mut usize,
) -> OcscStatus {
    guard(|| {
        let trainer = trainer.as_ref().ok_or_else(|| null("trainer"))?;
        write_out(out, trainer.inner.history_bytes())
    })
}

/// Snapshot of the current dictionary as a new handle.
///
/// # Safety
/// `trainer` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ocsc_trainer_dictionary(
    trainer: *const OcscTrainer,
    out: *mut *mut OcscDictionary,
) -> OcscStatus {
    guard(|| {
        let trainer = trainer.as_ref().ok_or_else(|| null("trainer"))?;
        let inner = trainer.inner.dictionary()?;
        write_out(out, Box::into_raw(Box::new(OcscDictionary { inner })))
    })
}

/// # Safety
/// `trainer` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ocsc_trainer_free(trainer: *mut OcscTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}

//! C ABI over `sdt-core`.
//!
//! Objects cross the boundary as opaque handles (`SdtTensor`, `SdtModel`,
//! `SdtMatrix`) created by this library and released with the matching
//! `*_free` function. Every entry point returns an `SdtStatus`; on failure
//! the message is kept per thread and can be fetched with
//! `sdt_last_error_message`. Panics never unwind into the caller.
//!
//! Dense data is exchanged column-major: a tensor of dims `(I, J, K)` has
//! element `(i, j, k)` at `i + I*(j + J*k)`, a matrix `(r, c)` at `r + rows*c`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sdt_core::decomp::{self, AlsConfig, Init, Model, ModelKind, Ranks};
use sdt_core::error::Error;
use sdt_core::hcm::{self, CorrelationMatrix, HcmOptions, MarketMode, RankPolicy};
use sdt_core::selection::ScanOptions;
use sdt_core::simulation::{simulate, SimConfig};
use sdt_core::spectrum;
use sdt_core::tensor::{Matrix, Tensor3};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdtStatus {
    Ok = 0,
    /// A required pointer was null.
    Null = 1,
    /// Invalid argument (bad ranks, shapes, options).
    Argument = 2,
    /// Index out of range.
    Bounds = 3,
    /// Numerical failure: non-convergence, degenerate fit, domain error.
    Numerical = 4,
    /// Malformed input file.
    Parse = 5,
    Io = 6,
    /// Internal panic caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdtModelKind {
    Parafac = 0,
    Tucker = 1,
    Sdt = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdtInit {
    Auto = 0,
    Random = 1,
    Svd = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdtMarketMode {
    Keep = 0,
    Remove = 1,
}

/// ALS settings; obtain defaults from `sdt_als_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SdtAlsConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub init: SdtInit,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SdtFitSummary {
    pub ssr: f64,
    pub rel_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restart: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SdtSpectrumResult {
    pub kw_statistic: f64,
    pub kw_p_value: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

/// Opaque three-way tensor.
pub struct SdtTensor(Tensor3);

/// Opaque fitted model.
pub struct SdtModel(Model);

/// Opaque dense matrix.
pub struct SdtMatrix(Matrix);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> SdtStatus {
    match e.root() {
        Error::Argument(_) | Error::NonFinite(_) => SdtStatus::Argument,
        Error::Bounds { .. } => SdtStatus::Bounds,
        Error::Parse { .. } | Error::Json(_) => SdtStatus::Parse,
        Error::Io(_) => SdtStatus::Io,
        _ => SdtStatus::Numerical,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

type FfiResult = std::result::Result<(), Fail>;

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> FfiResult) -> SdtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            SdtStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SdtStatus::Null
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SdtStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> std::result::Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> std::result::Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &'static str) -> FfiResult {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn als_config(cfg: Option<&SdtAlsConfig>) -> AlsConfig {
    match cfg {
        None => AlsConfig::default(),
        Some(c) => AlsConfig {
            max_iter: c.max_iter,
            tol: c.tol,
            restarts: c.restarts,
            seed: c.seed,
            init: match c.init {
                SdtInit::Auto => Init::Auto,
                SdtInit::Random => Init::Random,
                SdtInit::Svd => Init::Svd,
            },
        },
    }
}

fn model_kind(k: SdtModelKind) -> ModelKind {
    match k {
        SdtModelKind::Parafac => ModelKind::Parafac,
        SdtModelKind::Tucker => ModelKind::Tucker,
        SdtModelKind::Sdt => ModelKind::Sdt,
    }
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length in
/// bytes, excluding the terminator. Pass `buf = NULL` to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sdt_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sdt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default ALS settings.
#[no_mangle]
pub extern "C" fn sdt_als_config_default() -> SdtAlsConfig {
    let d = AlsConfig::default();
    SdtAlsConfig {
        max_iter: d.max_iter,
        tol: d.tol,
        restarts: d.restarts,
        seed: d.seed,
        init: SdtInit::Auto,
    }
}

/// Creates a tensor from `ni*nj*nk` column-major values.
///
/// # Safety
/// `data` must point to `ni*nj*nk` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdt_tensor_new(ni: usize, nj: usize, nk: usize, data: *const f64, out: *mut *mut SdtTensor) -> SdtStatus {
    guard(|| {
        let len = ni
            .checked_mul(nj)
            .and_then(|v| v.checked_mul(nk))
            .ok_or_else(|| Error::Argument("tensor dimensions overflow".into()))?;
        let values = slice(data, len, "data")?;
        let t = Tensor3::new([ni, nj, nk], values.to_vec())?;
        put(out, SdtTensor(t), "out")
    })
}

/// Reads a tensor in the text format (`dims I J K` header).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdt_tensor_read(path: *const c_char, out: *mut *mut SdtTensor) -> SdtStatus {
    guard(|| {
        if path.is_null() {
            return Err(Fail::Null("path"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::Argument("path is not valid UTF-8".into()))?;
        let f = std::fs::File::open(Path::new(p)).map_err(Error::from)?;
        let t = Tensor3::read_text(std::io::BufReader::new(f))?;
        put(out, SdtTensor(t), "out")
    })
}

/// Writes the three dimensions into `dims[0..3]`.
///
/// # Safety
/// `t` must be a live tensor handle; `dims` must hold 3 writable values.
#[no_mangle]
pub unsafe extern "C" fn sdt_tensor_dims(t: *const SdtTensor, dims: *mut usize) -> SdtStatus {
    guard(|| {
        let t = deref(t, "tensor")?;
        if dims.is_null() {
            return Err(Fail::Null("dims"));
        }
        ptr::copy_nonoverlapping(t.0.dims().as_ptr(), dims, 3);
        Ok(())
    })
}

/// Copies the column-major values into `out`, which must hold exactly
/// `I*J*K` doubles (`len`).
///
/// # Safety
/// `t` must be a live tensor handle; `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdt_tensor_copy(t: *const SdtTensor, out: *mut f64, len: usize) -> SdtStatus {
    guard(|| {
        let t = deref(t, "tensor")?;
        let src = t.0.as_slice();
        if len != src.len() {
            return Err(Error::Argument(format!("buffer holds {len} values, tensor has {}", src.len())).into());
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, len);
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdt_tensor_free(t: *mut SdtTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Fits one model at fixed ranks. PARAFAC uses `p` as its rank and ignores
/// `q`, `r`; SDT requires `p == q`. `cfg` and `summary` may be null.
///
/// # Safety
/// `t` must be a live tensor handle; `out` must be writable; `cfg` and
/// `summary` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn sdt_fit(
    t: *const SdtTensor,
    kind: SdtModelKind,
    p: usize,
    q: usize,
    r: usize,
    cfg: *const SdtAlsConfig,
    out: *mut *mut SdtModel,
    summary: *mut SdtFitSummary,
) -> SdtStatus {
    guard(|| {
        let t = deref(t, "tensor")?;
        let kind = model_kind(kind);
        let ranks = match kind {
            ModelKind::Parafac => Ranks::parafac(p),
            _ => Ranks::tucker(p, q, r),
        };
        let (m, rep) = decomp::fit(&t.0, kind, ranks, &als_config(cfg.as_ref()))?;
        if let Some(s) = summary.as_mut() {
            *s = SdtFitSummary {
                ssr: rep.ssr,
                rel_error: rep.rel_error,
                iterations: rep.iterations,
                converged: rep.converged,
                restart: rep.restart,
            };
        }
        put(out, SdtModel(m), "out")
    })
}

/// Rebuilds the tensor represented by a model.
///
/// # Safety
/// `m` must be a live model handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdt_model_reconstruct(m: *const SdtModel, out: *mut *mut SdtTensor) -> SdtStatus {
    guard(|| {
        let m = deref(m, "model")?;
        put(out, SdtTensor(m.0.reconstruct()), "out")
    })
}

/// Copies factor matrix `mode` (0 = A, 1 = B, 2 = C) into a new matrix.
///
/// # Safety
/// `m` must be a live model handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdt_model_factor(m: *const SdtModel, mode: usize, out: *mut *mut SdtMatrix) -> SdtStatus {
    guard(|| {
        let m = deref(m, "model")?;
        let (a, b, c) = m.0.factors();
        let f = match mode {
            0 => a,
            1 => b,
            2 => c,
            _ => {
                return Err(Error::Bounds {
                    what: "factor mode".into(),
                    index: mode,
                    limit: 2,
                }
                .into())
            }
        };
        put(out, SdtMatrix(f.clone()), "out")
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdt_model_free(m: *mut SdtModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Runs the hidden-correlation pipeline: scan the static rank over
/// `grid[0..grid_len]` (time rank 1), fit, optionally drop the market mode,
/// normalize and project. `selected` (nullable) receives the chosen rank.
///
/// # Safety
/// `t` must be a live tensor handle, `grid` must point to `grid_len` values,
/// `out` must be writable; `cfg` and `selected` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn sdt_build_hcm(
    t: *const SdtTensor,
    kind: SdtModelKind,
    grid: *const usize,
    grid_len: usize,
    market_mode: SdtMarketMode,
    cfg: *const SdtAlsConfig,
    out: *mut *mut SdtMatrix,
    selected: *mut usize,
) -> SdtStatus {
    guard(|| {
        let t = deref(t, "tensor")?;
        let grid = slice(grid, grid_len, "grid")?.to_vec();
        let policy = RankPolicy::Scan {
            grid,
            options: ScanOptions::default(),
        };
        let opts = HcmOptions {
            market_mode: match market_mode {
                SdtMarketMode::Keep => MarketMode::Keep,
                SdtMarketMode::Remove => MarketMode::Remove,
            },
            ..HcmOptions::default()
        };
        let res = hcm::build_hcm(&t.0, model_kind(kind), &policy, &als_config(cfg.as_ref()), &opts)?;
        if let Some(s) = selected.as_mut() {
            *s = res.provenance.selected_rank.unwrap_or(res.provenance.ranks.p);
        }
        put(out, SdtMatrix(res.hcm.into_matrix()), "out")
    })
}

/// Nearest correlation matrix to the symmetric `n x n` column-major `w`.
///
/// # Safety
/// `w` must point to `n*n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdt_nearest_correlation(w: *const f64, n: usize, tol: f64, max_iter: usize, out: *mut *mut SdtMatrix) -> SdtStatus {
    guard(|| {
        let values = slice(w, n.saturating_mul(n), "w")?;
        let m = Matrix::from_column_slice(n, n, values);
        let c = hcm::nearest_correlation(&m, tol, max_iter)?;
        put(out, SdtMatrix(c.into_matrix()), "out")
    })
}

/// Kruskal-Wallis and Kolmogorov-Smirnov tests on the eigenvalues of two
/// correlation matrices.
///
/// # Safety
/// `a`, `b` must be live matrix handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdt_compare_spectra(a: *const SdtMatrix, b: *const SdtMatrix, drop_zero: bool, out: *mut SdtSpectrumResult) -> SdtStatus {
    guard(|| {
        let a = CorrelationMatrix::new(deref(a, "a")?.0.clone())?;
        let b = CorrelationMatrix::new(deref(b, "b")?.0.clone())?;
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        let r = spectrum::compare_spectra(&a, &b, drop_zero)?;
        *out = SdtSpectrumResult {
            kw_statistic: r.kw.statistic,
            kw_p_value: r.kw.p_value,
            ks_statistic: r.ks.statistic,
            ks_p_value: r.ks.p_value,
        };
        Ok(())
    })
}

/// Simulates a covariance tensor with planted block structure using the
/// default (or, with `reduced`, the small) configuration.
/// `omega_true` may be null.
///
/// # Safety
/// `tensor` must be writable; `omega_true` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn sdt_simulate(seed: u64, reduced: bool, tensor: *mut *mut SdtTensor, omega_true: *mut *mut SdtMatrix) -> SdtStatus {
    guard(|| {
        if tensor.is_null() {
            return Err(Fail::Null("tensor"));
        }
        let mut cfg = if reduced { SimConfig::reduced() } else { SimConfig::default() };
        cfg.seed = seed;
        let sim = simulate(&cfg)?;
        if !omega_true.is_null() {
            put(omega_true, SdtMatrix(sim.omega_true.into_matrix()), "omega_true")?;
        }
        put(tensor, SdtTensor(sim.tensor), "tensor")
    })
}

/// # Safety
/// `m` must be a live matrix handle; `rows`, `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdt_matrix_dims(m: *const SdtMatrix, rows: *mut usize, cols: *mut usize) -> SdtStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        if rows.is_null() || cols.is_null() {
            return Err(Fail::Null("rows/cols"));
        }
        *rows = m.0.nrows();
        *cols = m.0.ncols();
        Ok(())
    })
}

/// Copies the column-major values into `out`, which must hold exactly
/// `rows*cols` doubles (`len`).
///
/// # Safety
/// `m` must be a live matrix handle; `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdt_matrix_copy(m: *const SdtMatrix, out: *mut f64, len: usize) -> SdtStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let src = m.0.as_slice();
        if len != src.len() {
            return Err(Error::Argument(format!("buffer holds {len} values, matrix has {}", src.len())).into());
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, len);
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdt_matrix_free(m: *mut SdtMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

//! C ABI over `hermite_lab`.
//!
//! Every entry point returns an [`HlStatus`]; results go through out-pointers. Objects are
//! opaque handles released by their `_free` function. On failure the message is kept per
//! thread and read with [`hl_last_error_message`]. Strings returned to the caller are released
//! with [`hl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hermite_lab::constants::{c_hq, ma_covariance};
use hermite_lab::functionals::{scan_scaling, ScanConfig};
use hermite_lab::hermite::{expand, parse_rational, Polynomial};
use hermite_lab::process::{fgn, HurstSpec, Kernel, MaGrid, MaSimulator};
use hermite_lab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    RankUndefined = 3,
    CriticalCase = 4,
    Regime = 5,
    HlsPrecondition = 6,
    TailMass = 7,
    Numerical = 8,
    Config = 9,
    Io = 10,
    /// Caller buffer has the wrong length.
    BufferSize = 11,
    Panic = 12,
}

/// Polynomial with exact rational coefficients.
pub struct HlPolynomial {
    inner: Polynomial,
}

/// Causal moving-average kernel.
pub struct HlKernel {
    inner: Kernel,
}

/// Reusable sampler of a Hermite-driven moving average on a fixed grid.
pub struct HlSimulator {
    inner: MaSimulator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HlStatus {
    match e {
        Error::InvalidArgument(_) => HlStatus::InvalidArgument,
        Error::RankUndefined => HlStatus::RankUndefined,
        Error::CriticalCase { .. } => HlStatus::CriticalCase,
        Error::Regime(_) => HlStatus::Regime,
        Error::HlsPrecondition(_) => HlStatus::HlsPrecondition,
        Error::TailMass { .. } => HlStatus::TailMass,
        Error::Numerical(_) => HlStatus::Numerical,
        Error::Config(_) | Error::Json(_) => HlStatus::Config,
        Error::Io(_) => HlStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Buffer(usize, usize),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, turning errors and panics into a status plus a stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HlStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            HlStatus::NullPointer
        }
        Ok(Err(Fail::Buffer(got, want))) => {
            set_error(format!("buffer holds {got} values, need {want}"));
            HlStatus::BufferSize
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HlStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail::Lib(Error::Numerical("string contains NUL".into())))
}

/// Message of the last failed call on this thread, or NULL. Owned by the library; valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn hl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn hl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses coefficients in increasing degree, e.g. `"0 0 1/2"`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_polynomial_parse(text: *const c_char, out: *mut *mut HlPolynomial) -> HlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = Polynomial::parse(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(HlPolynomial { inner }));
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`hl_polynomial_parse`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn hl_polynomial_free(p: *mut HlPolynomial) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Centered Hermite rank of `p` for `N(0, variance)`; `variance` is a rational such as `"1"`.
///
/// # Safety
/// Pointers must be valid; `variance` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hl_hermite_rank(p: *const HlPolynomial, variance: *const c_char, out: *mut usize) -> HlStatus {
    guard(|| {
        let p = ref_arg(p, "polynomial")?;
        let out = out_arg(out, "out")?;
        let v = parse_rational(str_arg(variance, "variance")?)?;
        *out = expand(&p.inner, &v)?.rank.ok_or(Error::RankUndefined)?;
        Ok(())
    })
}

/// Hermite expansion as JSON; release with [`hl_string_free`].
///
/// # Safety
/// Pointers must be valid; `variance` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hl_hermite_expand_json(
    p: *const HlPolynomial,
    variance: *const c_char,
    out_json: *mut *mut c_char,
) -> HlStatus {
    guard(|| {
        let p = ref_arg(p, "polynomial")?;
        let out = out_arg(out_json, "out_json")?;
        let v = parse_rational(str_arg(variance, "variance")?)?;
        let e = expand(&p.inner, &v)?;
        *out = into_c_string(serde_json::to_string(&e).map_err(Error::from)?)?;
        Ok(())
    })
}

/// Normalizing constant `c_{H,q}` of the Hermite process.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_c_hq(q: u32, h: f64, out: *mut f64) -> HlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = c_hq(HurstSpec::new(q, h)?).value;
        Ok(())
    })
}

fn new_kernel(k: Kernel, out: *mut *mut HlKernel) -> HlStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out")? };
        k.validate()?;
        *out = Box::into_raw(Box::new(HlKernel { inner: k }));
        Ok(())
    })
}

/// `e^{−rate·s}`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_kernel_exponential(rate: f64, out: *mut *mut HlKernel) -> HlStatus {
    new_kernel(Kernel::Exponential { rate }, out)
}

/// `(1 + s/scale)^{−exponent}`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_kernel_power_cutoff(exponent: f64, scale: f64, out: *mut *mut HlKernel) -> HlStatus {
    new_kernel(Kernel::PowerCutoff { exponent, scale }, out)
}

/// Piecewise constant: `samples[k]` on `[k·dt, (k+1)·dt)`. The samples are copied.
///
/// # Safety
/// `samples` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_kernel_tabulated(samples: *const f64, len: usize, dt: f64, out: *mut *mut HlKernel) -> HlStatus {
    if samples.is_null() {
        return guard(|| Err(Fail::Null("samples")));
    }
    let samples = std::slice::from_raw_parts(samples, len).to_vec();
    new_kernel(Kernel::Tabulated { samples, dt }, out)
}

/// # Safety
/// `k` must come from a `hl_kernel_*` constructor or be NULL.
#[no_mangle]
pub unsafe extern "C" fn hl_kernel_free(k: *mut HlKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Covariance `ρ(s)` of the fBm-driven moving average with Hurst index `h`.
///
/// # Safety
/// Pointers must be valid; `abs_error` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn hl_ma_covariance(
    kernel: *const HlKernel,
    h: f64,
    s: f64,
    value: *mut f64,
    abs_error: *mut f64,
) -> HlStatus {
    guard(|| {
        let k = ref_arg(kernel, "kernel")?;
        let value = out_arg(value, "value")?;
        let r = ma_covariance(&k.inner, h, s)?;
        *value = r.value;
        if let Some(e) = abs_error.as_mut() {
            *e = r.abs_error_estimate;
        }
        Ok(())
    })
}

/// Fills `buf` with `len` exact fGn increments on a grid of step `dt`.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hl_fgn(h: f64, dt: f64, seed: u64, stream: u64, buf: *mut f64, len: usize) -> HlStatus {
    guard(|| {
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        let path = fgn(h, len, dt, seed, stream)?;
        if path.values.len() != len {
            return Err(Fail::Buffer(len, path.values.len()));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&path.values);
        Ok(())
    })
}

/// Sampler of `X` on `0, dt, …, t_max`, driven by the order-`q` Hermite process.
///
/// # Safety
/// `kernel` must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_simulator_new(
    q: u32,
    h: f64,
    kernel: *const HlKernel,
    dt: f64,
    t_max: f64,
    substeps: usize,
    out: *mut *mut HlSimulator,
) -> HlStatus {
    guard(|| {
        let k = ref_arg(kernel, "kernel")?;
        let out = out_arg(out, "out")?;
        let mut grid = MaGrid::new(dt, t_max);
        grid.substeps = substeps;
        let inner = MaSimulator::new(HurstSpec::new(q, h)?, &k.inner, grid)?;
        *out = Box::into_raw(Box::new(HlSimulator { inner }));
        Ok(())
    })
}

/// Number of values per path.
///
/// # Safety
/// `sim` must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_simulator_len(sim: *const HlSimulator, out: *mut usize) -> HlStatus {
    guard(|| {
        let sim = ref_arg(sim, "simulator")?;
        *out_arg(out, "out")? = sim.inner.output_len();
        Ok(())
    })
}

/// Exact `Var X(t)` of the simulated discrete model.
///
/// # Safety
/// `sim` must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_simulator_model_variance(sim: *const HlSimulator, out: *mut f64) -> HlStatus {
    guard(|| {
        let sim = ref_arg(sim, "simulator")?;
        *out_arg(out, "out")? = sim.inner.model_variance();
        Ok(())
    })
}

/// Draws the path for `(seed, stream)` into `buf`; `len` must equal [`hl_simulator_len`].
///
/// # Safety
/// `sim` must be valid; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hl_simulator_sample(
    sim: *const HlSimulator,
    seed: u64,
    stream: u64,
    buf: *mut f64,
    len: usize,
) -> HlStatus {
    guard(|| {
        let sim = ref_arg(sim, "simulator")?;
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        let want = sim.inner.output_len();
        if len != want {
            return Err(Fail::Buffer(len, want));
        }
        let path = sim.inner.sample_path(seed, stream);
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&path.values);
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`hl_simulator_new`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn hl_simulator_free(sim: *mut HlSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Variance-scaling scan over `horizons` with default grid settings; the report is JSON,
/// released with [`hl_string_free`].
///
/// # Safety
/// Handles must be valid; `horizons` must point to `n_horizons` doubles; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn hl_scan_scaling_json(
    q: u32,
    h: f64,
    p: *const HlPolynomial,
    kernel: *const HlKernel,
    horizons: *const f64,
    n_horizons: usize,
    replications: usize,
    seed: u64,
    out_json: *mut *mut c_char,
) -> HlStatus {
    guard(|| {
        let p = ref_arg(p, "polynomial")?;
        let k = ref_arg(kernel, "kernel")?;
        if horizons.is_null() {
            return Err(Fail::Null("horizons"));
        }
        let out = out_arg(out_json, "out_json")?;
        let horizons = std::slice::from_raw_parts(horizons, n_horizons).to_vec();
        let cfg = ScanConfig::new(HurstSpec::new(q, h)?, k.inner.clone(), p.inner.clone(), horizons, replications, seed);
        let report = scan_scaling(&cfg)?;
        *out = into_c_string(serde_json::to_string(&report).map_err(Error::from)?)?;
        Ok(())
    })
}

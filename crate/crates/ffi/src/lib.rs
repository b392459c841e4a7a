//! C ABI over the synthesis library.
//!
//! Every function returns an `ShStatus`. On failure a message describing
//! the error is kept per thread and can be read with `sh_last_error`.
//! Handles are opaque and must be released with their `_free` function.
//! Matrices cross the boundary as row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sparse_hinf::fir::{fir_realize, FirController, SparsityPattern};
use sparse_hinf::io::{self, CertificateSummary, ControllerFile};
use sparse_hinf::lti::{close_loop, hinf_norm, zoh_discretize, GeneralizedPlant};
use sparse_hinf::sdp::backend_from_env;
use sparse_hinf::synthesis::{synthesize, InnerMode, SynthesisConfig};
use sparse_hinf::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Dimension = 4,
    Domain = 5,
    Infeasible = 6,
    NoConvergence = 7,
    Numeric = 8,
    Io = 9,
    /// The handle carries no such data, e.g. a controller without a certificate.
    Unavailable = 10,
    Panic = 11,
}

/// Bounded-real LMI alternation semantics.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShInnerMode {
    Centered = 0,
    SolverCap = 1,
    StagedMargin = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct ShSynthOptions {
    /// Bound on the squared closed-loop norm.
    pub mu: f64,
    /// Number of FIR taps, 1 for a static gain.
    pub n_taps: usize,
    pub k0: u32,
    pub k1: u32,
    pub k2: u32,
    pub max_outer: usize,
    pub inner: ShInnerMode,
    /// Nonzero adds a small norm penalty to the relaxed first step.
    pub regularize_p0: i32,
}

/// Generalized plant, continuous or discrete.
pub struct ShPlant {
    inner: GeneralizedPlant,
}

/// FIR controller, optionally with the certificate it was synthesized with.
pub struct ShController {
    inner: FirController,
    pattern: Option<SparsityPattern>,
    certificate: Option<CertificateSummary>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ShStatus {
    match e {
        Error::Dimension(_) => ShStatus::Dimension,
        Error::InvalidArgument(_) | Error::Precondition(_) => ShStatus::InvalidArgument,
        Error::Domain(_) => ShStatus::Domain,
        Error::InfeasibleRelaxation(_) | Error::InnerInfeasible { .. } => ShStatus::Infeasible,
        Error::NoConvergence { .. } => ShStatus::NoConvergence,
        Error::Parse { .. } | Error::Json(_) => ShStatus::Parse,
        Error::Io(_) => ShStatus::Io,
        _ => ShStatus::Numeric,
    }
}

struct Fail(ShStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ShStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ShStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ShStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            ShStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        Fail(
            ShStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s)
        .expect("JSON output has no nul bytes")
        .into_raw()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sh_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a plant document.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sh_plant_from_json(
    json: *const c_char,
    out: *mut *mut ShPlant,
) -> ShStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let plant = io::parse_plant(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(ShPlant { inner: plant }));
        Ok(())
    })
}

/// Serialize a plant; free the result with `sh_string_free`.
///
/// # Safety
/// `plant` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sh_plant_to_json(
    plant: *const ShPlant,
    out: *mut *mut c_char,
) -> ShStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = into_c_string(io::emit_plant(&ref_arg(plant, "plant")?.inner));
        Ok(())
    })
}

/// # Safety
/// `plant` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sh_plant_free(plant: *mut ShPlant) {
    if !plant.is_null() {
        drop(Box::from_raw(plant));
    }
}

/// State, disturbance, control, performance and measurement dimensions.
///
/// # Safety
/// `plant` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn sh_plant_dims(
    plant: *const ShPlant,
    nx: *mut usize,
    nw: *mut usize,
    nu: *mut usize,
    nz: *mut usize,
    ny: *mut usize,
) -> ShStatus {
    guard(|| {
        let d = ref_arg(plant, "plant")?.inner.dims();
        for (p, v) in [(nx, d.nx), (nw, d.nw), (nu, d.nu), (nz, d.nz), (ny, d.ny)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Sample time of a discrete plant, 0 for a continuous one.
///
/// # Safety
/// `plant` must be a live handle and `ts` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sh_plant_sample_time(plant: *const ShPlant, ts: *mut f64) -> ShStatus {
    guard(|| {
        let out = out_arg(ts, "ts")?;
        *out = ref_arg(plant, "plant")?
            .inner
            .domain
            .sample_time()
            .unwrap_or(0.0);
        Ok(())
    })
}

/// Zero-order-hold discretization into a new handle.
///
/// # Safety
/// `plant` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sh_plant_discretize(
    plant: *const ShPlant,
    ts: f64,
    out: *mut *mut ShPlant,
) -> ShStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let d = zoh_discretize(&ref_arg(plant, "plant")?.inner, ts)?;
        *out = Box::into_raw(Box::new(ShPlant { inner: d }));
        Ok(())
    })
}

/// H-infinity norm from disturbance to performance output, open loop.
///
/// # Safety
/// `plant` must be a live handle and `norm` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sh_plant_hinf_norm(plant: *const ShPlant, norm: *mut f64) -> ShStatus {
    guard(|| {
        let out = out_arg(norm, "norm")?;
        *out = hinf_norm(&ref_arg(plant, "plant")?.inner.performance_channel())?;
        Ok(())
    })
}

/// Closed-loop H-infinity norm with a controller. The plant must be discrete
/// with the controller's sample time.
///
/// # Safety
/// Both handles must be live and `norm` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sh_closed_loop_norm(
    plant: *const ShPlant,
    controller: *const ShController,
    norm: *mut f64,
) -> ShStatus {
    guard(|| {
        let out = out_arg(norm, "norm")?;
        let k = fir_realize(&ref_arg(controller, "controller")?.inner);
        *out = hinf_norm(&close_loop(&ref_arg(plant, "plant")?.inner, &k)?)?;
        Ok(())
    })
}

/// Defaults: static gain, full pattern, `k = (10, 5, 2)`, 200 outer iterations.
#[no_mangle]
pub extern "C" fn sh_synth_options_default(mu: f64) -> ShSynthOptions {
    let c = SynthesisConfig::new(mu, 1, SparsityPattern::full(0, 0));
    ShSynthOptions {
        mu,
        n_taps: c.n_taps,
        k0: c.k[0],
        k1: c.k[1],
        k2: c.k[2],
        max_outer: c.max_outer,
        inner: ShInnerMode::Centered,
        regularize_p0: 0,
    }
}

/// Synthesize a controller for a discrete plant.
///
/// `pattern` is a row-major `nu x ny` array of 0/1 bytes, or null for a full
/// pattern. The semidefinite backend follows `SPARSE_HINF_BACKEND`.
///
/// # Safety
/// `plant` must be a live handle, `opts` and `out` valid pointers, and
/// `pattern` null or readable for `nu * ny` bytes.
#[no_mangle]
pub unsafe extern "C" fn sh_synthesize(
    plant: *const ShPlant,
    opts: *const ShSynthOptions,
    pattern: *const u8,
    out: *mut *mut ShController,
) -> ShStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let plant = &ref_arg(plant, "plant")?.inner;
        let o = *ref_arg(opts, "opts")?;
        let d = plant.dims();
        let s = if pattern.is_null() {
            SparsityPattern::full(d.nu, d.ny)
        } else {
            let bytes = std::slice::from_raw_parts(pattern, d.nu * d.ny);
            SparsityPattern::from_fn(d.nu, d.ny, |i, j| bytes[i * d.ny + j] != 0)
        };
        let mut cfg = SynthesisConfig::new(o.mu, o.n_taps, s.clone());
        cfg.k = [o.k0, o.k1, o.k2];
        cfg.max_outer = o.max_outer;
        cfg.regularize_p0 = o.regularize_p0 != 0;
        cfg.inner = match o.inner {
            ShInnerMode::Centered => InnerMode::Centered,
            ShInnerMode::SolverCap => InnerMode::SolverCap,
            ShInnerMode::StagedMargin => InnerMode::StagedMargin,
        };
        let backend = backend_from_env()?;
        let r = synthesize(plant, cfg, backend.as_ref())?;
        *out = Box::into_raw(Box::new(ShController {
            inner: r.controller,
            pattern: Some(s),
            certificate: Some(CertificateSummary {
                mu: r.certificate.mu,
                min_eig_f: r.certificate.min_eig_f,
                closed_loop_norm: r.certificate.closed_loop_norm,
            }),
        }));
        Ok(())
    })
}

/// Parse a controller document.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sh_controller_from_json(
    json: *const c_char,
    out: *mut *mut ShController,
) -> ShStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let f = io::parse_controller(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(ShController {
            inner: f.to_controller()?,
            pattern: f.pattern()?,
            certificate: f.certificate,
        }));
        Ok(())
    })
}

/// Serialize a controller; free the result with `sh_string_free`.
///
/// # Safety
/// `controller` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sh_controller_to_json(
    controller: *const ShController,
    out: *mut *mut c_char,
) -> ShStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let c = ref_arg(controller, "controller")?;
        let f =
            ControllerFile::from_controller(&c.inner, c.pattern.as_ref(), c.certificate.clone());
        *out = into_c_string(io::emit_controller(&f));
        Ok(())
    })
}

/// # Safety
/// `controller` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sh_controller_free(controller: *mut ShController) {
    if !controller.is_null() {
        drop(Box::from_raw(controller));
    }
}

/// Tap count and the `nu x ny` shape of each tap.
///
/// # Safety
/// `controller` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn sh_controller_shape(
    controller: *const ShController,
    n_taps: *mut usize,
    nu: *mut usize,
    ny: *mut usize,
) -> ShStatus {
    guard(|| {
        let k = &ref_arg(controller, "controller")?.inner;
        for (p, v) in [(n_taps, k.n_taps()), (nu, k.n_u()), (ny, k.n_y())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copy tap `index` into `buf` in row-major order. `len` must be at least
/// `nu * ny`.
///
/// # Safety
/// `controller` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sh_controller_tap(
    controller: *const ShController,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> ShStatus {
    guard(|| {
        let k = &ref_arg(controller, "controller")?.inner;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if index >= k.n_taps() {
            return Err(Fail(
                ShStatus::InvalidArgument,
                format!("tap {index} out of range for {} taps", k.n_taps()),
            ));
        }
        let q = k.tap(index);
        if len < q.len() {
            return Err(Fail(
                ShStatus::Dimension,
                format!("buffer holds {len} values, tap needs {}", q.len()),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, len);
        for i in 0..q.nrows() {
            for j in 0..q.ncols() {
                out[i * q.ncols() + j] = q[(i, j)];
            }
        }
        Ok(())
    })
}

/// Certificate recorded at synthesis: `mu`, smallest eigenvalue of the
/// bounded-real matrix and the closed-loop norm.
///
/// # Safety
/// `controller` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn sh_controller_certificate(
    controller: *const ShController,
    mu: *mut f64,
    min_eig: *mut f64,
    norm: *mut f64,
) -> ShStatus {
    guard(|| {
        let c = ref_arg(controller, "controller")?;
        let cert = c.certificate.as_ref().ok_or_else(|| {
            Fail(
                ShStatus::Unavailable,
                "controller carries no certificate".into(),
            )
        })?;
        for (p, v) in [
            (mu, cert.mu),
            (min_eig, cert.min_eig_f),
            (norm, cert.closed_loop_norm),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

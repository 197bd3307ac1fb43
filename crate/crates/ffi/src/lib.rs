//! C interface to the reconstruction library.
//!
//! Objects cross the boundary as opaque handles created by `*_new` / `*_from_*`
//! functions and released by the matching `*_free`. Every fallible call returns
//! a [`GsdotStatus`]; on failure the message is available from
//! [`gsdot_last_error_message`] on the same thread until the next failing call.
//! Array arguments are caller-owned buffers whose length is passed alongside
//! and checked against the expected size.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use gsdot_core::forward::{
    apply_noise, baseline_tpsf, born_forward, green2d, OpticalProperties, SensitivityMatrix, TpsfSet,
};
use gsdot_core::inverse::{reconstruct, ReconstructionResult};
use gsdot_core::io::{load_jacobian_checked, save_jacobian, RunConfig, Setup};
use gsdot_core::metrics::evaluate;
use gsdot_core::phantoms::{make_phantom, PhantomCase};
use gsdot_core::splats::PARAMS_PER_SPLAT;
use gsdot_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsdotStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Config = 4,
    Cache = 5,
    Divergence = 6,
    Io = 7,
    /// The problem has no sensitivity matrix yet.
    NoJacobian = 8,
    Panic = 9,
}

/// Image-quality figures of a reconstruction against a reference map.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GsdotMetrics {
    pub rmse: f64,
    pub ssim: f64,
    pub com_error: f64,
}

/// Geometry, physics, solver settings and (once built or loaded) the sensitivity matrix.
pub struct GsdotProblem {
    setup: Setup,
    baseline: TpsfSet,
    jacobian: Option<SensitivityMatrix>,
}

/// Outcome of one reconstruction.
pub struct GsdotResult {
    inner: ReconstructionResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GsdotStatus {
    match e {
        Error::InvalidArgument(_) | Error::UndefinedCom(_) => GsdotStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => GsdotStatus::DimensionMismatch,
        Error::Config(_) => GsdotStatus::Config,
        Error::Cache(_) => GsdotStatus::Cache,
        Error::NonFiniteLoss { .. } | Error::Divergence { .. } => GsdotStatus::Divergence,
        Error::Io { .. } | Error::Csv(_) => GsdotStatus::Io,
    }
}

struct Failure(GsdotStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: GsdotStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GsdotStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GsdotStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GsdotStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(GsdotStatus::NullPointer, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(GsdotStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .map_or_else(|| fail(GsdotStatus::NullPointer, format!("{name} is null")), Ok)
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, want: usize, name: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return fail(GsdotStatus::NullPointer, format!("{name} is null"));
    }
    if len != want {
        return fail(
            GsdotStatus::DimensionMismatch,
            format!("{name} has length {len}, expected {want}"),
        );
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, want: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return fail(GsdotStatus::NullPointer, format!("{name} is null"));
    }
    if len != want {
        return fail(
            GsdotStatus::DimensionMismatch,
            format!("{name} has length {len}, expected {want}"),
        );
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn n_measurements(setup: &Setup) -> usize {
    setup.optodes.n_pairs() * setup.time.n_bins()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gsdot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gsdot_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Fluence of the infinite-medium 2D diffusion Green's function at distance
/// `rho_cm` and time `t_ns`.
///
/// # Safety
/// `out` must be valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn gsdot_green2d(
    rho_cm: f64,
    t_ns: f64,
    mu_a: f64,
    mu_s_prime: f64,
    refractive_index: f64,
    out: *mut f64,
) -> GsdotStatus {
    guard(|| {
        if out.is_null() {
            return fail(GsdotStatus::NullPointer, "out is null");
        }
        let props = OpticalProperties::new(mu_a, mu_s_prime, refractive_index)?;
        *out = green2d(rho_cm, t_ns, &props)?;
        Ok(())
    })
}

fn new_problem(config: &RunConfig) -> Result<Box<GsdotProblem>, Failure> {
    let setup = config.resolved()?.setup()?;
    let baseline = baseline_tpsf(&setup.optodes, &setup.props, &setup.time);
    Ok(Box::new(GsdotProblem {
        setup,
        baseline,
        jacobian: None,
    }))
}

/// Problem with default geometry, physics and solver settings for a built-in
/// phantom (`one-inclusion`, `three-circles`, `crescent` or `donut`).
///
/// # Safety
/// `case_name` must be a NUL-terminated string; `out` must be valid for one write.
/// The handle written to `out` must be released with [`gsdot_problem_free`].
#[no_mangle]
pub unsafe extern "C" fn gsdot_problem_new(case_name: *const c_char, out: *mut *mut GsdotProblem) -> GsdotStatus {
    guard(|| {
        if out.is_null() {
            return fail(GsdotStatus::NullPointer, "out is null");
        }
        let case: PhantomCase = str_arg(case_name, "case_name")?
            .parse()
            .map_err(|e: Error| Failure(GsdotStatus::Config, e.to_string()))?;
        *out = Box::into_raw(new_problem(&RunConfig::for_case(case))?);
        Ok(())
    })
}

/// Problem described by a TOML run configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be valid for one write.
/// The handle written to `out` must be released with [`gsdot_problem_free`].
#[no_mangle]
pub unsafe extern "C" fn gsdot_problem_from_toml(toml: *const c_char, out: *mut *mut GsdotProblem) -> GsdotStatus {
    guard(|| {
        if out.is_null() {
            return fail(GsdotStatus::NullPointer, "out is null");
        }
        let config = RunConfig::from_toml(str_arg(toml, "toml")?)?;
        *out = Box::into_raw(new_problem(&config)?);
        Ok(())
    })
}

/// # Safety
/// `problem` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gsdot_problem_free(problem: *mut GsdotProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of active pixels, the length of every map. Zero for NULL.
///
/// # Safety
/// `problem` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gsdot_problem_n_pixels(problem: *const GsdotProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.setup.grid.n_active())
}

/// Number of measurements (pairs × time bins), the length of every data vector. Zero for NULL.
///
/// # Safety
/// `problem` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gsdot_problem_n_measurements(problem: *const GsdotProblem) -> usize {
    problem.as_ref().map_or(0, |p| n_measurements(&p.setup))
}

/// Splat count the solver will use. Zero for NULL.
///
/// # Safety
/// `problem` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gsdot_problem_n_splats(problem: *const GsdotProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.setup.hyper.n_splats)
}

/// Assembles the sensitivity matrix, replacing any held one.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gsdot_problem_build_jacobian(problem: *mut GsdotProblem) -> GsdotStatus {
    guard(|| {
        let p = problem
            .as_mut()
            .map_or_else(|| fail(GsdotStatus::NullPointer, "problem is null"), Ok)?;
        let s = &p.setup;
        p.jacobian = Some(SensitivityMatrix::build(
            &s.optodes,
            &s.grid,
            &s.props,
            &s.time,
            s.domain.radius_cm,
        )?);
        Ok(())
    })
}

/// Writes the held sensitivity matrix to a cache file.
///
/// # Safety
/// `problem` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gsdot_problem_save_jacobian(problem: *const GsdotProblem, path: *const c_char) -> GsdotStatus {
    guard(|| {
        let p = ref_arg(problem, "problem")?;
        let path = str_arg(path, "path")?;
        let j = p
            .jacobian
            .as_ref()
            .map_or_else(|| fail(GsdotStatus::NoJacobian, "no sensitivity matrix to save"), Ok)?;
        save_jacobian(j, Path::new(path))?;
        Ok(())
    })
}

/// Loads a cache file, rejecting one whose header disagrees with the problem.
///
/// # Safety
/// `problem` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gsdot_problem_load_jacobian(problem: *mut GsdotProblem, path: *const c_char) -> GsdotStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let p = problem
            .as_mut()
            .map_or_else(|| fail(GsdotStatus::NullPointer, "problem is null"), Ok)?;
        p.jacobian = Some(load_jacobian_checked(Path::new(path), &p.setup.cache_header())?);
        Ok(())
    })
}

/// Ground-truth `Δμa` of the configured phantom on the active pixels.
///
/// # Safety
/// `problem` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gsdot_problem_phantom(problem: *const GsdotProblem, out: *mut f64, len: usize) -> GsdotStatus {
    guard(|| {
        let p = ref_arg(problem, "problem")?;
        let dst = out_slice(out, len, p.setup.grid.n_active(), "out")?;
        let gt = make_phantom(&p.setup.phantom, &p.setup.grid, &p.setup.domain)?;
        dst.copy_from_slice(&gt);
        Ok(())
    })
}

/// Measurements for the perturbation `dmu` (length `n_pixels`), written to `out`
/// (length `n_measurements`, pair-major). A positive `noise_level` adds seeded
/// photon-counting noise at that relative level; zero or less gives clean data.
///
/// # Safety
/// `problem` must be a live handle; the buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn gsdot_problem_simulate(
    problem: *const GsdotProblem,
    dmu: *const f64,
    n_pixels: usize,
    noise_level: f64,
    seed: u64,
    out: *mut f64,
    n_measurements_out: usize,
) -> GsdotStatus {
    guard(|| {
        let p = ref_arg(problem, "problem")?;
        let j = p
            .jacobian
            .as_ref()
            .map_or_else(|| fail(GsdotStatus::NoJacobian, "build or load the sensitivity matrix first"), Ok)?;
        let field = slice_arg(dmu, n_pixels, p.setup.grid.n_active(), "dmu")?;
        let dst = out_slice(out, n_measurements_out, n_measurements(&p.setup), "out")?;
        let clean = born_forward(j, field, &p.baseline)?;
        let data = if noise_level > 0.0 {
            apply_noise(&clean.clamped_non_negative(), noise_level, seed)?
        } else if noise_level.is_nan() {
            return fail(GsdotStatus::InvalidArgument, "noise_level is NaN");
        } else {
            clean
        };
        dst.copy_from_slice(&data.values);
        Ok(())
    })
}

/// Reconstructs from `measured` (length `n_measurements`, pair-major).
///
/// # Safety
/// `problem` must be a live handle, `measured` must hold `len` doubles and `out`
/// must be valid for one write. Release the result with [`gsdot_result_free`].
#[no_mangle]
pub unsafe extern "C" fn gsdot_problem_reconstruct(
    problem: *const GsdotProblem,
    measured: *const f64,
    len: usize,
    out: *mut *mut GsdotResult,
) -> GsdotStatus {
    guard(|| {
        let p = ref_arg(problem, "problem")?;
        if out.is_null() {
            return fail(GsdotStatus::NullPointer, "out is null");
        }
        let j = p
            .jacobian
            .as_ref()
            .map_or_else(|| fail(GsdotStatus::NoJacobian, "build or load the sensitivity matrix first"), Ok)?;
        let values = slice_arg(measured, len, n_measurements(&p.setup), "measured")?;
        let b = &p.baseline;
        let meas = TpsfSet::from_values(b.n_sources, b.n_detectors, b.n_bins, b.dt_ns, values.to_vec())?;
        let s = &p.setup;
        let inner = reconstruct(&meas, b, j, &s.grid, &s.domain, &s.hyper)?;
        *out = Box::into_raw(Box::new(GsdotResult { inner }));
        Ok(())
    })
}

/// # Safety
/// `result` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gsdot_result_free(result: *mut GsdotResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Reconstructed `Δμa` on the active pixels.
///
/// # Safety
/// `result` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gsdot_result_map(result: *const GsdotResult, out: *mut f64, len: usize) -> GsdotStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        out_slice(out, len, r.inner.dmu.len(), "out")?.copy_from_slice(&r.inner.dmu);
        Ok(())
    })
}

/// Number of splats in the result. Zero for NULL.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gsdot_result_n_splats(result: *const GsdotResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.params.n_splats())
}

/// Splats as rows of `alpha, x_cm, y_cm, sx_cm, sy_cm, theta_rad`; `len` must be
/// six times the splat count.
///
/// # Safety
/// `result` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gsdot_result_splats(result: *const GsdotResult, out: *mut f64, len: usize) -> GsdotStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        let splats = r.inner.params.decode()?;
        let dst = out_slice(out, len, splats.len() * PARAMS_PER_SPLAT, "out")?;
        for (row, s) in dst.chunks_exact_mut(PARAMS_PER_SPLAT).zip(&splats) {
            row.copy_from_slice(&[s.alpha, s.center.x, s.center.y, s.sx, s.sy, s.theta]);
        }
        Ok(())
    })
}

/// Loss of the returned iterate, NaN for NULL.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gsdot_result_best_loss(result: *const GsdotResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.best_loss)
}

/// Iteration at which the returned iterate was reached. Zero for NULL.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gsdot_result_best_iteration(result: *const GsdotResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.best_iteration)
}

/// RMSE, SSIM and center-of-mass error of `recon` against `reference`, both of
/// length `n_pixels`.
///
/// # Safety
/// `problem` must be a live handle, the arrays must hold `n_pixels` doubles and
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn gsdot_metrics(
    problem: *const GsdotProblem,
    recon: *const f64,
    reference: *const f64,
    n_pixels: usize,
    out: *mut GsdotMetrics,
) -> GsdotStatus {
    guard(|| {
        let p = ref_arg(problem, "problem")?;
        let n = p.setup.grid.n_active();
        let recon = slice_arg(recon, n_pixels, n, "recon")?;
        let reference = slice_arg(reference, n_pixels, n, "reference")?;
        if out.is_null() {
            return fail(GsdotStatus::NullPointer, "out is null");
        }
        let m = evaluate(recon, reference, &p.setup.grid)?;
        *out = GsdotMetrics {
            rmse: m.rmse,
            ssim: m.ssim,
            com_error: m.com_error,
        };
        Ok(())
    })
}

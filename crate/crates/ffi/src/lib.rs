//! C interface to the qtdg solver.
//!
//! Every fallible function returns a [`QtdgStatus`]; on failure the message
//! is available from [`qtdg_last_error`] on the same thread. Handles are
//! opaque and released with their `_free` function. Strings returned
//! through `char **` are released with [`qtdg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qtdg::cli::{condition_csv, condition_rows, convergence_rows, error_csv, run_one, ErrorRow};
use qtdg::config::RunConfig;
use qtdg::solver::DiscreteSolution;
use qtdg::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QtdgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Unsupported = 5,
    Numerical = 6,
    Solver = 7,
    Io = 8,
    OutOfDomain = 9,
    Panic = 10,
}

/// Parsed run configuration.
pub struct QtdgConfig {
    inner: RunConfig,
}

/// Result of a single run.
pub struct QtdgSolution {
    solution: DiscreteSolution,
    row: ErrorRow,
}

/// Summary of a run; errors that do not apply are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QtdgReport {
    pub h: f64,
    pub dofs: usize,
    pub dg_error: f64,
    pub l2_final_error: f64,
    pub energy_loss: f64,
    pub wall_ms: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QtdgStatus {
    match e {
        Error::InvalidArgument(_) | Error::Singularity(_) | Error::Capability(_) => QtdgStatus::InvalidArgument,
        Error::Unsupported(_) => QtdgStatus::Unsupported,
        Error::Config(_) => QtdgStatus::Config,
        Error::Numerical(_) => QtdgStatus::Numerical,
        Error::Solver { .. } => QtdgStatus::Solver,
        Error::Io(_) => QtdgStatus::Io,
    }
}

struct Failure(QtdgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QtdgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QtdgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QtdgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(QtdgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(QtdgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let c = CString::new(s).map_err(|_| Failure(QtdgStatus::InvalidArgument, "string contains nul".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn qtdg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn qtdg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a TOML configuration.
///
/// # Safety
/// `toml` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtdg_config_parse(toml: *const c_char, out: *mut *mut QtdgConfig) -> QtdgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let src = read_str(toml, "configuration text")?;
        let inner = RunConfig::parse(src)?;
        *out = Box::into_raw(Box::new(QtdgConfig { inner }));
        Ok(())
    })
}

/// Canonical TOML form of a configuration.
///
/// # Safety
/// `config` must come from [`qtdg_config_parse`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtdg_config_canonical(config: *const QtdgConfig, out: *mut *mut c_char) -> QtdgStatus {
    guard(|| {
        let cfg = config.as_ref().ok_or_else(|| null("configuration"))?;
        write_string(out, cfg.inner.to_canonical())
    })
}

/// # Safety
/// `config` must come from [`qtdg_config_parse`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn qtdg_config_free(config: *mut QtdgConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the single (space, degree, mesh) combination of `config`.
///
/// # Safety
/// `config` must come from [`qtdg_config_parse`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtdg_solve(config: *const QtdgConfig, out: *mut *mut QtdgSolution) -> QtdgStatus {
    guard(|| {
        let cfg = &config.as_ref().ok_or_else(|| null("configuration"))?.inner;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        if cfg.space.kind.len() != 1 || cfg.space.degree.len() != 1 || cfg.mesh.sweep.len() != 1 {
            return Err(Failure(
                QtdgStatus::Config,
                "a single run needs exactly one space kind, one degree and one mesh entry".into(),
            ));
        }
        let problem = cfg.build_problem()?;
        let run = run_one(cfg, &problem, cfg.kinds()[0], cfg.space.degree[0], 0, &cfg.solver_options())?;
        *out = Box::into_raw(Box::new(QtdgSolution { solution: run.solution, row: run.row }));
        Ok(())
    })
}

/// # Safety
/// `solution` must come from [`qtdg_solve`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtdg_solution_report(solution: *const QtdgSolution, out: *mut QtdgReport) -> QtdgStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        let r = &s.row;
        *out = QtdgReport {
            h: r.h,
            dofs: r.dofs,
            dg_error: r.dg_error.unwrap_or(f64::NAN),
            l2_final_error: r.l2_final.unwrap_or(f64::NAN),
            energy_loss: r.energy_loss.unwrap_or(f64::NAN),
            wall_ms: r.wall_ms,
        };
        Ok(())
    })
}

/// Value of the discrete solution at `point` (`len` = space dimension + 1,
/// time last).
///
/// # Safety
/// `point` must hold `len` doubles; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtdg_solution_evaluate(
    solution: *const QtdgSolution,
    point: *const f64,
    len: usize,
    re: *mut f64,
    im: *mut f64,
) -> QtdgStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        if point.is_null() || re.is_null() || im.is_null() {
            return Err(null("point or output pointer"));
        }
        let x = std::slice::from_raw_parts(point, len);
        let mesh = s.solution.mesh();
        if len != mesh.dim() + 1 {
            return Err(Failure(
                QtdgStatus::InvalidArgument,
                format!("expected {} coordinates, got {len}", mesh.dim() + 1),
            ));
        }
        let e = mesh
            .locate(x)
            .ok_or_else(|| Failure(QtdgStatus::OutOfDomain, "point lies outside the space-time domain".into()))?;
        let (v, _) = s.solution.evaluate(e, x);
        *re = v.re;
        *im = v.im;
        Ok(())
    })
}

/// # Safety
/// `solution` must come from [`qtdg_solve`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn qtdg_solution_free(solution: *mut QtdgSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Error table of the whole sweep, as CSV.
///
/// # Safety
/// `config` must come from [`qtdg_config_parse`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtdg_convergence_csv(config: *const QtdgConfig, out: *mut *mut c_char) -> QtdgStatus {
    guard(|| {
        let cfg = &config.as_ref().ok_or_else(|| null("configuration"))?.inner;
        let csv = error_csv(&convergence_rows(cfg)?, cfg.output.omit_timing)?;
        write_string(out, csv)
    })
}

/// Condition numbers of the first slab matrix over the sweep, as CSV.
///
/// # Safety
/// `config` must come from [`qtdg_config_parse`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qtdg_condition_csv(config: *const QtdgConfig, out: *mut *mut c_char) -> QtdgStatus {
    guard(|| {
        let cfg = &config.as_ref().ok_or_else(|| null("configuration"))?.inner;
        write_string(out, condition_csv(&condition_rows(cfg)?)?)
    })
}

/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn qtdg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

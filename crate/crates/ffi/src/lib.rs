//! C ABI over `latentdiff`.
//!
//! Every function returns an [`LdStatus`]; on failure a message is kept per
//! thread and can be read with [`ld_last_error`]. Objects cross the boundary
//! as opaque handles that the caller releases with the matching `_free`.
//! Panics are caught at the boundary and reported as `LD_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use latentdiff::diffusion::{build_schedule, NoiseSchedule, ScheduleKind};
use latentdiff::evaluation::{region_metrics, MetricsReport};
use latentdiff::generation::{allocate_budget, priority_scores, AllocationMode};
use latentdiff::pipeline::{parse_config_str, run_pipeline, PipelineConfig, RunSummary};
use latentdiff::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Shape = 4,
    Io = 5,
    Numeric = 6,
    MissingArtifact = 7,
    NotFound = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LdScheduleKind {
    Cosine = 0,
    Linear = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LdAllocationMode {
    Priority = 0,
    Uniform = 1,
}

/// Metrics of one set of predictions.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LdRegionMetrics {
    pub count: usize,
    pub mae: f64,
    pub mse: f64,
    pub gm: f64,
    pub pearson: f64,
    pub r2: f64,
    /// Nonzero when Pearson/R² were undefined and reported as 0.
    pub degenerate: i32,
}

/// Parsed pipeline configuration.
pub struct LdConfig {
    inner: PipelineConfig,
}

/// Result of a completed pipeline run.
pub struct LdRun {
    inner: RunSummary,
}

/// Noise schedule tables.
pub struct LdSchedule {
    inner: NoiseSchedule,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> LdStatus {
    match err {
        Error::Config(_) | Error::ConfigValue { .. } | Error::UnknownKey(_) => LdStatus::Config,
        Error::Shape(_) | Error::UnknownBin { .. } | Error::ReportMismatch(_) => LdStatus::Shape,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Parse { .. } | Error::Format { .. } => LdStatus::Io,
        Error::NonFinite(_)
        | Error::OutOfRange { .. }
        | Error::Timestep { .. }
        | Error::SingularCovariance { .. }
        | Error::Diverged { .. }
        | Error::SamplingNan { .. } => LdStatus::Numeric,
        Error::MissingArtifact(_) => LdStatus::MissingArtifact,
        Error::Stage { source, .. } => status_of(source),
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (LdStatus, String)>) -> LdStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LdStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            LdStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (LdStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LdStatus, String) {
    (LdStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (LdStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (LdStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (LdStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (LdStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ld_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ld_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON config document. Pass an empty string for the defaults.
#[no_mangle]
pub unsafe extern "C" fn ld_config_parse(json: *const c_char, permissive: bool, out: *mut *mut LdConfig) -> LdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = c_str(json, "json")?;
        let inner = parse_config_str(text, permissive).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(LdConfig { inner }));
        Ok(())
    })
}

/// Overrides the master seed.
#[no_mangle]
pub unsafe extern "C" fn ld_config_set_seed(config: *mut LdConfig, seed: u64) -> LdStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        cfg.inner.seed = seed;
        Ok(())
    })
}

/// Writes the 64-character config hash plus NUL into `buf` (at least 65 bytes).
#[no_mangle]
pub unsafe extern "C" fn ld_config_hash(config: *const LdConfig, buf: *mut c_char, len: usize) -> LdStatus {
    guard(|| {
        let cfg = config.as_ref().ok_or_else(|| null("config"))?;
        let hash = cfg.inner.hash();
        let dst = slice_mut(buf, len, "buf")?;
        if dst.len() < hash.len() + 1 {
            return Err((LdStatus::Shape, format!("buffer of {len} bytes is too small")));
        }
        for (d, b) in dst.iter_mut().zip(hash.bytes()) {
            *d = b as c_char;
        }
        dst[hash.len()] = 0;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ld_config_free(config: *mut LdConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs every stage, writing artifacts under `out_dir`.
#[no_mangle]
pub unsafe extern "C" fn ld_run_pipeline(
    config: *const LdConfig,
    out_dir: *const c_char,
    out: *mut *mut LdRun,
) -> LdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = config.as_ref().ok_or_else(|| null("config"))?;
        let dir = c_str(out_dir, "out_dir")?;
        let inner = run_pipeline(&cfg.inner, Path::new(dir)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(LdRun { inner }));
        Ok(())
    })
}

/// Reads a flat metric such as `mae.few` from the `vanilla` or `augmented`
/// report. Absent regions give `LD_STATUS_NOT_FOUND`.
#[no_mangle]
pub unsafe extern "C" fn ld_run_metric(
    run: *const LdRun,
    report: *const c_char,
    key: *const c_char,
    out: *mut f64,
) -> LdStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let which = c_str(report, "report")?;
        let key = c_str(key, "key")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let eval = &run.inner.evaluation;
        let rep: &MetricsReport = match which {
            "vanilla" => &eval.vanilla,
            "augmented" => &eval.augmented,
            other => return Err((LdStatus::NotFound, format!("no report named `{other}`"))),
        };
        *out = rep
            .get(key)
            .ok_or_else(|| (LdStatus::NotFound, format!("`{key}` is absent from the {which} report")))?;
        Ok(())
    })
}

/// Synthetic rows accepted across all bins.
#[no_mangle]
pub unsafe extern "C" fn ld_run_synthetic_count(run: *const LdRun, out: *mut usize) -> LdStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = run.inner.generation.total_achieved;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ld_run_free(run: *mut LdRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ld_schedule_new(
    kind: LdScheduleKind,
    steps: usize,
    offset: f64,
    out: *mut *mut LdSchedule,
) -> LdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = match kind {
            LdScheduleKind::Cosine => ScheduleKind::Cosine,
            LdScheduleKind::Linear => ScheduleKind::Linear,
        };
        let inner = build_schedule(kind, steps, offset).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(LdSchedule { inner }));
        Ok(())
    })
}

/// `ᾱ_t` for `t` in `0..=T`.
#[no_mangle]
pub unsafe extern "C" fn ld_schedule_alpha_bar(schedule: *const LdSchedule, t: usize, out: *mut f64) -> LdStatus {
    guard(|| {
        let s = schedule.as_ref().ok_or_else(|| null("schedule"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if t > s.inner.steps {
            return Err(lib_err(Error::Timestep { t, max: s.inner.steps }));
        }
        *out = s.inner.alpha_bar(t);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ld_schedule_free(schedule: *mut LdSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// Normalized priorities for `bins` bins into `out_probabilities`.
#[no_mangle]
pub unsafe extern "C" fn ld_priority_scores(
    errors: *const f64,
    counts: *const usize,
    bins: usize,
    lambda: f64,
    normalize_errors: bool,
    out_probabilities: *mut f64,
) -> LdStatus {
    guard(|| {
        let e = slice(errors, bins, "errors")?;
        let n = slice(counts, bins, "counts")?;
        let out = slice_mut(out_probabilities, bins, "out_probabilities")?;
        let state = priority_scores(e, n, lambda, normalize_errors).map_err(lib_err)?;
        out.copy_from_slice(&state.probabilities);
        Ok(())
    })
}

/// Integer quotas summing to `total` into `out_quotas`.
#[no_mangle]
pub unsafe extern "C" fn ld_allocate_budget(
    probabilities: *const f64,
    bins: usize,
    total: usize,
    mode: LdAllocationMode,
    out_quotas: *mut usize,
) -> LdStatus {
    guard(|| {
        let p = slice(probabilities, bins, "probabilities")?;
        let out = slice_mut(out_quotas, bins, "out_quotas")?;
        let mode = match mode {
            LdAllocationMode::Priority => AllocationMode::Priority,
            LdAllocationMode::Uniform => AllocationMode::Uniform,
        };
        let plan = allocate_budget(p, total, mode).map_err(lib_err)?;
        out.copy_from_slice(&plan.quotas);
        Ok(())
    })
}

/// MAE, MSE, GM, Pearson and R² of `n` predictions.
#[no_mangle]
pub unsafe extern "C" fn ld_region_metrics(
    predictions: *const f64,
    targets: *const f64,
    n: usize,
    out: *mut LdRegionMetrics,
) -> LdStatus {
    guard(|| {
        let p = slice(predictions, n, "predictions")?;
        let y = slice(targets, n, "targets")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = region_metrics(p, y).map_err(lib_err)?;
        *out = LdRegionMetrics {
            count: m.count,
            mae: m.mae,
            mse: m.mse,
            gm: m.gm,
            pearson: m.pearson,
            r2: m.r2,
            degenerate: m.degenerate as i32,
        };
        Ok(())
    })
}

//! C interface to `epf-core`.
//!
//! Objects cross the boundary as opaque handles created by a constructor and
//! released by the matching `_free` function. Every fallible call returns an
//! [`EpfStatus`]; on failure the message is available from
//! [`epf_last_error_message`] on the same thread until the next failing call.
//! Panics are caught at the boundary and reported as `EPF_STATUS_PANIC`.
//!
//! Strings are NUL-terminated UTF-8. Dates are `YYYY-MM-DD`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use epf_core::backtest::{self, BacktestConfig, ForecastSet};
use epf_core::eval::{self, Slice};
use epf_core::ingest::{self, IngestManifest, SyntheticConfig};
use epf_core::timeseries::{DateRange, MarketDataset, HOURS_PER_DAY};
use epf_core::EpfError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpfStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8 or not a valid date.
    InvalidArgument = 2,
    Config = 3,
    /// Unreadable or inconsistent input data.
    Input = 4,
    Shape = 5,
    InsufficientHistory = 6,
    Numerical = 7,
    Undefined = 8,
    Io = 9,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 10,
    Panic = 11,
}

pub const EPF_SLICE_ALL: u32 = 0;
pub const EPF_SLICE_BOTTOM5: u32 = 1;
pub const EPF_SLICE_TOP5: u32 = 2;

/// Loaded market data.
pub struct EpfDataset {
    inner: MarketDataset,
}

/// Hourly forecasts (or actual prices) over contiguous days.
pub struct EpfForecast {
    inner: ForecastSet,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EpfMetrics {
    pub n_hours: usize,
    pub mae: f64,
    pub rmse: f64,
    pub rmae: f64,
    pub smape_percent: f64,
    pub r2: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EpfGwResult {
    pub statistic: f64,
    pub p_one_sided: f64,
    pub p_two_sided: f64,
    pub n: usize,
    /// Nonzero when the moment covariance was singular.
    pub degenerate: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Failure inside the shim, before or after calling into the core.
enum Fail {
    Null(&'static str),
    Arg(String),
    Small,
    Core(EpfError),
}

impl From<EpfError> for Fail {
    fn from(e: EpfError) -> Self {
        Fail::Core(e)
    }
}

fn status_of(e: &EpfError) -> EpfStatus {
    match e.root() {
        EpfError::Config { .. } => EpfStatus::Config,
        EpfError::Alignment(_) | EpfError::Shape(_) => EpfStatus::Shape,
        EpfError::InsufficientHistory { .. } => EpfStatus::InsufficientHistory,
        EpfError::NonConvergence { .. } | EpfError::Divergence { .. } => EpfStatus::Numerical,
        EpfError::Undefined(_) => EpfStatus::Undefined,
        EpfError::Io(_) => EpfStatus::Io,
        _ => EpfStatus::Input,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EpfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EpfStatus::Ok,
        Ok(Err(Fail::Null(name))) => {
            set_last_error(format!("argument `{name}` is NULL"));
            EpfStatus::NullArgument
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_last_error(msg);
            EpfStatus::InvalidArgument
        }
        Ok(Err(Fail::Small)) => {
            set_last_error("output buffer too small".into());
            EpfStatus::BufferTooSmall
        }
        Ok(Err(Fail::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            EpfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg(format!("argument `{name}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(name))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(name))
}

unsafe fn range_arg(start: *const c_char, end: *const c_char) -> Result<DateRange, Fail> {
    let parse = |s: &str, name: &str| {
        s.parse()
            .map_err(|_| Fail::Arg(format!("argument `{name}` is not a YYYY-MM-DD date: {s}")))
    };
    let start = parse(str_arg(start, "start")?, "start")?;
    let end = parse(str_arg(end, "end")?, "end")?;
    Ok(DateRange::new(start, end)?)
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn epf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn epf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a synthetic market from a JSON generator config.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn epf_dataset_synthetic(config_json: *const c_char, out: *mut *mut EpfDataset) -> EpfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg: SyntheticConfig = serde_json::from_str(str_arg(config_json, "config_json")?).map_err(EpfError::from)?;
        *out = boxed(EpfDataset {
            inner: ingest::generate_synthetic(&cfg)?,
        });
        Ok(())
    })
}

/// Loads the files listed in an ingest manifest.
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn epf_dataset_load(manifest_path: *const c_char, out: *mut *mut EpfDataset) -> EpfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let manifest = IngestManifest::from_file(Path::new(str_arg(manifest_path, "manifest_path")?))?;
        *out = boxed(EpfDataset {
            inner: ingest::load(&manifest)?,
        });
        Ok(())
    })
}

/// Number of whole days the dataset spans, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn epf_dataset_n_days(dataset: *const EpfDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.span().len_days())
}

/// # Safety
/// `dataset` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn epf_dataset_free(dataset: *mut EpfDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Runs one backtest described by a JSON backtest config.
///
/// # Safety
/// Pointers must be valid; `config_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn epf_backtest_run(
    dataset: *const EpfDataset,
    config_json: *const c_char,
    out: *mut *mut EpfForecast,
) -> EpfStatus {
    guard(|| {
        let ds = ref_arg(dataset, "dataset")?;
        let out = out_arg(out, "out")?;
        let cfg: BacktestConfig = serde_json::from_str(str_arg(config_json, "config_json")?).map_err(EpfError::from)?;
        *out = boxed(EpfForecast {
            inner: backtest::run_backtest(&ds.inner, &cfg)?,
        });
        Ok(())
    })
}

/// Actual prices of `zone` over `[start, end]`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn epf_actuals(
    dataset: *const EpfDataset,
    zone: *const c_char,
    start: *const c_char,
    end: *const c_char,
    out: *mut *mut EpfForecast,
) -> EpfStatus {
    guard(|| {
        let ds = ref_arg(dataset, "dataset")?;
        let out = out_arg(out, "out")?;
        let range = range_arg(start, end)?;
        *out = boxed(EpfForecast {
            inner: backtest::actuals(&ds.inner, str_arg(zone, "zone")?, range)?,
        });
        Ok(())
    })
}

/// Seasonal-persistence benchmark: the price seven days earlier.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn epf_naive_forecast(
    dataset: *const EpfDataset,
    zone: *const c_char,
    start: *const c_char,
    end: *const c_char,
    out: *mut *mut EpfForecast,
) -> EpfStatus {
    guard(|| {
        let ds = ref_arg(dataset, "dataset")?;
        let out = out_arg(out, "out")?;
        let range = range_arg(start, end)?;
        *out = boxed(EpfForecast {
            inner: backtest::naive_forecast(&ds.inner, str_arg(zone, "zone")?, range)?,
        });
        Ok(())
    })
}

/// Reads a `day,hour,value,label` forecast CSV.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn epf_forecast_read_csv(path: *const c_char, out: *mut *mut EpfForecast) -> EpfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = boxed(EpfForecast {
            inner: ForecastSet::read_csv(Path::new(str_arg(path, "path")?))?,
        });
        Ok(())
    })
}

/// Writes a forecast CSV atomically.
///
/// # Safety
/// `forecast` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn epf_forecast_write_csv(forecast: *const EpfForecast, path: *const c_char) -> EpfStatus {
    guard(|| {
        let f = ref_arg(forecast, "forecast")?;
        f.inner.write_csv(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of forecast days, or 0 for NULL. Values hold 24 per day.
///
/// # Safety
/// `forecast` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn epf_forecast_n_days(forecast: *const EpfForecast) -> usize {
    forecast.as_ref().map_or(0, |f| f.inner.days.len())
}

/// Copies the values, day-major and hour-minor, into `buf`. `*len` holds the
/// buffer capacity on entry and the number of values on return; if the buffer
/// is too small nothing is copied and `EPF_STATUS_BUFFER_TOO_SMALL` is
/// returned.
///
/// # Safety
/// `buf` must point to `*len` writable doubles, or be NULL with `*len` 0.
#[no_mangle]
pub unsafe extern "C" fn epf_forecast_values(forecast: *const EpfForecast, buf: *mut f64, len: *mut usize) -> EpfStatus {
    guard(|| {
        let f = ref_arg(forecast, "forecast")?;
        let len = out_arg(len, "len")?;
        let need = f.inner.days.len() * HOURS_PER_DAY;
        let cap = *len;
        *len = need;
        if cap < need {
            return Err(Fail::Small);
        }
        if need > 0 {
            if buf.is_null() {
                return Err(Fail::Null("buf"));
            }
            let dst = std::slice::from_raw_parts_mut(buf, need);
            for (chunk, row) in dst.chunks_exact_mut(HOURS_PER_DAY).zip(&f.inner.values) {
                chunk.copy_from_slice(row);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `forecast` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn epf_forecast_free(forecast: *mut EpfForecast) {
    if !forecast.is_null() {
        drop(Box::from_raw(forecast));
    }
}

/// Hour-by-hour mean of `n` member forecasts. With `strict` nonzero exactly
/// eight members are required.
///
/// # Safety
/// `members` must point to `n` live handles; `label` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn epf_ensemble(
    members: *const *const EpfForecast,
    n: usize,
    label: *const c_char,
    strict: u8,
    out: *mut *mut EpfForecast,
) -> EpfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if members.is_null() {
            return Err(Fail::Null("members"));
        }
        let sets = std::slice::from_raw_parts(members, n)
            .iter()
            .map(|p| ref_arg(*p, "members[i]").map(|f| f.inner.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        *out = boxed(EpfForecast {
            inner: backtest::ensemble(str_arg(label, "label")?, &sets, strict != 0)?,
        });
        Ok(())
    })
}

/// Accuracy of `forecast` on one slice of the actual prices.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn epf_evaluate(
    forecast: *const EpfForecast,
    actual: *const EpfForecast,
    naive: *const EpfForecast,
    slice: u32,
    out: *mut EpfMetrics,
) -> EpfStatus {
    guard(|| {
        let f = ref_arg(forecast, "forecast")?;
        let a = ref_arg(actual, "actual")?;
        let n = ref_arg(naive, "naive")?;
        let out = out_arg(out, "out")?;
        let slice = match slice {
            EPF_SLICE_ALL => Slice::All,
            EPF_SLICE_BOTTOM5 => Slice::Bottom5,
            EPF_SLICE_TOP5 => Slice::Top5,
            other => return Err(Fail::Arg(format!("unknown slice code {other}"))),
        };
        let r = eval::evaluate(&f.inner, &a.inner, &n.inner, slice)?;
        *out = EpfMetrics {
            n_hours: r.n_hours,
            mae: r.mae,
            rmse: r.rmse,
            rmae: r.rmae,
            smape_percent: r.smape_percent,
            r2: r.r2,
        };
        Ok(())
    })
}

/// Giacomini-White test of A against B from hourly errors, 24 per day over
/// `n_days` days. A small one-sided p-value means B is more accurate.
///
/// # Safety
/// `err_a` and `err_b` must each hold `24 * n_days` doubles.
#[no_mangle]
pub unsafe extern "C" fn epf_gw_test(
    err_a: *const f64,
    err_b: *const f64,
    n_days: usize,
    out: *mut EpfGwResult,
) -> EpfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if err_a.is_null() {
            return Err(Fail::Null("err_a"));
        }
        if err_b.is_null() {
            return Err(Fail::Null("err_b"));
        }
        let rows = |p: *const f64| -> Vec<[f64; HOURS_PER_DAY]> {
            std::slice::from_raw_parts(p, n_days * HOURS_PER_DAY)
                .chunks_exact(HOURS_PER_DAY)
                .map(|c| c.try_into().expect("chunk of 24"))
                .collect()
        };
        let r = eval::gw_test(&rows(err_a), &rows(err_b))?;
        *out = EpfGwResult {
            statistic: r.statistic,
            p_one_sided: r.p_one_sided,
            p_two_sided: r.p_two_sided,
            n: r.n,
            degenerate: r.degenerate as u8,
        };
        Ok(())
    })
}

/// Runs the full experiment of a run-config file, as `epf backtest` does.
/// `out_dir` may be NULL to use the config's own output directory.
///
/// # Safety
/// `config_path` must be NUL-terminated; `out_dir` NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn epf_run_config(config_path: *const c_char, out_dir: *const c_char) -> EpfStatus {
    guard(|| {
        let config = str_arg(config_path, "config_path")?;
        let out = if out_dir.is_null() {
            None
        } else {
            Some(Path::new(str_arg(out_dir, "out_dir")?))
        };
        epf_core::cli::cmd_backtest(Path::new(config), out, None, false)?;
        Ok(())
    })
}

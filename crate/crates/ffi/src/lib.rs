//! C interface to `ssv-core`.
//!
//! Every function returns an [`SsvStatus`]; on failure a message is kept
//! per thread and can be read with [`ssv_last_error_message`]. Objects are
//! opaque handles created by `*_new`/`*_load`/`ssv_simulate`/`ssv_fit` and
//! released by the matching `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ssv_core::data_io::{vix_to_logvar, VixConvention};
use ssv_core::moments::{moment_report, MomentRequest, MomentSource};
use ssv_core::npsmle::{fit, EstimationResult, EstimatorConfig, ObservationSeries};
use ssv_core::sentiment::score::{classify_sentences, score_from_counts};
use ssv_core::sentiment::{ClassifierModel, Label};
use ssv_core::simulate::{simulate_ssv, CorrelationScheme, SimConfig};
use ssv_core::{ProcessState, SsvError, SsvParams, TimeGrid};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Resonance = 3,
    Overflow = 4,
    DataError = 5,
    BufferTooSmall = 6,
    Panic = 7,
    Failure = 8,
}

/// The ten model parameters, in the order of the JSON field names.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SsvParamsC {
    pub lambda_s: f64,
    pub mu_s: f64,
    pub sigma_s: f64,
    pub mu_p: f64,
    pub mu_v: f64,
    pub gamma_v: f64,
    pub beta_v: f64,
    pub sigma_v: f64,
    pub rho_pv: f64,
    pub rho_sv: f64,
}

impl From<SsvParams> for SsvParamsC {
    fn from(p: SsvParams) -> Self {
        let [lambda_s, mu_s, sigma_s, mu_p, mu_v, gamma_v, beta_v, sigma_v, rho_pv, rho_sv] = p.to_array();
        SsvParamsC {
            lambda_s,
            mu_s,
            sigma_s,
            mu_p,
            mu_v,
            gamma_v,
            beta_v,
            sigma_v,
            rho_pv,
            rho_sv,
        }
    }
}

impl SsvParamsC {
    fn to_core(self) -> Result<SsvParams, SsvError> {
        let p = SsvParams::from_array([
            self.lambda_s,
            self.mu_s,
            self.sigma_s,
            self.mu_p,
            self.mu_v,
            self.gamma_v,
            self.beta_v,
            self.sigma_v,
            self.rho_pv,
            self.rho_sv,
        ]);
        p.validate()?;
        Ok(p)
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SsvMomentsC {
    pub t: f64,
    pub e_s: f64,
    pub var_s: f64,
    pub e_v: f64,
    pub var_v: f64,
    pub cov_sv: f64,
    /// NaN when either variance vanishes.
    pub rho_sv: f64,
    /// 0: closed form, 1: numerical integration.
    pub source: i32,
}

/// Observation series (opaque).
pub struct SsvSeries(ObservationSeries);
/// Estimation result (opaque).
pub struct SsvFit(EstimationResult);
/// Trained sentence classifier (opaque).
pub struct SsvClassifier(ClassifierModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &SsvError) -> SsvStatus {
    match e {
        SsvError::Resonance { .. } => SsvStatus::Resonance,
        SsvError::Overflow { .. } | SsvError::PathOverflow { .. } | SsvError::BarOverflow { .. } => SsvStatus::Overflow,
        SsvError::Data(_) | SsvError::Csv(_) | SsvError::Io(_) | SsvError::DegenerateSample(_) => SsvStatus::DataError,
        SsvError::InvalidParameter { .. } | SsvError::Config(_) | SsvError::Json(_) => SsvStatus::InvalidArgument,
        _ => SsvStatus::Failure,
    }
}

enum FfiError {
    Core(SsvError),
    Status(SsvStatus, String),
}

impl From<SsvError> for FfiError {
    fn from(e: SsvError) -> Self {
        FfiError::Core(e)
    }
}

fn null(what: &str) -> FfiError {
    FfiError::Status(SsvStatus::NullPointer, format!("`{what}` is NULL"))
}

fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> SsvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsvStatus::Ok,
        Ok(Err(FfiError::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(FfiError::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SsvStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, FfiError> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| FfiError::Status(SsvStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ssv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reference parameter set.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ssv_params_default(out: *mut SsvParamsC) -> SsvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = SsvParams::sp500_2015().into();
        Ok(())
    })
}

/// Moments of sentiment and log variance at horizon `t` from `(s0, v0)`.
///
/// # Safety
/// `params` must be NULL or point to a valid struct; `out` must be NULL or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ssv_moments(
    params: *const SsvParamsC,
    s0: f64,
    v0: f64,
    t: f64,
    out: *mut SsvMomentsC,
) -> SsvStatus {
    guard(|| {
        if params.is_null() {
            return Err(null("params"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let req = MomentRequest::new((*params).to_core()?, s0, v0, t)?;
        let (r, src) = moment_report(&req)?;
        *out = SsvMomentsC {
            t: r.t,
            e_s: r.e_s,
            var_s: r.var_s,
            e_v: r.e_v,
            var_v: r.var_v,
            cov_sv: r.cov_sv,
            rho_sv: r.rho_sv_t.unwrap_or(f64::NAN),
            source: match src {
                MomentSource::ClosedForm => 0,
                MomentSource::Ode => 1,
            },
        };
        Ok(())
    })
}

/// Simulates one path of the joint model on `n_bars` bars of width `dt`.
///
/// # Safety
/// `params` must be NULL or valid; `out` must be NULL or valid for writes.
/// The handle written to `*out` must be released with [`ssv_series_free`].
#[no_mangle]
pub unsafe extern "C" fn ssv_simulate(
    params: *const SsvParamsC,
    s0: f64,
    p0: f64,
    v0: f64,
    dt: f64,
    n_bars: usize,
    m_substeps: usize,
    seed: u64,
    out: *mut *mut SsvSeries,
) -> SsvStatus {
    guard(|| {
        if params.is_null() {
            return Err(null("params"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = SimConfig {
            grid: TimeGrid::new(0.0, dt, n_bars, m_substeps)?,
            n_paths: 1,
            seed,
            initial: ProcessState::new(s0, p0, v0, 0.0)?,
            antithetic: false,
        };
        let path = simulate_ssv(&(*params).to_core()?, &cfg, CorrelationScheme::Cholesky)?.remove(0);
        let mut series = ObservationSeries::from_path(&path)?;
        series.grid.m_substeps = 1;
        *out = Box::into_raw(Box::new(SsvSeries(series)));
        Ok(())
    })
}

/// Builds a series from `n_rows × channels` row-major values (`channels`
/// is 1 for sentiment only, 3 for sentiment, log price, log variance).
///
/// # Safety
/// `values` must point to `n_rows * channels` readable doubles; `out` must
/// be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ssv_series_new(
    values: *const f64,
    n_rows: usize,
    channels: usize,
    dt: f64,
    out: *mut *mut SsvSeries,
) -> SsvStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if n_rows < 2 {
            return Err(FfiError::Status(
                SsvStatus::InvalidArgument,
                "need at least 2 rows".into(),
            ));
        }
        let len = n_rows
            .checked_mul(channels)
            .ok_or_else(|| FfiError::Status(SsvStatus::InvalidArgument, "size overflow".into()))?;
        let data = std::slice::from_raw_parts(values, len).to_vec();
        let series = ObservationSeries::new(
            TimeGrid::new(0.0, dt, n_rows - 1, 1)?,
            channels,
            data,
            Default::default(),
        )?;
        *out = Box::into_raw(Box::new(SsvSeries(series)));
        Ok(())
    })
}

/// Number of rows (bar endpoints) in the series, or 0 for NULL.
///
/// # Safety
/// `series` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssv_series_rows(series: *const SsvSeries) -> usize {
    series.as_ref().map_or(0, |s| s.0.grid.n_bars + 1)
}

/// Copies channel `channel` into `buf`, which must hold at least
/// [`ssv_series_rows`] values.
///
/// # Safety
/// `series` must be a live handle and `buf` valid for `buf_len` writes.
#[no_mangle]
pub unsafe extern "C" fn ssv_series_channel(
    series: *const SsvSeries,
    channel: usize,
    buf: *mut f64,
    buf_len: usize,
) -> SsvStatus {
    guard(|| {
        let s = series.as_ref().ok_or_else(|| null("series"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if channel >= s.0.channels {
            return Err(FfiError::Status(
                SsvStatus::InvalidArgument,
                format!("channel {channel} out of range (series has {})", s.0.channels),
            ));
        }
        let col = s.0.column(channel);
        if buf_len < col.len() {
            return Err(FfiError::Status(
                SsvStatus::BufferTooSmall,
                format!("buffer holds {buf_len} values, need {}", col.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, col.len()).copy_from_slice(&col);
        Ok(())
    })
}

/// # Safety
/// `series` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ssv_series_free(series: *mut SsvSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Maximizes the simulated likelihood. `config_json` holds estimator
/// settings as JSON (NULL or `"{}"` for defaults).
///
/// # Safety
/// `series` must be a live handle, `config_json` NULL or a NUL-terminated
/// string, `out` valid for writes. Release the result with [`ssv_fit_free`].
#[no_mangle]
pub unsafe extern "C" fn ssv_fit(
    series: *const SsvSeries,
    config_json: *const c_char,
    out: *mut *mut SsvFit,
) -> SsvStatus {
    guard(|| {
        let s = series.as_ref().ok_or_else(|| null("series"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg: EstimatorConfig = if config_json.is_null() {
            EstimatorConfig::default()
        } else {
            serde_json::from_str(read_str(config_json, "config_json")?).map_err(SsvError::from)?
        };
        cfg.validate()?;
        let res = fit(&s.0, &cfg, None)?;
        *out = Box::into_raw(Box::new(SsvFit(res)));
        Ok(())
    })
}

/// 1 if the optimizer met its tolerances, 0 otherwise (or for NULL).
///
/// # Safety
/// `fit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssv_fit_converged(fit: *const SsvFit) -> i32 {
    fit.as_ref().map_or(0, |f| f.0.converged as i32)
}

/// Log likelihood at the estimate; NaN for NULL.
///
/// # Safety
/// `fit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssv_fit_loglik(fit: *const SsvFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.0.loglik)
}

/// Writes the estimate (3 values for sentiment-only fits, 10 for joint
/// fits) to `buf` and its length to `*n_out`.
///
/// # Safety
/// `fit` must be a live handle, `buf` valid for `buf_len` writes, `n_out`
/// valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ssv_fit_params(
    fit: *const SsvFit,
    buf: *mut f64,
    buf_len: usize,
    n_out: *mut usize,
) -> SsvStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if n_out.is_null() {
            return Err(null("n_out"));
        }
        let x = f.0.theta_hat.to_vec();
        *n_out = x.len();
        if buf_len < x.len() {
            return Err(FfiError::Status(
                SsvStatus::BufferTooSmall,
                format!("buffer holds {buf_len} values, need {}", x.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, x.len()).copy_from_slice(&x);
        Ok(())
    })
}

/// Full result as JSON. Release the string with [`ssv_string_free`].
///
/// # Safety
/// `fit` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ssv_fit_to_json(fit: *const SsvFit, out: *mut *mut c_char) -> SsvStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(&f.0).map_err(SsvError::from)?;
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `fit` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ssv_fit_free(fit: *mut SsvFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ssv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Document score from sentence counts: `ln(1 + pos/n) − ln(1 + neg/n)`.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ssv_document_score(
    n_sentences: usize,
    n_pos: usize,
    n_neg: usize,
    out: *mut f64,
) -> SsvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = score_from_counts(n_sentences, n_pos, n_neg)?;
        Ok(())
    })
}

/// Volatility quote to log variance. `convention` 0: `2 ln(q/100)`,
/// 1: `ln(q/100)`.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ssv_vix_to_logvar(quote: f64, convention: i32, out: *mut f64) -> SsvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = match convention {
            0 => VixConvention::LogvarAnnual,
            1 => VixConvention::Logvix,
            other => {
                return Err(FfiError::Status(
                    SsvStatus::InvalidArgument,
                    format!("unknown convention {other}"),
                ));
            }
        };
        *out = vix_to_logvar(quote, c)?;
        Ok(())
    })
}

/// Loads a model written by `ssv train-classifier`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
/// Release the handle with [`ssv_classifier_free`].
#[no_mangle]
pub unsafe extern "C" fn ssv_classifier_load(path: *const c_char, out: *mut *mut SsvClassifier) -> SsvStatus {
    guard(|| {
        let p = read_str(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = ClassifierModel::load(Path::new(p))?;
        *out = Box::into_raw(Box::new(SsvClassifier(m)));
        Ok(())
    })
}

/// Classifies one sentence: writes -1, 0 or 1 to `*label`.
///
/// # Safety
/// `clf` must be a live handle, `text` a NUL-terminated string and `label`
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ssv_classifier_predict(
    clf: *const SsvClassifier,
    text: *const c_char,
    label: *mut i32,
) -> SsvStatus {
    guard(|| {
        let c = clf.as_ref().ok_or_else(|| null("clf"))?;
        let t = read_str(text, "text")?;
        if label.is_null() {
            return Err(null("label"));
        }
        *label = c.0.predict(t).value() as i32;
        Ok(())
    })
}

/// Splits `text` into sentences, classifies them and writes the document
/// score to `*score`.
///
/// # Safety
/// `clf` must be a live handle, `text` a NUL-terminated string and `score`
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ssv_classifier_score_document(
    clf: *const SsvClassifier,
    text: *const c_char,
    score: *mut f64,
) -> SsvStatus {
    guard(|| {
        let c = clf.as_ref().ok_or_else(|| null("clf"))?;
        let t = read_str(text, "text")?;
        if score.is_null() {
            return Err(null("score"));
        }
        let labels = classify_sentences(&c.0, t);
        let pos = labels.iter().filter(|l| **l == Label::Positive).count();
        let neg = labels.iter().filter(|l| **l == Label::Negative).count();
        *score = score_from_counts(labels.len(), pos, neg)?;
        Ok(())
    })
}

/// # Safety
/// `clf` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ssv_classifier_free(clf: *mut SsvClassifier) {
    if !clf.is_null() {
        drop(Box::from_raw(clf));
    }
}

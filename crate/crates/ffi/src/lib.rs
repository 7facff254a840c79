//! C ABI for the triggerscope engine.
//!
//! Conventions:
//! - Every fallible call returns a [`TsStatus`]; on failure the message is
//!   available from [`ts_last_error`] on the same thread.
//! - Strings crossing the boundary are NUL-terminated UTF-8. Strings returned
//!   through out-parameters are owned by the caller and must be released with
//!   [`ts_string_free`].
//! - An analyzer handle may be shared across threads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use triggerscope::eval::{pabak, to_f64};
use triggerscope::plugin::AnalyzeError;
use triggerscope::service::default_registry;
use triggerscope::{AnalysisRequest, Analyzer, BackendConfig, Gateway, Taxonomy};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidRequest = 4,
    UnknownPlugin = 5,
    AnalysisFailed = 6,
    Panic = 7,
}

/// Opaque analyzer handle.
pub struct TsAnalyzer {
    analyzer: Analyzer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: TsStatus, message: impl Into<String>) -> TsStatus {
    set_error(message);
    status
}

/// Runs `body` with panics turned into [`TsStatus::Panic`].
fn guarded(body: impl FnOnce() -> TsStatus) -> TsStatus {
    clear_error();
    catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|_| fail(TsStatus::Panic, "internal panic"))
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, TsStatus> {
    if ptr.is_null() {
        return Err(fail(TsStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(TsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// # Safety
/// `out` must be null or valid for a pointer write.
unsafe fn write_string(out: *mut *mut c_char, value: String) -> TsStatus {
    if out.is_null() {
        return fail(TsStatus::NullArgument, "output pointer is null");
    }
    match CString::new(value) {
        Ok(s) => {
            *out = s.into_raw();
            TsStatus::Ok
        }
        Err(_) => fail(TsStatus::Panic, "output contained a NUL byte"),
    }
}

/// Creates an analyzer with the shipped taxonomy and plugins.
///
/// `backend_json` is a backend configuration object, or null for the
/// pattern tier (no network at all).
///
/// # Safety
/// `backend_json` must be null or a valid NUL-terminated string; `out` must
/// be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ts_analyzer_new(backend_json: *const c_char, out: *mut *mut TsAnalyzer) -> TsStatus {
    guarded(|| {
        if out.is_null() {
            return fail(TsStatus::NullArgument, "output pointer is null");
        }
        let backend = if backend_json.is_null() {
            BackendConfig::pattern()
        } else {
            let raw = match read_str(backend_json, "backend_json") {
                Ok(s) => s,
                Err(status) => return status,
            };
            match serde_json::from_str::<BackendConfig>(raw) {
                Ok(b) => b,
                Err(e) => return fail(TsStatus::InvalidJson, format!("backend config: {e}")),
            }
        };
        if let Err(e) = backend.validate() {
            return fail(TsStatus::InvalidRequest, e.to_string());
        }
        let taxonomy = Taxonomy::shipped();
        let registry = match default_registry(&taxonomy, None) {
            Ok(r) => r,
            Err(e) => return fail(TsStatus::AnalysisFailed, e.to_string()),
        };
        let analyzer =
            Analyzer::new(Arc::new(taxonomy), Arc::new(registry), Gateway::default()).with_backend(backend);
        *out = Box::into_raw(Box::new(TsAnalyzer { analyzer }));
        TsStatus::Ok
    })
}

/// Releases an analyzer. Null is ignored.
///
/// # Safety
/// `handle` must be null or a pointer from [`ts_analyzer_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_analyzer_free(handle: *mut TsAnalyzer) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

fn analyze_status(e: &AnalyzeError) -> TsStatus {
    match e {
        AnalyzeError::InvalidRequest(_) => TsStatus::InvalidRequest,
        AnalyzeError::UnknownPlugin(_) => TsStatus::UnknownPlugin,
        AnalyzeError::AllPluginsFailed(_) => TsStatus::AnalysisFailed,
    }
}

/// Runs an analysis request given as JSON and writes the result as JSON.
///
/// # Safety
/// `handle` must come from [`ts_analyzer_new`]; `request_json` must be a
/// valid NUL-terminated string; `out_json` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ts_analyze_json(
    handle: *const TsAnalyzer,
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> TsStatus {
    guarded(|| {
        let Some(handle) = handle.as_ref() else {
            return fail(TsStatus::NullArgument, "analyzer handle is null");
        };
        let raw = match read_str(request_json, "request_json") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let request: AnalysisRequest = match serde_json::from_str(raw) {
            Ok(r) => r,
            Err(e) => return fail(TsStatus::InvalidJson, format!("request: {e}")),
        };
        match handle.analyzer.analyze(&request) {
            Ok(result) => write_string(out_json, serde_json::to_string(&result).unwrap_or_default()),
            Err(e) => fail(analyze_status(&e), e.to_string()),
        }
    })
}

/// Runs the pattern matcher over `text` and writes the findings array as JSON.
///
/// # Safety
/// `handle` must come from [`ts_analyzer_new`]; `text` must be a valid
/// NUL-terminated string; `out_json` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ts_detect(
    handle: *const TsAnalyzer,
    text: *const c_char,
    out_json: *mut *mut c_char,
) -> TsStatus {
    guarded(|| {
        let Some(handle) = handle.as_ref() else {
            return fail(TsStatus::NullArgument, "analyzer handle is null");
        };
        let text = match read_str(text, "text") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let request = AnalysisRequest::new("ffi", text, &["cbt-regex"]);
        let outcome = handle
            .analyzer
            .analyze_with_backend(&request, Some(&BackendConfig::pattern()));
        match outcome {
            Ok(result) => {
                let findings: Vec<_> = result.all_findings().collect();
                write_string(out_json, serde_json::to_string(&findings).unwrap_or_default())
            }
            Err(e) => fail(analyze_status(&e), e.to_string()),
        }
    })
}

/// PABAK between two 0/1 label arrays of length `len`.
///
/// # Safety
/// `a` and `b` must each point to `len` readable bytes; `out` must be valid
/// for a write.
#[no_mangle]
pub unsafe extern "C" fn ts_pabak(a: *const u8, b: *const u8, len: usize, out: *mut f64) -> TsStatus {
    guarded(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return fail(TsStatus::NullArgument, "null argument");
        }
        let a = std::slice::from_raw_parts(a, len);
        let b = std::slice::from_raw_parts(b, len);
        let flags = |v: &[u8]| -> Option<Vec<bool>> {
            v.iter()
                .map(|&x| match x {
                    0 => Some(false),
                    1 => Some(true),
                    _ => None,
                })
                .collect()
        };
        let (Some(a), Some(b)) = (flags(a), flags(b)) else {
            return fail(TsStatus::InvalidRequest, "labels must be 0 or 1");
        };
        match pabak(&a, &b) {
            Ok(v) => {
                *out = to_f64(v);
                TsStatus::Ok
            }
            Err(e) => fail(TsStatus::InvalidRequest, e.to_string()),
        }
    })
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn ts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned through an out-parameter. Null is ignored.
///
/// # Safety
/// `s` must be null or a string produced by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string; do not free it.
#[no_mangle]
pub extern "C" fn ts_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

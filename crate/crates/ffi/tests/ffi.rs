use std::ffi::{c_char, CStr, CString};
use std::ptr;

use serde_json::Value;
use triggerscope_ffi::*;

fn new_analyzer() -> *mut TsAnalyzer {
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { ts_analyzer_new(ptr::null(), &mut handle) }, TsStatus::Ok);
    assert!(!handle.is_null());
    handle
}

fn take_json(s: *mut c_char) -> Value {
    assert!(!s.is_null());
    let v = serde_json::from_str(unsafe { CStr::from_ptr(s) }.to_str().unwrap()).unwrap();
    unsafe { ts_string_free(s) };
    v
}

fn last_error() -> String {
    let p = ts_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn analyze_json_round_trip() {
    let handle = new_analyzer();
    let request = CString::new(
        r#"{"content_id":"c1","text":"Everyone knows the minister is a traitor.","plugin_ids":["cbt-regex"]}"#,
    )
    .unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ts_analyze_json(handle, request.as_ptr(), &mut out) }, TsStatus::Ok);
    assert!(ts_last_error().is_null());
    let result = take_json(out);
    assert_eq!(result["content_id"], "c1");
    unsafe { ts_analyzer_free(handle) };
}

#[test]
fn detect_returns_grounded_findings() {
    let handle = new_analyzer();
    let text = "Everyone knows the minister is a traitor. Stop the betrayal now!";
    let c_text = CString::new(text).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ts_detect(handle, c_text.as_ptr(), &mut out) }, TsStatus::Ok);
    let findings = take_json(out);
    let findings = findings.as_array().unwrap();
    assert!(!findings.is_empty());
    let chars: Vec<char> = text.chars().collect();
    for f in findings {
        let start = f["span"]["start"].as_u64().unwrap() as usize;
        let end = f["span"]["end"].as_u64().unwrap() as usize;
        let quote: String = chars[start..end].iter().collect();
        assert_eq!(f["span"]["excerpt"].as_str().unwrap(), quote);
    }
    unsafe { ts_analyzer_free(handle) };
}

#[test]
fn error_codes() {
    let handle = new_analyzer();
    let mut out = ptr::null_mut();

    assert_eq!(unsafe { ts_analyze_json(ptr::null(), ptr::null(), &mut out) }, TsStatus::NullArgument);
    assert!(last_error().contains("null"));

    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { ts_analyze_json(handle, bad.as_ptr(), &mut out) }, TsStatus::InvalidJson);

    let unknown = CString::new(r#"{"content_id":"c","text":"hi","plugin_ids":["nope"]}"#).unwrap();
    assert_eq!(unsafe { ts_analyze_json(handle, unknown.as_ptr(), &mut out) }, TsStatus::UnknownPlugin);
    assert!(last_error().contains("nope"));

    let invalid_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { ts_detect(handle, invalid_utf8.as_ptr().cast(), &mut out) },
        TsStatus::InvalidUtf8
    );

    let text = CString::new("hello").unwrap();
    assert_eq!(unsafe { ts_detect(handle, text.as_ptr(), ptr::null_mut()) }, TsStatus::NullArgument);
    assert!(out.is_null(), "failed calls leave the output untouched");

    let cloud_without_endpoint = CString::new(r#"{"tier":"cloud-api","model_id":"m"}"#).unwrap();
    let mut other = ptr::null_mut();
    let status = unsafe { ts_analyzer_new(cloud_without_endpoint.as_ptr(), &mut other) };
    assert!(matches!(status, TsStatus::InvalidJson | TsStatus::InvalidRequest), "{status:?}");
    assert!(other.is_null());

    unsafe { ts_analyzer_free(handle) };
    unsafe { ts_analyzer_free(ptr::null_mut()) };
    unsafe { ts_string_free(ptr::null_mut()) };
}

#[test]
fn pabak_matches_agreement_formula() {
    let a = [1u8, 0, 1, 1];
    let b = [1u8, 1, 1, 0];
    let mut value = f64::NAN;
    assert_eq!(unsafe { ts_pabak(a.as_ptr(), b.as_ptr(), a.len(), &mut value) }, TsStatus::Ok);
    // Observed agreement 2/4, so 2 * 0.5 - 1.
    assert_eq!(value, 0.0);

    let bad = [2u8, 0, 1, 1];
    assert_eq!(
        unsafe { ts_pabak(bad.as_ptr(), b.as_ptr(), bad.len(), &mut value) },
        TsStatus::InvalidRequest
    );
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(ts_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/triggerscope.h");
    for name in [
        "ts_analyzer_new",
        "ts_analyzer_free",
        "ts_analyze_json",
        "ts_detect",
        "ts_pabak",
        "ts_last_error",
        "ts_string_free",
        "ts_version",
        "TS_STATUS_OK = 0",
        "typedef struct TsAnalyzer TsAnalyzer",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

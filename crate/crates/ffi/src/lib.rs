//! C ABI for the privmeter toolkit.
//!
//! Handles are opaque pointers created and freed by this library. Every
//! fallible function returns a [`PrivmeterStatus`]; on failure a
//! thread-local message is retrievable with [`privmeter_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use sha2::Digest as _;

use privmeter::blocker;
use privmeter::metrics::MetricTable;
use privmeter::model;
use privmeter::psl::SuffixRules;
use privmeter::report;
use privmeter::stats;
use privmeter::Error;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrivmeterStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    IoError = 4,
    InvalidInput = 5,
    /// The host has no registrable domain (public suffix or IP literal).
    NoDomain = 6,
    BufferTooSmall = 7,
}

/// Opaque Public Suffix List handle.
pub struct PrivmeterPsl(SuffixRules);

/// Two-sample KS test result.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PrivmeterKsResult {
    pub d_statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
    pub same_distribution: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

fn status_for(err: &Error) -> PrivmeterStatus {
    match err {
        Error::Io { .. } => PrivmeterStatus::IoError,
        Error::PslParse { .. } | Error::LogSchema { .. } | Error::Config { .. } => {
            PrivmeterStatus::ParseError
        }
        Error::InvalidInput(_) => PrivmeterStatus::InvalidInput,
        Error::Pipeline { source, .. } => status_for(source),
    }
}

fn fail(err: Error) -> PrivmeterStatus {
    let status = status_for(&err);
    set_error(err);
    status
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string or NULL.
unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, PrivmeterStatus> {
    if ptr.is_null() {
        set_error("null argument");
        return Err(PrivmeterStatus::NullArgument);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|e| {
        set_error(format!("invalid utf-8: {e}"));
        PrivmeterStatus::InvalidUtf8
    })
}

fn copy_to_buffer(value: &str, buf: *mut c_char, buf_len: usize) -> PrivmeterStatus {
    let bytes = value.as_bytes();
    if buf.is_null() || buf_len == 0 || bytes.len() + 1 > buf_len {
        set_error(format!("buffer too small: need {} bytes", bytes.len() + 1));
        return PrivmeterStatus::BufferTooSmall;
    }
    unsafe {
        ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
        *buf.add(bytes.len()) = 0;
    }
    PrivmeterStatus::Ok
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn privmeter_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the last error message for this thread into `buf`; returns the
/// number of bytes the full message needs (including the NUL).
///
/// # Safety
/// `buf` must point to `buf_len` writable bytes, or be NULL to query the
/// required size.
#[no_mangle]
pub unsafe extern "C" fn privmeter_last_error(buf: *mut c_char, buf_len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes_with_nul();
        if !buf.is_null() && buf_len >= bytes.len() {
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
            }
        }
        bytes.len()
    })
}

/// Load the bundled Public Suffix List snapshot.
///
/// # Safety
/// `out` must be a valid pointer; the returned handle must be released with
/// `privmeter_psl_free`.
#[no_mangle]
pub unsafe extern "C" fn privmeter_psl_bundled(out: *mut *mut PrivmeterPsl) -> PrivmeterStatus {
    if out.is_null() {
        set_error("null argument");
        return PrivmeterStatus::NullArgument;
    }
    let handle = Box::new(PrivmeterPsl(SuffixRules::bundled()));
    unsafe { *out = Box::into_raw(handle) };
    PrivmeterStatus::Ok
}

/// Parse a Public Suffix List from text.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be valid. Release the handle
/// with `privmeter_psl_free`.
#[no_mangle]
pub unsafe extern "C" fn privmeter_psl_parse(
    text: *const c_char,
    out: *mut *mut PrivmeterPsl,
) -> PrivmeterStatus {
    if out.is_null() {
        set_error("null argument");
        return PrivmeterStatus::NullArgument;
    }
    let text = match unsafe { cstr_arg(text) } {
        Ok(t) => t,
        Err(status) => return status,
    };
    match SuffixRules::parse(text) {
        Ok(rules) => {
            unsafe { *out = Box::into_raw(Box::new(PrivmeterPsl(rules))) };
            PrivmeterStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// # Safety
/// `psl` must be a handle from `privmeter_psl_parse`/`privmeter_psl_bundled`
/// that has not been freed, or NULL (a no-op).
#[no_mangle]
pub unsafe extern "C" fn privmeter_psl_free(psl: *mut PrivmeterPsl) {
    if !psl.is_null() {
        drop(unsafe { Box::from_raw(psl) });
    }
}

/// Write the registrable domain (eTLD+1) of `host` into `buf`. Returns
/// `NoDomain` when the host is a public suffix, an IP literal or invalid.
///
/// # Safety
/// `psl` must be a live handle; `host` NUL-terminated; `buf` writable for
/// `buf_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn privmeter_registrable_domain(
    psl: *const PrivmeterPsl,
    host: *const c_char,
    buf: *mut c_char,
    buf_len: usize,
) -> PrivmeterStatus {
    if psl.is_null() {
        set_error("null psl handle");
        return PrivmeterStatus::NullArgument;
    }
    let host = match unsafe { cstr_arg(host) } {
        Ok(h) => h,
        Err(status) => return status,
    };
    let rules = unsafe { &(*psl).0 };
    match rules.registrable_domain(host) {
        Some(rd) => copy_to_buffer(rd.as_str(), buf, buf_len),
        None => {
            set_error(format!("no registrable domain for {host:?}"));
            PrivmeterStatus::NoDomain
        }
    }
}

/// Classify a request against a visited site: `*out` is set to true for a
/// third-party request.
///
/// # Safety
/// `psl` must be a live handle; both hosts NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn privmeter_is_third_party(
    psl: *const PrivmeterPsl,
    request_host: *const c_char,
    site_host: *const c_char,
    out: *mut bool,
) -> PrivmeterStatus {
    if psl.is_null() || out.is_null() {
        set_error("null argument");
        return PrivmeterStatus::NullArgument;
    }
    let request_host = match unsafe { cstr_arg(request_host) } {
        Ok(h) => h,
        Err(status) => return status,
    };
    let site_host = match unsafe { cstr_arg(site_host) } {
        Ok(h) => h,
        Err(status) => return status,
    };
    let rules = unsafe { &(*psl).0 };
    unsafe { *out = rules.classify_party(request_host, site_host).is_third() };
    PrivmeterStatus::Ok
}

/// Two-sample KS test over `a[0..n]` and `b[0..m]`.
///
/// # Safety
/// `a` and `b` must point to `n` and `m` readable doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn privmeter_ks_two_sample(
    a: *const f64,
    n: usize,
    b: *const f64,
    m: usize,
    alpha: f64,
    out: *mut PrivmeterKsResult,
) -> PrivmeterStatus {
    if a.is_null() || b.is_null() || out.is_null() {
        set_error("null argument");
        return PrivmeterStatus::NullArgument;
    }
    let a = unsafe { std::slice::from_raw_parts(a, n) };
    let b = unsafe { std::slice::from_raw_parts(b, m) };
    match stats::ks_two_sample(a, b, alpha) {
        Ok(result) => {
            unsafe {
                *out = PrivmeterKsResult {
                    d_statistic: result.d_statistic,
                    p_value: result.p_value,
                    n: result.n,
                    m: result.m,
                    same_distribution: result.same_distribution,
                };
            }
            PrivmeterStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Relative standard error of the mean of `samples[0..n]`.
///
/// # Safety
/// `samples` must point to `n` readable doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn privmeter_relative_standard_error(
    samples: *const f64,
    n: usize,
    out: *mut f64,
) -> PrivmeterStatus {
    if samples.is_null() || out.is_null() {
        set_error("null argument");
        return PrivmeterStatus::NullArgument;
    }
    let samples = unsafe { std::slice::from_raw_parts(samples, n) };
    match stats::relative_standard_error(samples) {
        Ok(rse) => {
            unsafe { *out = rse };
            PrivmeterStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Filter a bare crawl log through every blocker in a roster file and write
/// the protected log (same behavior as `privmeter simulate`).
///
/// # Safety
/// `psl` must be a live handle; all paths NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn privmeter_simulate_file(
    psl: *const PrivmeterPsl,
    bare_path: *const c_char,
    roster_path: *const c_char,
    out_path: *const c_char,
) -> PrivmeterStatus {
    if psl.is_null() {
        set_error("null psl handle");
        return PrivmeterStatus::NullArgument;
    }
    let bare_path = match unsafe { cstr_arg(bare_path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    let roster_path = match unsafe { cstr_arg(roster_path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    let out_path = match unsafe { cstr_arg(out_path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    let rules = unsafe { &(*psl).0 };
    match simulate_file(rules, bare_path, roster_path, out_path) {
        Ok(()) => PrivmeterStatus::Ok,
        Err(err) => fail(err),
    }
}

fn simulate_file(
    rules: &SuffixRules,
    bare_path: &str,
    roster_path: &str,
    out_path: &str,
) -> Result<(), Error> {
    let mut bare = model::read_crawl_log(Path::new(bare_path))?;
    bare.sort_by(|a, b| (&a.config_id, a.run_index).cmp(&(&b.config_id, b.run_index)));
    if bare.is_empty() {
        return Err(Error::InvalidInput(format!("{bare_path}: no runs")));
    }
    let mut hasher = sha2::Sha256::new();
    let roster = report::load_roster(Path::new(roster_path), &mut hasher)?;
    let mut output = Vec::new();
    for entry in &roster {
        let mut spec = entry.spec.clone();
        if spec.heuristic.is_some() && entry.training_passes > 0 {
            spec = blocker::train_heuristic(&spec, &bare[0], entry.training_passes, rules)?;
        }
        for run in &bare {
            output.push(blocker::apply_blocker(&mut spec, run, rules));
        }
    }
    model::write_crawl_log(&output, Path::new(out_path))
}

/// Compute the metrics table of a crawl log and write it as CSV (same
/// behavior as `privmeter metrics`).
///
/// # Safety
/// `psl` must be a live handle; both paths NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn privmeter_metrics_csv_file(
    psl: *const PrivmeterPsl,
    log_path: *const c_char,
    out_path: *const c_char,
) -> PrivmeterStatus {
    if psl.is_null() {
        set_error("null psl handle");
        return PrivmeterStatus::NullArgument;
    }
    let log_path = match unsafe { cstr_arg(log_path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    let out_path = match unsafe { cstr_arg(out_path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    let rules = unsafe { &(*psl).0 };
    let result = model::read_crawl_log(Path::new(log_path))
        .and_then(|runs| MetricTable::build(&runs, rules))
        .and_then(|table| privmeter::metrics::write_metrics_csv(&table, Path::new(out_path), None));
    match result {
        Ok(()) => PrivmeterStatus::Ok,
        Err(err) => fail(err),
    }
}

//! C interface to `fusion-core`.
//!
//! Problems and reports are opaque handles created and released by this
//! library. Every fallible call returns a [`FusionStatus`]; on failure the
//! message is available from [`fusion_last_error`] on the same thread.
//! Strings returned as `char *` are owned by the caller and must be
//! released with [`fusion_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fusion_core::pipeline::{analyze, PipelineOptions, PipelineReport, Verdict};
use fusion_core::problem::Problem;
use fusion_core::pruning::prune_all;
use fusion_core::SearchBudget;

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    AnalysisError = 4,
    Panic = 5,
}

/// Outcome of an identification run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionVerdict {
    Identified = 0,
    /// Not identifiable by the implemented rule set.
    NotIdentified = 1,
    Undetermined = 2,
}

/// Options for [`fusion_identify`]. Obtain defaults from
/// [`fusion_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FusionOptions {
    pub prune: bool,
    /// Choose transit clusters automatically.
    pub cluster: bool,
    pub max_terms: usize,
    pub max_depth: usize,
}

/// A parsed problem file.
pub struct FusionProblem(Problem);

/// The result of [`fusion_identify`].
pub struct FusionReport(PipelineReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn guard(f: impl FnOnce() -> Result<(), (FusionStatus, String)>) -> FusionStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FusionStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FusionStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, (FusionStatus, String)> {
    if s.is_null() {
        return Err((FusionStatus::NullPointer, "null string".into()));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| (FusionStatus::InvalidUtf8, e.to_string()))
}

fn to_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn fusion_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fusion_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn fusion_options_default() -> FusionOptions {
    let b = SearchBudget::default();
    FusionOptions {
        prune: true,
        cluster: true,
        max_terms: b.max_terms,
        max_depth: b.max_depth,
    }
}

/// Parses a problem file held in `text` and stores a new handle in `out`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fusion_problem_parse(text: *const c_char, out: *mut *mut FusionProblem) -> FusionStatus {
    guard(|| {
        if out.is_null() {
            return Err((FusionStatus::NullPointer, "null output pointer".into()));
        }
        *out = ptr::null_mut();
        let text = read_str(text)?;
        let p = Problem::parse(text).map_err(|e| (FusionStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(FusionProblem(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`fusion_problem_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fusion_problem_free(p: *mut FusionProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Runs the pruning stage and stores its JSON report in `out`.
///
/// # Safety
/// `p` must be a live problem handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fusion_prune_json(p: *const FusionProblem, out: *mut *mut c_char) -> FusionStatus {
    guard(|| {
        if p.is_null() || out.is_null() {
            return Err((FusionStatus::NullPointer, "null argument".into()));
        }
        *out = ptr::null_mut();
        let pr = &(*p).0;
        let pruned =
            prune_all(&pr.graph, &pr.inputs, &pr.query).map_err(|e| (FusionStatus::AnalysisError, e.to_string()))?;
        let json = serde_json::to_string(&pruned).map_err(|e| (FusionStatus::AnalysisError, e.to_string()))?;
        *out = to_c(json);
        Ok(())
    })
}

/// Identifies the query of `p`. `options` may be null for defaults.
///
/// # Safety
/// `p` must be a live problem handle, `options` null or valid, and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fusion_identify(
    p: *const FusionProblem,
    options: *const FusionOptions,
    out: *mut *mut FusionReport,
) -> FusionStatus {
    guard(|| {
        if p.is_null() || out.is_null() {
            return Err((FusionStatus::NullPointer, "null argument".into()));
        }
        *out = ptr::null_mut();
        let o = if options.is_null() {
            fusion_options_default()
        } else {
            *options
        };
        let opts = PipelineOptions {
            prune: o.prune,
            cluster: o.cluster,
            budget: SearchBudget {
                max_terms: o.max_terms,
                max_depth: o.max_depth,
                time_limit: None,
            },
            ..PipelineOptions::default()
        };
        let pr = &(*p).0;
        let report = analyze(&pr.graph, &pr.inputs, &pr.query, &opts)
            .map_err(|e| (FusionStatus::AnalysisError, e.to_string()))?;
        *out = Box::into_raw(Box::new(FusionReport(report)));
        Ok(())
    })
}

/// # Safety
/// `r` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn fusion_report_verdict(r: *const FusionReport) -> FusionVerdict {
    if r.is_null() {
        return FusionVerdict::Undetermined;
    }
    match (*r).0.verdict {
        Verdict::Identified => FusionVerdict::Identified,
        Verdict::NotIdentified => FusionVerdict::NotIdentified,
        Verdict::Undetermined => FusionVerdict::Undetermined,
    }
}

/// Identifying functional over the original inputs, or null when the
/// query was not identified.
///
/// # Safety
/// `r` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn fusion_report_expression(r: *const FusionReport) -> *mut c_char {
    if r.is_null() {
        return ptr::null_mut();
    }
    (*r).0.expression.clone().map_or(ptr::null_mut(), to_c)
}

/// Full report as JSON.
///
/// # Safety
/// `r` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn fusion_report_json(r: *const FusionReport) -> *mut c_char {
    if r.is_null() {
        return ptr::null_mut();
    }
    serde_json::to_string(&(*r).0).map_or(ptr::null_mut(), to_c)
}

/// # Safety
/// `r` must come from [`fusion_identify`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fusion_report_free(r: *mut FusionReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `s` must be a string returned by this library, or null.
#[no_mangle]
pub unsafe extern "C" fn fusion_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

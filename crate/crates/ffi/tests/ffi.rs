use std::ffi::{CStr, CString};
use std::ptr;

use fusion_ffi::*;

const FRONT_DOOR: &str = "[graph]\nX -> M\nM -> Y\nX <-> Y\n[inputs]\np(X,M,Y)\n[query]\np(Y|do(X))\n";
const BOW: &str = "[graph]\nX -> Y\nX <-> Y\n[inputs]\np(X,Y)\n[query]\np(Y|do(X))\n";

fn parse(text: &str) -> (FusionStatus, *mut FusionProblem) {
    let c = CString::new(text).unwrap();
    let mut p = ptr::null_mut();
    let s = unsafe { fusion_problem_parse(c.as_ptr(), &mut p) };
    (s, p)
}

fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { fusion_string_free(s) };
    out
}

#[test]
fn identifies_front_door() {
    let (s, p) = parse(FRONT_DOOR);
    assert_eq!(s, FusionStatus::Ok);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { fusion_identify(p, ptr::null(), &mut r) }, FusionStatus::Ok);
    assert_eq!(unsafe { fusion_report_verdict(r) }, FusionVerdict::Identified);
    let expr = take(unsafe { fusion_report_expression(r) });
    assert!(expr.contains("p(Y|"), "{expr}");
    let json: serde_json::Value = serde_json::from_str(&take(unsafe { fusion_report_json(r) })).unwrap();
    assert_eq!(json["verdict"], "identified");
    unsafe {
        fusion_report_free(r);
        fusion_problem_free(p);
    }
}

#[test]
fn negative_verdict_has_no_expression() {
    let (_, p) = parse(BOW);
    let opts = FusionOptions {
        cluster: false,
        ..fusion_options_default()
    };
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { fusion_identify(p, &opts, &mut r) }, FusionStatus::Ok);
    assert_eq!(unsafe { fusion_report_verdict(r) }, FusionVerdict::NotIdentified);
    assert!(unsafe { fusion_report_expression(r) }.is_null());
    unsafe {
        fusion_report_free(r);
        fusion_problem_free(p);
    }
}

#[test]
fn parse_errors_set_last_error() {
    let (s, p) = parse("[graph]\nX -> Y\nY -> X\n[inputs]\np(X)\n[query]\np(Y|do(X))\n");
    assert_eq!(s, FusionStatus::ParseError);
    assert!(p.is_null());
    let msg = unsafe { CStr::from_ptr(fusion_last_error()) }.to_str().unwrap();
    assert!(msg.contains("cycle"), "{msg}");
}

#[test]
fn null_arguments_are_rejected() {
    let mut p = ptr::null_mut();
    assert_eq!(
        unsafe { fusion_problem_parse(ptr::null(), &mut p) },
        FusionStatus::NullPointer
    );
    let mut r = ptr::null_mut();
    assert_eq!(
        unsafe { fusion_identify(ptr::null(), ptr::null(), &mut r) },
        FusionStatus::NullPointer
    );
    unsafe {
        fusion_problem_free(ptr::null_mut());
        fusion_report_free(ptr::null_mut());
        fusion_string_free(ptr::null_mut());
    }
}

#[test]
fn prune_report_is_json() {
    let (_, p) = parse(FRONT_DOOR);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { fusion_prune_json(p, &mut out) }, FusionStatus::Ok);
    let json: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert!(json["steps"].is_array());
    unsafe { fusion_problem_free(p) };
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(fusion_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

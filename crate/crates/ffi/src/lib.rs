// SPDX-License-Identifier: Apache-2.0

//! C ABI over the riskprobe library.
//!
//! Every function returns an [`RpStatus`]; results come back through out
//! pointers. On failure, [`rp_last_error_message`] describes the error for
//! the calling thread. Handles are opaque and must be released with their
//! matching `_free` function.
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the stated length. Null
//! pointers are reported as `NullArgument`; anything else invalid is
//! undefined behaviour, as with any C API. Strings are NUL-terminated UTF-8.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use riskprobe::access::{attacks_applicable, make_threat_model, Access, AttackKind, Auxiliary};
use riskprobe::defenses::{clip_gradient, gaussian_sigma_single, zcdp_sigma_for_budget, ZcdpAccountant};
use riskprobe::eval::metrics;
use riskprobe::pipeline::{run_assessment, RunConfig};
use riskprobe::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RpStatus {
    Ok = 0,
    ConfigError = 2,
    CapabilityError = 3,
    RuntimeError = 4,
    NullArgument = 5,
    InvalidArgument = 6,
    Panic = 7,
}

pub const RP_ACCESS_BLACK_BOX: u32 = 0;
pub const RP_ACCESS_WHITE_BOX: u32 = 1;

pub const RP_AUX_PARTIAL: u32 = 0;
pub const RP_AUX_SHADOW: u32 = 1;
pub const RP_AUX_NONE: u32 = 2;

pub const RP_ATTACK_MEMINF: u32 = 1;
pub const RP_ATTACK_MODINV: u32 = 2;
pub const RP_ATTACK_ATTRINF: u32 = 4;
pub const RP_ATTACK_MODSTEAL: u32 = 8;

/// Opaque zCDP accountant.
pub struct RpAccountant {
    inner: ZcdpAccountant,
}

/// Opaque handle to a finished assessment.
pub struct RpReport {
    json: CString,
    path: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(e: Error) -> RpStatus {
    set_error(format!("{}: {e}", e.kind()));
    match e.exit_code() {
        2 => RpStatus::ConfigError,
        3 => RpStatus::CapabilityError,
        _ => RpStatus::RuntimeError,
    }
}

fn guard(f: impl FnOnce() -> RpStatus) -> RpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == RpStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => {
            set_error("panic inside riskprobe");
            RpStatus::Panic
        }
    }
}

macro_rules! nonnull {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            set_error(concat!("null argument: ", stringify!($p)));
            return RpStatus::NullArgument;
        })+
    };
}

unsafe fn slice<'a, T>(p: *const T, n: usize) -> &'a [T] {
    if n == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(p, n)
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, RpStatus> {
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        RpStatus::InvalidArgument
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Bit mask (`RP_ATTACK_*`) of the attacks applicable under a threat model.
/// Black-box access without auxiliary data is rejected as a config error.
#[no_mangle]
pub unsafe extern "C" fn rp_applicable_attacks(access: u32, auxiliary: u32, out_mask: *mut u32) -> RpStatus {
    nonnull!(out_mask);
    guard(|| {
        let access = match access {
            RP_ACCESS_BLACK_BOX => Access::BlackBox,
            RP_ACCESS_WHITE_BOX => Access::WhiteBox,
            _ => {
                set_error("unknown access level");
                return RpStatus::InvalidArgument;
            }
        };
        let aux = match auxiliary {
            RP_AUX_PARTIAL => Auxiliary::Partial,
            RP_AUX_SHADOW => Auxiliary::Shadow,
            RP_AUX_NONE => Auxiliary::None,
            _ => {
                set_error("unknown auxiliary knowledge");
                return RpStatus::InvalidArgument;
            }
        };
        match make_threat_model(access, aux) {
            Ok(tm) => {
                *out_mask = attacks_applicable(tm)
                    .into_iter()
                    .map(|a| match a {
                        AttackKind::MemInf => RP_ATTACK_MEMINF,
                        AttackKind::ModInv => RP_ATTACK_MODINV,
                        AttackKind::AttrInf => RP_ATTACK_ATTRINF,
                        AttackKind::ModSteal => RP_ATTACK_MODSTEAL,
                    })
                    .fold(0, |m, b| m | b);
                RpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Per-step noise multiplier so that `steps` Gaussian steps compose to
/// (`epsilon`, `delta`)-DP under zCDP.
#[no_mangle]
pub unsafe extern "C" fn rp_zcdp_sigma_for_budget(epsilon: f64, delta: f64, steps: u64, out_sigma: *mut f64) -> RpStatus {
    nonnull!(out_sigma);
    guard(|| match zcdp_sigma_for_budget(epsilon, delta, steps) {
        Ok(s) => {
            *out_sigma = s;
            RpStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Classic single-release Gaussian mechanism noise multiplier.
#[no_mangle]
pub unsafe extern "C" fn rp_gaussian_sigma_single(epsilon: f64, delta: f64, out_sigma: *mut f64) -> RpStatus {
    nonnull!(out_sigma);
    guard(|| match gaussian_sigma_single(epsilon, delta) {
        Ok(s) => {
            *out_sigma = s;
            RpStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Writes `g / max(1, |g| / clip)` to `out` (both of length `len`).
#[no_mangle]
pub unsafe extern "C" fn rp_clip_gradient(g: *const f32, len: usize, clip: f32, out: *mut f32) -> RpStatus {
    if len > 0 {
        nonnull!(g, out);
    }
    guard(|| {
        if !(clip > 0.0 && clip.is_finite()) {
            set_error("clip must be positive and finite");
            return RpStatus::InvalidArgument;
        }
        let clipped = clip_gradient(slice(g, len), clip);
        if len > 0 {
            ptr::copy_nonoverlapping(clipped.as_ptr(), out, len);
        }
        RpStatus::Ok
    })
}

/// ROC AUC of `scores` against 0/1 `labels`.
#[no_mangle]
pub unsafe extern "C" fn rp_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> RpStatus {
    nonnull!(scores, labels, out);
    guard(|| {
        let labels: Vec<usize> = slice(labels, n).iter().map(|&l| l as usize).collect();
        match metrics::auc(slice(scores, n), &labels) {
            Ok(v) => {
                *out = v;
                RpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn rp_pearson(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> RpStatus {
    nonnull!(x, y, out);
    guard(|| match metrics::pearson(slice(x, n), slice(y, n)) {
        Ok(v) => {
            *out = v;
            RpStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Fraction of positions where the two label sequences agree.
#[no_mangle]
pub unsafe extern "C" fn rp_agreement(a: *const u32, b: *const u32, n: usize, out: *mut f64) -> RpStatus {
    nonnull!(a, b, out);
    guard(|| {
        let a: Vec<usize> = slice(a, n).iter().map(|&v| v as usize).collect();
        let b: Vec<usize> = slice(b, n).iter().map(|&v| v as usize).collect();
        match metrics::agreement_rate(&a, &b) {
            Ok(v) => {
                *out = v;
                RpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn rp_accountant_new(delta: f64, out: *mut *mut RpAccountant) -> RpStatus {
    nonnull!(out);
    guard(|| match ZcdpAccountant::new(delta) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(RpAccountant { inner }));
            RpStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Records one Gaussian step with noise multiplier `sigma` and clip norm `clip`.
#[no_mangle]
pub unsafe extern "C" fn rp_accountant_record(acc: *mut RpAccountant, sigma: f64, clip: f64) -> RpStatus {
    nonnull!(acc);
    guard(|| {
        if !(sigma >= 0.0) {
            set_error("sigma must be non-negative");
            return RpStatus::InvalidArgument;
        }
        (*acc).inner.record(sigma, clip, String::new());
        RpStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn rp_accountant_epsilon(acc: *const RpAccountant, out: *mut f64) -> RpStatus {
    nonnull!(acc, out);
    guard(|| {
        *out = (*acc).inner.epsilon();
        RpStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn rp_accountant_rho(acc: *const RpAccountant, out: *mut f64) -> RpStatus {
    nonnull!(acc, out);
    guard(|| {
        *out = (*acc).inner.rho();
        RpStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn rp_accountant_steps(acc: *const RpAccountant, out: *mut u64) -> RpStatus {
    nonnull!(acc, out);
    guard(|| {
        *out = (*acc).inner.steps();
        RpStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn rp_accountant_free(acc: *mut RpAccountant) {
    if !acc.is_null() {
        drop(Box::from_raw(acc));
    }
}

/// Runs a full assessment from a YAML config and writes artifacts under
/// `out_dir`. On success `*out` owns the report.
#[no_mangle]
pub unsafe extern "C" fn rp_run_assessment(
    config_yaml: *const c_char,
    out_dir: *const c_char,
    out: *mut *mut RpReport,
) -> RpStatus {
    nonnull!(config_yaml, out_dir, out);
    guard(|| {
        let (yaml, dir) = match (str_arg(config_yaml), str_arg(out_dir)) {
            (Ok(y), Ok(d)) => (y, d),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let result = RunConfig::from_yaml(yaml).and_then(|cfg| run_assessment(&cfg, Path::new(dir)));
        match result.and_then(|a| Ok((a.report.to_json()?, a.report_path))) {
            Ok((json, path)) => {
                let report = RpReport {
                    json: CString::new(json).unwrap_or_default(),
                    path: CString::new(path.to_string_lossy().into_owned()).unwrap_or_default(),
                };
                *out = Box::into_raw(Box::new(report));
                RpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// The report as JSON; owned by the handle.
#[no_mangle]
pub unsafe extern "C" fn rp_report_json(report: *const RpReport) -> *const c_char {
    if report.is_null() {
        return ptr::null();
    }
    (*report).json.as_ptr()
}

/// Path of `report.json` on disk; owned by the handle.
#[no_mangle]
pub unsafe extern "C" fn rp_report_path(report: *const RpReport) -> *const c_char {
    if report.is_null() {
        return ptr::null();
    }
    (*report).path.as_ptr()
}

#[no_mangle]
pub unsafe extern "C" fn rp_report_free(report: *mut RpReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

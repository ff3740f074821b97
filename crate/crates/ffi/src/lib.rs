//! C ABI over a finished run directory: open a trained model, score pairs,
//! and rank items for a user. Also exposes the ranking metrics.
//!
//! Every function returns a [`GnpStatus`]; on failure a description is
//! available from [`gnp_last_error`] on the same thread. Panics never cross
//! the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gnp::eval::{auc, recall_precision_ndcg_at_k};
use gnp::train::Variant;
use gnp::workdir::Recommender;
use gnp::GnpError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GnpStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    Config = 3,
    /// Missing, unreadable or inconsistent files.
    Data = 4,
    Numerical = 5,
    /// Index or id outside the model, or an invalid size argument.
    OutOfRange = 6,
    /// Internal failure; the handle should be freed.
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GnpVariant {
    Gnp = 0,
    DropoutNet = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GnpRankMetrics {
    pub recall: f64,
    pub precision: f64,
    pub ndcg: f64,
}

/// Opaque handle to a loaded model.
pub struct GnpModel {
    inner: Recommender,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: GnpStatus, msg: impl Into<String>) -> GnpStatus {
    set_error(msg.into());
    status
}

fn from_error(e: GnpError) -> GnpStatus {
    let status = match e {
        GnpError::Config(_) => GnpStatus::Config,
        GnpError::Numerical(_) => GnpStatus::Numerical,
        GnpError::Invalid(_) => GnpStatus::OutOfRange,
        _ => GnpStatus::Data,
    };
    fail(status, e.to_string())
}

fn guard(body: impl FnOnce() -> GnpStatus) -> GnpStatus {
    catch_unwind(AssertUnwindSafe(body))
        .unwrap_or_else(|_| fail(GnpStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, GnpStatus> {
    if p.is_null() {
        return Err(fail(GnpStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(GnpStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], GnpStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(GnpStatus::NullArgument, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($p:expr) => {
        if $p.is_null() {
            return fail(GnpStatus::NullArgument, concat!(stringify!($p), " is null"));
        }
    };
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next failing call on this thread.
#[no_mangle]
pub extern "C" fn gnp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gnp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads the model of `variant` trained in `workdir`. On success `*out`
/// owns a handle to release with [`gnp_model_free`].
///
/// # Safety
/// `workdir` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gnp_model_open(
    workdir: *const c_char,
    variant: GnpVariant,
    out: *mut *mut GnpModel,
) -> GnpStatus {
    guard(|| {
        non_null!(out);
        *out = ptr::null_mut();
        let dir = try_status!(str_arg(workdir, "workdir"));
        let v = match variant {
            GnpVariant::Gnp => Variant::Gnp,
            GnpVariant::DropoutNet => Variant::DropoutNet,
        };
        match Recommender::open(Path::new(dir), v) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(GnpModel { inner }));
                GnpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `model` must be null or a handle from [`gnp_model_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gnp_model_free(model: *mut GnpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gnp_model_n_users(model: *const GnpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_users())
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gnp_model_n_items(model: *const GnpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_items())
}

/// Dense index of a user given its id in the input data.
///
/// # Safety
/// `model` must be a live handle, `original` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gnp_model_user_index(
    model: *const GnpModel,
    original: *const c_char,
    out: *mut u32,
) -> GnpStatus {
    guard(|| {
        non_null!(model);
        non_null!(out);
        let id = try_status!(str_arg(original, "original"));
        match (*model).inner.user_index(id) {
            Some(u) => {
                *out = u;
                GnpStatus::Ok
            }
            None => fail(GnpStatus::OutOfRange, format!("unknown user `{id}`")),
        }
    })
}

/// Dense index of an item given its id in the input data.
///
/// # Safety
/// `model` must be a live handle, `original` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gnp_model_item_index(
    model: *const GnpModel,
    original: *const c_char,
    out: *mut u32,
) -> GnpStatus {
    guard(|| {
        non_null!(model);
        non_null!(out);
        let id = try_status!(str_arg(original, "original"));
        match (*model).inner.item_index(id) {
            Some(i) => {
                *out = i;
                GnpStatus::Ok
            }
            None => fail(GnpStatus::OutOfRange, format!("unknown item `{id}`")),
        }
    })
}

/// Score of dense `(user, item)`: the warm scorer when both are warm and
/// the model is GNP, the patching scorer otherwise.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gnp_model_score(
    model: *const GnpModel,
    user: u32,
    item: u32,
    out: *mut f64,
) -> GnpStatus {
    guard(|| {
        non_null!(model);
        non_null!(out);
        match (*model).inner.score(user, item) {
            Ok(s) => {
                *out = s;
                GnpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Writes up to `k` best items for `user` into `items` and `scores`
/// (each with room for `k` values) in rank order, and the count to
/// `*n_out`. With `exclude_seen`, training and validation items of the
/// user are skipped. `scores` may be null.
///
/// # Safety
/// `model` must be a live handle; `items` must hold `k` values, `scores`
/// be null or hold `k` values; `n_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gnp_model_recommend(
    model: *const GnpModel,
    user: u32,
    k: usize,
    exclude_seen: bool,
    items: *mut u32,
    scores: *mut f64,
    n_out: *mut usize,
) -> GnpStatus {
    guard(|| {
        non_null!(model);
        non_null!(n_out);
        *n_out = 0;
        if k == 0 {
            return GnpStatus::Ok;
        }
        non_null!(items);
        let ranked = match (*model).inner.recommend(user, k, exclude_seen) {
            Ok(r) => r,
            Err(e) => return from_error(e),
        };
        for (j, (i, s)) in ranked.iter().enumerate() {
            *items.add(j) = *i;
            if !scores.is_null() {
                *scores.add(j) = *s;
            }
        }
        *n_out = ranked.len();
        GnpStatus::Ok
    })
}

/// Recall, precision and NDCG at `k` of a ranked list against a relevant
/// set. `relevant` needs no particular order; duplicates are ignored.
///
/// # Safety
/// `ranked` must hold `n_ranked` values, `relevant` `n_relevant` values;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gnp_metrics_at_k(
    ranked: *const u32,
    n_ranked: usize,
    relevant: *const u32,
    n_relevant: usize,
    k: usize,
    out: *mut GnpRankMetrics,
) -> GnpStatus {
    guard(|| {
        non_null!(out);
        let ranked = try_status!(slice_arg(ranked, n_ranked, "ranked"));
        let mut rel = try_status!(slice_arg(relevant, n_relevant, "relevant")).to_vec();
        rel.sort_unstable();
        rel.dedup();
        match recall_precision_ndcg_at_k(ranked, &rel, k) {
            Ok(m) => {
                *out = GnpRankMetrics {
                    recall: m.recall,
                    precision: m.precision,
                    ndcg: m.ndcg,
                };
                GnpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Area under the ROC curve of `n` scores with nonzero `labels` marking
/// positives. Ties count one half. Needs both classes present.
///
/// # Safety
/// `scores` and `labels` must each hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gnp_auc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> GnpStatus {
    guard(|| {
        non_null!(out);
        let s = try_status!(slice_arg(scores, n, "scores"));
        let l = try_status!(slice_arg(labels, n, "labels"));
        let pairs: Vec<(f64, bool)> = s.iter().zip(l).map(|(&x, &y)| (x, y != 0)).collect();
        match auc(&pairs) {
            Ok(a) => {
                *out = a;
                GnpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

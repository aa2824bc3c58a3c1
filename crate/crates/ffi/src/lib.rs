//! C ABI over the `rtwl` engine.
//!
//! Every fallible call returns an [`RtwlStatus`]. On failure the message is
//! kept per thread and can be read with [`rtwl_last_error`].

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rtwl::covering::{
    find_star_witness, star_holds_for, Dims, EscapeMode, PsiTable, WitnessSearch,
};
use rtwl::reductions::cascade_backward;
use rtwl::search::{verify_nonreduction, SearchConfig};
use rtwl::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtwlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Precondition = 4,
    Budget = 5,
    NotFound = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque handle to a coloring table. Free with [`rtwl_psi_free`].
pub struct RtwlPsiTable {
    inner: PsiTable,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> RtwlStatus {
    match err {
        Error::Precondition(_) => RtwlStatus::Precondition,
        Error::Budget { .. } => RtwlStatus::Budget,
        _ => RtwlStatus::InvalidInput,
    }
}

fn fail(status: RtwlStatus, msg: impl Into<String>) -> RtwlStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> RtwlStatus) -> RtwlStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RtwlStatus::Panic, "panic inside rtwl"),
    }
}

macro_rules! try_rtwl {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return fail(status_of(&err), err.to_string()),
        }
    };
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, len))
    }
}

fn mode(strict: bool) -> EscapeMode {
    if strict {
        EscapeMode::Strict
    } else {
        EscapeMode::Inclusive
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn rtwl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a whitespace grid (rows = first coordinate, `.` = undefined).
/// `n_colors == 0` takes the largest entry plus one.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rtwl_psi_from_grid(
    text: *const c_char,
    n_colors: u32,
    out: *mut *mut RtwlPsiTable,
) -> RtwlStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return fail(RtwlStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(text).to_str() else {
            return fail(RtwlStatus::InvalidUtf8, "grid text is not UTF-8");
        };
        let n = (n_colors > 0).then_some(n_colors);
        let psi = try_rtwl!(PsiTable::from_grid_text(text, n));
        *out = Box::into_raw(Box::new(RtwlPsiTable { inner: psi }));
        RtwlStatus::Ok
    })
}

/// # Safety
/// `psi` must come from [`rtwl_psi_from_grid`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rtwl_psi_free(psi: *mut RtwlPsiTable) {
    if !psi.is_null() {
        drop(Box::from_raw(psi));
    }
}

/// Number of colors, or 0 for NULL.
///
/// # Safety
/// `psi` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rtwl_psi_n_colors(psi: *const RtwlPsiTable) -> u32 {
    psi.as_ref().map_or(0, |p| p.inner.n_colors())
}

/// Number of cells, or 0 for NULL.
///
/// # Safety
/// `psi` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rtwl_psi_cells(psi: *const RtwlPsiTable) -> usize {
    psi.as_ref().map_or(0, |p| p.inner.dims().cells())
}

/// Whether the color set satisfies (∗) for the table.
///
/// # Safety
/// `colors` must point to `len` values, `psi` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rtwl_star_holds_for(
    psi: *const RtwlPsiTable,
    colors: *const u32,
    len: usize,
    strict: bool,
    out: *mut bool,
) -> RtwlStatus {
    guard(|| {
        let (Some(psi), Some(colors)) = (psi.as_ref(), slice(colors, len)) else {
            return fail(RtwlStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(RtwlStatus::NullPointer, "null argument");
        }
        let set: BTreeSet<u32> = colors.iter().copied().collect();
        *out = try_rtwl!(star_holds_for(&psi.inner, &set, mode(strict)));
        RtwlStatus::Ok
    })
}

/// Searches color sets up to `max_size` for a (∗)-witness. On success the
/// colors go to `out_colors` (capacity `cap`) and their count to `out_len`.
/// Returns `NotFound` when no witness exists up to that size and `Budget`
/// when `budget` search nodes run out.
///
/// # Safety
/// `psi` must be live, `out_colors` must have room for `cap` values and
/// `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtwl_find_star_witness(
    psi: *const RtwlPsiTable,
    max_size: usize,
    strict: bool,
    budget: u64,
    out_colors: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> RtwlStatus {
    guard(|| {
        let Some(psi) = psi.as_ref() else {
            return fail(RtwlStatus::NullPointer, "null table");
        };
        if out_len.is_null() || (cap > 0 && out_colors.is_null()) {
            return fail(RtwlStatus::NullPointer, "null output");
        }
        match find_star_witness(&psi.inner, max_size, mode(strict), budget) {
            WitnessSearch::Found { witness } => {
                let colors = witness.colors();
                *out_len = colors.len();
                if colors.len() > cap {
                    return fail(RtwlStatus::BufferTooSmall, "witness does not fit");
                }
                ptr::copy_nonoverlapping(colors.as_ptr(), out_colors, colors.len());
                RtwlStatus::Ok
            }
            WitnessSearch::NoneUpTo { max_size } => {
                *out_len = 0;
                fail(
                    RtwlStatus::NotFound,
                    format!("no witness up to size {max_size}"),
                )
            }
            WitnessSearch::BudgetExhausted { at_size } => {
                *out_len = 0;
                fail(
                    RtwlStatus::Budget,
                    format!("budget exhausted at size {at_size}"),
                )
            }
        }
    })
}

/// Runs the non-reducibility case split and writes the JSON report to
/// `out`. Release the string with [`rtwl_string_free`].
///
/// # Safety
/// `ks` must point to `arity` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtwl_verify_json(
    ks: *const u32,
    arity: usize,
    n_colors: u32,
    workers: usize,
    out: *mut *mut c_char,
) -> RtwlStatus {
    guard(|| {
        let Some(ks) = slice(ks, arity) else {
            return fail(RtwlStatus::NullPointer, "null dims");
        };
        if out.is_null() {
            return fail(RtwlStatus::NullPointer, "null output");
        }
        let dims = try_rtwl!(Dims::new(ks.to_vec()));
        let cfg = SearchConfig {
            workers: workers.max(1),
            ..SearchConfig::default()
        };
        let run = try_rtwl!(verify_nonreduction(&dims, n_colors, &cfg));
        let json = serde_json::to_string(&run.report).expect("report serializes");
        *out = CString::new(json).expect("JSON has no NUL").into_raw();
        RtwlStatus::Ok
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rtwl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Maps a tuple of solutions of the factors back to a cascade solution.
///
/// # Safety
/// `a` and `ks` must each point to `n` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtwl_cascade_backward(
    a: *const u32,
    ks: *const u32,
    n: usize,
    out: *mut u32,
) -> RtwlStatus {
    guard(|| {
        let (Some(a), Some(ks)) = (slice(a, n), slice(ks, n)) else {
            return fail(RtwlStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(RtwlStatus::NullPointer, "null output");
        }
        *out = try_rtwl!(cascade_backward(a, ks));
        RtwlStatus::Ok
    })
}

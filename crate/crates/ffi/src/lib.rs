//! C ABI over the semcand engine and metric kernels.
//!
//! Every function returns a [`SemcandStatus`] (or a value whose failure case
//! is documented) and never unwinds across the boundary. On failure the
//! message is available from [`semcand_last_error`] on the same thread.
//!
//! Strings handed out as `char *` are owned by the caller and released with
//! [`semcand_string_free`]. Strings returned as `const char *` are borrowed
//! from the handle they came from.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use semcand::engine::EngineError;
use semcand::eval::{mad, stat_sig_diff_pair, weighted_stat_sig_diff};
use semcand::{Engine, RankedCandidates, RetrieverTag};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemcandStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Snapshot missing, unreadable, corrupt or of another version.
    Snapshot = 3,
    UnknownSeed = 4,
    InvalidArgument = 5,
    BaselineUnavailable = 6,
    EmptyIndex = 7,
    /// The metric has no defined value for this input.
    Undefined = 8,
    Internal = 98,
    Panic = 99,
}

/// Loaded snapshot. Safe to share between threads for retrieval.
pub struct SemcandEngine {
    engine: Engine,
}

struct Item {
    ad_id: CString,
    score: SemcandScore,
}

/// Result of one retrieval, in rank order.
pub struct SemcandCandidates {
    items: Vec<Item>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemcandScore {
    pub final_score: f64,
    pub stage1_score: f64,
    pub stage2_score: f64,
    pub hop_count: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SemcandStatus, String);

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::UnknownSeed(_) => SemcandStatus::UnknownSeed,
            EngineError::EmptyIndex => SemcandStatus::EmptyIndex,
            EngineError::BaselineUnavailable => SemcandStatus::BaselineUnavailable,
            EngineError::InvalidK | EngineError::InvalidConfig(_) => SemcandStatus::InvalidArgument,
            EngineError::Snapshot(_) => SemcandStatus::Snapshot,
            _ => SemcandStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SemcandStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SemcandStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside semcand".into());
            SemcandStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SemcandStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(SemcandStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn engine_ref<'a>(e: *const SemcandEngine) -> Result<&'a Engine, Failure> {
    e.as_ref().map(|h| &h.engine).ok_or_else(|| null("engine"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| Failure(SemcandStatus::Internal, "string contains NUL".into()))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn tag(baseline: bool) -> RetrieverTag {
    if baseline {
        RetrieverTag::Baseline
    } else {
        RetrieverTag::Semantic
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn semcand_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next semcand call on the same thread.
#[no_mangle]
pub extern "C" fn semcand_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Opens a snapshot file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semcand_engine_open(path: *const c_char, out: *mut *mut SemcandEngine) -> SemcandStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let engine = Engine::load(path).map_err(|e| Failure(SemcandStatus::Snapshot, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(SemcandEngine { engine })))
    })
}

/// Releases an engine. NULL is ignored.
///
/// # Safety
/// `engine` must come from [`semcand_engine_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn semcand_engine_free(engine: *mut SemcandEngine) {
    if !engine.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(engine))));
    }
}

/// # Safety
/// `engine` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semcand_engine_ad_count(engine: *const SemcandEngine, out: *mut usize) -> SemcandStatus {
    guard(|| write_out(out, engine_ref(engine)?.len()))
}

/// Hex content hash of the snapshot. Free with [`semcand_string_free`].
///
/// # Safety
/// `engine` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semcand_engine_snapshot_hash(
    engine: *const SemcandEngine,
    out: *mut *mut c_char,
) -> SemcandStatus {
    guard(|| {
        let hash = owned_string(engine_ref(engine)?.snapshot_hash().to_string())?;
        write_out(out, hash)
    })
}

/// Top-`k` candidates for `seed_id`. `baseline` selects the title-overlap
/// retriever.
///
/// # Safety
/// `engine` must be a live handle, `seed_id` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn semcand_retrieve(
    engine: *const SemcandEngine,
    seed_id: *const c_char,
    k: usize,
    baseline: bool,
    out: *mut *mut SemcandCandidates,
) -> SemcandStatus {
    guard(|| {
        let engine = engine_ref(engine)?;
        let seed = str_arg(seed_id, "seed_id")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let ranked: RankedCandidates = engine.retrieve_with(tag(baseline), seed, k)?;
        let items = ranked
            .items
            .into_iter()
            .map(|c| {
                Ok(Item {
                    ad_id: CString::new(c.ad_id)
                        .map_err(|_| Failure(SemcandStatus::Internal, "ad id contains NUL".into()))?,
                    score: SemcandScore {
                        final_score: c.final_score,
                        stage1_score: c.stage1_score,
                        stage2_score: c.stage2_score,
                        hop_count: c.hop_count,
                    },
                })
            })
            .collect::<Result<Vec<_>, Failure>>()?;
        write_out(out, Box::into_raw(Box::new(SemcandCandidates { items })))
    })
}

/// Same as [`semcand_retrieve`] but returns the ranked list as JSON. Free
/// with [`semcand_string_free`].
///
/// # Safety
/// `engine` must be a live handle, `seed_id` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn semcand_retrieve_json(
    engine: *const SemcandEngine,
    seed_id: *const c_char,
    k: usize,
    baseline: bool,
    out: *mut *mut c_char,
) -> SemcandStatus {
    guard(|| {
        let engine = engine_ref(engine)?;
        let seed = str_arg(seed_id, "seed_id")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let ranked = engine.retrieve_with(tag(baseline), seed, k)?;
        let json = serde_json::to_string(&ranked).map_err(|e| Failure(SemcandStatus::Internal, e.to_string()))?;
        write_out(out, owned_string(json)?)
    })
}

/// Number of candidates; 0 for NULL.
///
/// # Safety
/// `c` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semcand_candidates_len(c: *const SemcandCandidates) -> usize {
    c.as_ref().map_or(0, |c| c.items.len())
}

/// Ad id at rank `i`, or NULL when out of range. Borrowed from `c`.
///
/// # Safety
/// `c` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semcand_candidates_ad_id(c: *const SemcandCandidates, i: usize) -> *const c_char {
    c.as_ref().and_then(|c| c.items.get(i)).map_or(ptr::null(), |item| item.ad_id.as_ptr())
}

/// # Safety
/// `c` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semcand_candidates_score(
    c: *const SemcandCandidates,
    i: usize,
    out: *mut SemcandScore,
) -> SemcandStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("candidates"))?;
        let item = c.items.get(i).ok_or_else(|| {
            Failure(SemcandStatus::InvalidArgument, format!("rank {i} out of range ({})", c.items.len()))
        })?;
        write_out(out, item.score)
    })
}

/// # Safety
/// `c` must come from [`semcand_retrieve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn semcand_candidates_free(c: *mut SemcandCandidates) {
    if !c.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(c))));
    }
}

/// # Safety
/// `s` must be NULL or a string handed out by this library.
#[no_mangle]
pub unsafe extern "C" fn semcand_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Significance exceedance for one pair. `Undefined` when both counts are 0.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semcand_stat_sig_diff_pair(conv_p: u64, conv_s: u64, out: *mut f64) -> SemcandStatus {
    guard(|| {
        let v = stat_sig_diff_pair(conv_p, conv_s)
            .ok_or_else(|| Failure(SemcandStatus::Undefined, "both conversion counts are zero".into()))?;
        write_out(out, v)
    })
}

/// Revenue-weighted mean of per-pair values (weights sqrt(revenue)).
///
/// # Safety
/// `values` and `revenues` must each point to `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn semcand_aggregate_stat_sig_diff(
    values: *const f64,
    revenues: *const f64,
    n: usize,
    out: *mut f64,
) -> SemcandStatus {
    guard(|| {
        let v = slice_arg(values, n, "values")?;
        let r = slice_arg(revenues, n, "revenues")?;
        let agg = weighted_stat_sig_diff(v.iter().copied().zip(r.iter().copied()))
            .map_err(|e| Failure(SemcandStatus::Undefined, e.to_string()))?;
        write_out(out, agg)
    })
}

/// Median absolute deviation of `n` values.
///
/// # Safety
/// `series` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semcand_mad(series: *const f64, n: usize, out: *mut f64) -> SemcandStatus {
    guard(|| {
        let s = slice_arg(series, n, "series")?;
        let m = mad(s).map_err(|e| Failure(SemcandStatus::Undefined, e.to_string()))?;
        write_out(out, m)
    })
}

//! C ABI over `checkin-reid`.
//!
//! Datasets and results cross the boundary as opaque handles that the caller
//! releases with the matching `*_free`. Every fallible call returns a
//! [`CrStatus`]; on failure the message is available from
//! [`cr_last_error`] on the same thread. Strings returned to the caller are
//! released with [`cr_string_free`]. Panics are caught and reported as
//! `CR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use checkin_reid::eval::{self, stats, AttackResult, ExperimentConfig};
use checkin_reid::features;
use checkin_reid::geo::{self, Point};
use checkin_reid::synth::{self, SynthSpec};
use checkin_reid::{exit, Dataset, Error, Taxonomy};

/// Status codes. Values 2..=4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Infeasible = 3,
    Io = 4,
    Panic = 5,
}

/// Opaque dataset handle.
pub struct CrDataset {
    inner: Dataset,
}

/// Opaque attack result handle.
pub struct CrResult {
    inner: AttackResult,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CrDatasetStats {
    pub checkins: u64,
    pub users: u64,
    pub venues: u64,
    /// Users per venue; NaN for a dataset without venues.
    pub users_per_venue: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: CrStatus, msg: impl Into<String>) -> CrStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> CrStatus {
    let status = match e.exit_code() {
        exit::INFEASIBLE => CrStatus::Infeasible,
        exit::IO => CrStatus::Io,
        _ => CrStatus::InvalidInput,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into `Panic` and clearing the last error on success.
fn guard(f: impl FnOnce() -> CrStatus) -> CrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(CrStatus::Ok) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CrStatus::Ok
        }
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(CrStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, CrStatus> {
    if p.is_null() {
        return Err(fail(CrStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CrStatus::InvalidInput, format!("{name} is not valid UTF-8")))
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
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(CrStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn cr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn cr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reads a dataset directory (check-ins, venues, lineage) written by the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cr_dataset_read_dir(
    path: *const c_char,
    out: *mut *mut CrDataset,
) -> CrStatus {
    guard(|| {
        non_null!(out);
        let path = try_status!(str_arg(path, "path"));
        match Dataset::read_dir(Path::new(path), &Taxonomy::default()) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(CrDataset { inner: ds }));
                CrStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// # Safety
/// `ds` must be a valid handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cr_dataset_write_dir(
    ds: *const CrDataset,
    path: *const c_char,
) -> CrStatus {
    guard(|| {
        non_null!(ds);
        let path = try_status!(str_arg(path, "path"));
        match (*ds).inner.write_dir(Path::new(path)) {
            Ok(()) => CrStatus::Ok,
            Err(e) => from_error(e.into()),
        }
    })
}

/// Generates a synthetic dataset. `spec_json` is a JSON object with any
/// subset of the synthesis parameters; null uses the defaults.
///
/// # Safety
/// `spec_json` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cr_synth_generate(
    spec_json: *const c_char,
    out: *mut *mut CrDataset,
) -> CrStatus {
    guard(|| {
        non_null!(out);
        let spec: SynthSpec = if spec_json.is_null() {
            SynthSpec::default()
        } else {
            let text = try_status!(str_arg(spec_json, "spec_json"));
            match serde_json::from_str(text) {
                Ok(s) => s,
                Err(e) => return fail(CrStatus::InvalidInput, format!("synth spec: {e}")),
            }
        };
        match synth::generate(&spec) {
            Ok(o) => {
                *out = Box::into_raw(Box::new(CrDataset { inner: o.dataset }));
                CrStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// # Safety
/// `ds` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cr_dataset_stats(
    ds: *const CrDataset,
    out: *mut CrDatasetStats,
) -> CrStatus {
    guard(|| {
        non_null!(ds, out);
        let s = (*ds).inner.stats();
        *out = CrDatasetStats {
            checkins: s.checkins as u64,
            users: s.users as u64,
            venues: s.venues as u64,
            users_per_venue: s.users_per_venue.unwrap_or(f64::NAN),
        };
        CrStatus::Ok
    })
}

/// # Safety
/// `ds` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn cr_dataset_free(ds: *mut CrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Runs the repeated attack. `config_json` is a JSON object with any subset
/// of `alpha`, `repetitions`, `max_test_size`, `min_class_checkins`,
/// `base_seed` and `class_spec`; null uses the defaults.
///
/// # Safety
/// `ds` must be a valid handle, `config_json` null or NUL-terminated, and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cr_experiment_run(
    ds: *const CrDataset,
    config_json: *const c_char,
    out: *mut *mut CrResult,
) -> CrStatus {
    guard(|| {
        non_null!(ds, out);
        let cfg: ExperimentConfig = if config_json.is_null() {
            ExperimentConfig::default()
        } else {
            let text = try_status!(str_arg(config_json, "config_json"));
            match serde_json::from_str(text) {
                Ok(c) => c,
                Err(e) => return fail(CrStatus::InvalidInput, format!("experiment config: {e}")),
            }
        };
        let ds = &(*ds).inner;
        let feats = features::compute_features_available(ds);
        match eval::run_experiment(ds, &feats, &cfg, None) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(CrResult { inner: r }));
                CrStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Number of evaluated test sizes (m = 1..=count).
///
/// # Safety
/// `r` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cr_result_test_sizes(r: *const CrResult, out: *mut usize) -> CrStatus {
    guard(|| {
        non_null!(r, out);
        *out = (*r).inner.per_m.len();
        CrStatus::Ok
    })
}

/// Eligible users (k) and class venues (|L|).
///
/// # Safety
/// `r` must be a valid handle; output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn cr_result_sizes(
    r: *const CrResult,
    n_users: *mut usize,
    n_venues: *mut usize,
) -> CrStatus {
    guard(|| {
        non_null!(r, n_users, n_venues);
        *n_users = (*r).inner.n_users;
        *n_venues = (*r).inner.n_venues;
        CrStatus::Ok
    })
}

/// Mean accuracy and its standard error at test size `m`.
///
/// # Safety
/// `r` must be a valid handle; output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn cr_result_accuracy(
    r: *const CrResult,
    m: usize,
    mean: *mut f64,
    stderr: *mut f64,
) -> CrStatus {
    guard(|| {
        non_null!(r, mean, stderr);
        match (*r).inner.at(m) {
            Some(t) => {
                *mean = t.accuracy_mean;
                *stderr = t.accuracy_stderr;
                CrStatus::Ok
            }
            None => fail(
                CrStatus::InvalidInput,
                format!("test size {m} out of range"),
            ),
        }
    })
}

/// Full result as JSON; release with [`cr_string_free`].
///
/// # Safety
/// `r` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cr_result_to_json(r: *const CrResult, out: *mut *mut c_char) -> CrStatus {
    guard(|| {
        non_null!(r, out);
        match serde_json::to_string(&(*r).inner) {
            Ok(s) => {
                *out = to_c_string(s);
                CrStatus::Ok
            }
            Err(e) => fail(CrStatus::InvalidInput, e.to_string()),
        }
    })
}

/// # Safety
/// `r` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn cr_result_free(r: *mut CrResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Great-circle distance in metres between two points in degrees.
#[no_mangle]
pub extern "C" fn cr_haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    geo::haversine(
        Point {
            lat: lat1,
            lon: lon1,
        },
        Point {
            lat: lat2,
            lon: lon2,
        },
    )
}

/// Shannon entropy in bits of a count histogram.
///
/// # Safety
/// `counts` must point to `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cr_entropy_bits(counts: *const u64, n: usize, out: *mut f64) -> CrStatus {
    guard(|| {
        non_null!(counts, out);
        match stats::entropy_from_counts(std::slice::from_raw_parts(counts, n)) {
            Ok(h) => {
                *out = h;
                CrStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Pearson correlation and two-sided p-value. Below five pairs the p-value
/// comes from a seeded permutation test.
///
/// # Safety
/// `xs` and `ys` must point to `n` values; `r` and `p_value` writable.
#[no_mangle]
pub unsafe extern "C" fn cr_pearson(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    seed: u64,
    r: *mut f64,
    p_value: *mut f64,
) -> CrStatus {
    guard(|| {
        non_null!(xs, ys, r, p_value);
        let (xs, ys) = (
            std::slice::from_raw_parts(xs, n),
            std::slice::from_raw_parts(ys, n),
        );
        match stats::pearson_auto(xs, ys, seed) {
            Ok(c) => {
                *r = c.r;
                *p_value = c.p_value;
                CrStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

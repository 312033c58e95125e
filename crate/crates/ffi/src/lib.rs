//! C ABI over the `revrank` library.
//!
//! Every fallible function returns an [`RrStatus`]. On failure a message is
//! stored for the calling thread and can be read with [`rr_last_error`].
//! Datasets and rankings are opaque handles released with their `_free`
//! function. Strings handed out through out-parameters belong to the caller
//! and are released with [`rr_string_free`].
//!
//! Panics never cross the boundary; they surface as `RR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use revrank::choice::{self, CollegeOffer};
use revrank::ingest::{self, IngestConfig, MajorMap};
use revrank::rankers::{self, Normalization};
use revrank::{stats, Dataset, Error, Ranking};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Malformed CSV or JSON input.
    Parse = 4,
    /// Input parsed but failed dataset validation.
    InvalidData = 5,
    /// A statistic is undefined for the input (e.g. too few common programs).
    Undefined = 6,
    IndexOutOfRange = 7,
    Panic = 99,
}

/// How selection shares are normalized within a score.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrNormalization {
    CandidateShare = 0,
    ReportShare = 1,
}

impl From<RrNormalization> for Normalization {
    fn from(n: RrNormalization) -> Self {
        match n {
            RrNormalization::CandidateShare => Normalization::CandidateShare,
            RrNormalization::ReportShare => Normalization::ReportShare,
        }
    }
}

/// Cleaning options for loading a dataset. Start from
/// [`rr_load_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RrLoadOptions {
    /// Programs with fewer reports are dropped.
    pub min_reports: usize,
    /// Keep only each candidate's best-scoring attempt.
    pub best_attempt_only: bool,
    /// Treat more than five selections per attempt as an error.
    pub strict_cap: bool,
}

/// A cleaned score-report dataset.
pub struct RrDataset(Dataset);

/// An ordered list of programs.
pub struct RrRanking(Ranking);

struct Fail {
    status: RrStatus,
    message: String,
}

impl Fail {
    fn new(status: RrStatus, message: impl Into<String>) -> Self {
        Fail {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => RrStatus::Io,
            Error::MissingColumn(_) | Error::Rows(_) | Error::Csv(_) | Error::Json(_) => RrStatus::Parse,
            Error::Invalid(_) => RrStatus::InvalidData,
            Error::TooFewCommon(_) | Error::Degenerate(_) => RrStatus::Undefined,
            _ => RrStatus::InvalidArgument,
        };
        Fail::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RrStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            RrStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail::new(RrStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::new(RrStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

fn config(opts: Option<&RrLoadOptions>) -> IngestConfig {
    let opts = opts.copied().unwrap_or_else(|| rr_load_options_default());
    IngestConfig {
        min_reports_per_program: opts.min_reports,
        best_attempt_only: opts.best_attempt_only,
        strict_cap: opts.strict_cap,
        ..IngestConfig::default()
    }
}

fn finish_dataset(raw: Dataset, opts: Option<&RrLoadOptions>, out: &mut *mut RrDataset) -> Result<(), Fail> {
    let loaded = ingest::clean(raw, &config(opts), &MajorMap::default())?;
    *out = Box::into_raw(Box::new(RrDataset(loaded.dataset)));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default cleaning: 122-report floor, all attempts, cap violations warn.
#[no_mangle]
pub extern "C" fn rr_load_options_default() -> RrLoadOptions {
    let d = IngestConfig::default();
    RrLoadOptions {
        min_reports: d.min_reports_per_program,
        best_attempt_only: d.best_attempt_only,
        strict_cap: d.strict_cap,
    }
}

/// Reads and cleans a score-report CSV file. `opts` may be null for defaults.
///
/// # Safety
/// `path` must be a NUL-terminated string; `opts` null or valid; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_load(
    path: *const c_char,
    opts: *const RrLoadOptions,
    out: *mut *mut RrDataset,
) -> RrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let cfg = config(opts.as_ref());
        let raw = ingest::parse_csv(Path::new(path), &cfg)?;
        finish_dataset(raw, opts.as_ref(), out)
    })
}

/// Like [`rr_dataset_load`], reading CSV text from memory.
///
/// # Safety
/// `csv` must be a NUL-terminated string; `opts` null or valid; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_from_csv(
    csv: *const c_char,
    opts: *const RrLoadOptions,
    out: *mut *mut RrDataset,
) -> RrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(csv, "csv")?;
        let raw = ingest::read_reports(text.as_bytes(), config(opts.as_ref()).grid)?;
        finish_dataset(raw, opts.as_ref(), out)
    })
}

/// # Safety
/// `d` must be null or a dataset from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_free(d: *mut RrDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_num_reports(d: *const RrDataset, out: *mut usize) -> RrStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(d, "dataset")?.0.len();
        Ok(())
    })
}

/// # Safety
/// `d` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_num_programs(d: *const RrDataset, out: *mut usize) -> RrStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(d, "dataset")?.0.num_programs();
        Ok(())
    })
}

unsafe fn rank_with(
    d: *const RrDataset,
    out: *mut *mut RrRanking,
    f: impl FnOnce(&Dataset) -> Ranking,
) -> RrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let d = ref_arg(d, "dataset")?;
        *out = Box::into_raw(Box::new(RrRanking(f(&d.0))));
        Ok(())
    })
}

/// Ranks programs by the m measure.
///
/// # Safety
/// `d` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_rank_m(d: *const RrDataset, norm: RrNormalization, out: *mut *mut RrRanking) -> RrStatus {
    rank_with(d, out, |d| rankers::rank_by_m(&rankers::score_distribution(d, norm.into())))
}

/// Ranks programs by the recursive m+ count.
///
/// # Safety
/// `d` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_rank_m_plus(
    d: *const RrDataset,
    norm: RrNormalization,
    out: *mut *mut RrRanking,
) -> RrStatus {
    rank_with(d, out, |d| rankers::rank_by_m_plus(&rankers::score_distribution(d, norm.into())))
}

/// Ranks programs by tournament wins. With `per_year`, applicants are only
/// compared within their test year.
///
/// # Safety
/// `d` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_rank_tournament(d: *const RrDataset, per_year: bool, out: *mut *mut RrRanking) -> RrStatus {
    rank_with(d, out, |d| rankers::tournament(d, per_year).ranking)
}

/// Reads a `rank,program_id,metric` ranking CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rr_ranking_read_csv(path: *const c_char, out: *mut *mut RrRanking) -> RrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = Ranking::read_csv(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(RrRanking(r)));
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a ranking from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rr_ranking_free(r: *mut RrRanking) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `r` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_ranking_len(r: *const RrRanking, out: *mut usize) -> RrStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(r, "ranking")?.0.len();
        Ok(())
    })
}

unsafe fn entry<'a>(r: *const RrRanking, index: usize) -> Result<&'a revrank::RankEntry, Fail> {
    let r = ref_arg(r, "ranking")?;
    r.0.entries.get(index).ok_or_else(|| {
        Fail::new(
            RrStatus::IndexOutOfRange,
            format!("index {index} out of range for {} entries", r.0.len()),
        )
    })
}

/// Program id at 0-based position `index`. Free the result with
/// [`rr_string_free`].
///
/// # Safety
/// `r` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_ranking_program_id(r: *const RrRanking, index: usize, out: *mut *mut c_char) -> RrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = owned_string(entry(r, index)?.program_id.to_string());
        Ok(())
    })
}

/// Metric at 0-based position `index`.
///
/// # Safety
/// `r` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_ranking_metric(r: *const RrRanking, index: usize, out: *mut f64) -> RrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = entry(r, index)?.metric;
        Ok(())
    })
}

/// JSON document with entries, tie groups and method. Free the result with
/// [`rr_string_free`].
///
/// # Safety
/// `r` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_ranking_to_json(r: *const RrRanking, out: *mut *mut c_char) -> RrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = owned_string(ref_arg(r, "ranking")?.0.to_json());
        Ok(())
    })
}

/// `rank,program_id,metric` CSV text. Free the result with
/// [`rr_string_free`].
///
/// # Safety
/// `r` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_ranking_to_csv(r: *const RrRanking, out: *mut *mut c_char) -> RrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = owned_string(ref_arg(r, "ranking")?.0.to_csv_string());
        Ok(())
    })
}

/// Spearman correlation over the programs both rankings contain.
///
/// # Safety
/// `a`, `b` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_spearman(a: *const RrRanking, b: *const RrRanking, out: *mut f64) -> RrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = stats::spearman(&ref_arg(a, "a")?.0, &ref_arg(b, "b")?.0)?;
        Ok(())
    })
}

unsafe fn offers(admit_probs: *const f64, utilities: *const f64, n: usize) -> Result<Vec<CollegeOffer>, Fail> {
    let p = slice_arg(admit_probs, n, "admit_probs")?;
    let v = slice_arg(utilities, n, "utilities")?;
    p.iter()
        .zip(v)
        .enumerate()
        .map(|(i, (&p, &v))| CollegeOffer::new(i.to_string(), p, v).map_err(Fail::from))
        .collect()
}

/// Expected utility of applying to `n` programs given as parallel arrays.
///
/// # Safety
/// Both arrays must hold `n` values (they may be null when `n` is 0).
#[no_mangle]
pub unsafe extern "C" fn rr_expected_utility(
    admit_probs: *const f64,
    utilities: *const f64,
    n: usize,
    out: *mut f64,
) -> RrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = choice::expected_utility(&offers(admit_probs, utilities, n)?)?;
        Ok(())
    })
}

/// Optimal portfolio of at most `budget` applications. Writes the chosen
/// program indices in pick order to `out_indices`, which must have room for
/// `budget` entries, their count to `out_len` and the value to `out_value`.
///
/// # Safety
/// Input arrays must hold `n` values; `out_indices` must hold `budget`.
#[no_mangle]
pub unsafe extern "C" fn rr_optimal_portfolio(
    admit_probs: *const f64,
    utilities: *const f64,
    n: usize,
    budget: usize,
    allow_duplicates: bool,
    out_indices: *mut usize,
    out_len: *mut usize,
    out_value: *mut f64,
) -> RrStatus {
    guard(|| {
        let len = out_arg(out_len, "out_len")?;
        let value = out_arg(out_value, "out_value")?;
        if budget > 0 && out_indices.is_null() {
            return Err(null("out_indices"));
        }
        let p = choice::optimal_portfolio(&offers(admit_probs, utilities, n)?, budget, allow_duplicates)?;
        for (k, o) in p.offers.iter().enumerate() {
            *out_indices.add(k) = o.program_id.as_str().parse().expect("index ids");
        }
        *len = p.len();
        *value = p.value;
        Ok(())
    })
}

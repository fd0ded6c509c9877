//! C ABI for the relevance head, the NSP probe and the correlation
//! statistics.
//!
//! Every fallible call returns a [`DrStatus`]; on failure the message is
//! available from [`dr_last_error`] on the same thread until the next call.
//! Handles are created by `*_load` and released by the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dialrel::baselines::{self, LogProbEntry};
use dialrel::featurestore::NspHead;
use dialrel::idk::RelevanceModel;
use dialrel::nspprobe::{self, NspLabel};
use dialrel::stats::{self, Statistic};
use dialrel::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Malformed = 4,
    DimMismatch = 5,
    NonFinite = 6,
    Empty = 7,
    Degenerate = 8,
    Inconsistent = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrNspLabel {
    IsNext = 0,
    NotNext = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrStatistic {
    Spearman = 0,
    Pearson = 1,
}

/// Opaque trained relevance head.
pub struct DrModel {
    inner: RelevanceModel,
}

/// Opaque exported NSP classifier.
pub struct DrNspHead {
    inner: NspHead,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DrStatus {
    match e {
        Error::Io { .. } => DrStatus::Io,
        Error::Malformed { .. } | Error::NoRecords(_) | Error::RatingOutOfRange { .. } => {
            DrStatus::Malformed
        }
        Error::InvalidArgument(_) | Error::UnknownDataset(_) => DrStatus::InvalidArgument,
        Error::DimMismatch { .. } => DrStatus::DimMismatch,
        Error::NonFinite(_) => DrStatus::NonFinite,
        Error::Empty(_) | Error::MissingFeatures(_) => DrStatus::Empty,
        Error::Degenerate(_) => DrStatus::Degenerate,
        Error::DuplicateKey(_) | Error::Inconsistent(_) => DrStatus::Inconsistent,
    }
}

struct Fail(DrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DrStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DrStatus::Panic
        }
    }
}

/// `len` values from `ptr`; a null pointer is allowed only when `len == 0`.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DrStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null("output pointer"))
}

/// Message of the last failed call on this thread, or NULL. Owned by the
/// library; valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_model_load(path: *const c_char, model: *mut *mut DrModel) -> DrStatus {
    guard(|| {
        let slot = out(model)?;
        let inner = RelevanceModel::read(path_arg(path)?)?;
        *slot = Box::into_raw(Box::new(DrModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `dr_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dr_model_free(model: *mut DrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_model_dim(model: *const DrModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim)
}

/// Relevance score in [0, 1] of one pair feature.
///
/// # Safety
/// `x` must point to `len` doubles; `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_model_forward(
    model: *const DrModel,
    x: *const f64,
    len: usize,
    score: *mut f64,
) -> DrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let v = m.inner.forward(slice(x, len, "x")?)?;
        *out(score)? = v;
        Ok(())
    })
}

/// Copies the weight vector into `weights[0..len]`; `len` must equal the dimension.
///
/// # Safety
/// `weights` must point to `len` writable doubles; `bias` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_model_params(
    model: *const DrModel,
    weights: *mut f64,
    len: usize,
    bias: *mut f64,
) -> DrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if len != m.inner.dim {
            return Err(Error::DimMismatch {
                context: "weight buffer".into(),
                expected: m.inner.dim,
                found: len,
            }
            .into());
        }
        if weights.is_null() {
            return Err(null("weights"));
        }
        std::slice::from_raw_parts_mut(weights, len).copy_from_slice(&m.inner.weights);
        *out(bias)? = m.inner.bias;
        Ok(())
    })
}

/// Writes 1 on the `k` largest-magnitude weight dims and 0 elsewhere.
///
/// # Safety
/// `mask` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dr_model_top_k_mask(
    model: *const DrModel,
    k: usize,
    mask: *mut u8,
    len: usize,
) -> DrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let bits = nspprobe::top_k_mask(&m.inner, k)?;
        if len != bits.len() {
            return Err(Error::DimMismatch {
                context: "mask buffer".into(),
                expected: bits.len(),
                found: len,
            }
            .into());
        }
        if mask.is_null() {
            return Err(null("mask"));
        }
        for (o, b) in std::slice::from_raw_parts_mut(mask, len)
            .iter_mut()
            .zip(bits)
        {
            *o = u8::from(b);
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `head` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_nsp_head_load(
    path: *const c_char,
    head: *mut *mut DrNspHead,
) -> DrStatus {
    guard(|| {
        let slot = out(head)?;
        let inner = NspHead::read(path_arg(path)?)?;
        *slot = Box::into_raw(Box::new(DrNspHead { inner }));
        Ok(())
    })
}

/// # Safety
/// `head` must come from `dr_nsp_head_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dr_nsp_head_free(head: *mut DrNspHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}

/// NSP decision for one feature. `mask` may be NULL (no masking) or point
/// to `len` bytes where 0 zeroes the dimension.
///
/// # Safety
/// `x` must point to `len` doubles; `label` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_nsp_predict(
    head: *const DrNspHead,
    x: *const f64,
    mask: *const u8,
    len: usize,
    label: *mut DrNspLabel,
) -> DrStatus {
    guard(|| {
        let h = head.as_ref().ok_or_else(|| null("head"))?;
        let x = slice(x, len, "x")?;
        let mask: Option<Vec<bool>> = if mask.is_null() {
            None
        } else {
            Some(slice(mask, len, "mask")?.iter().map(|&b| b != 0).collect())
        };
        let l = nspprobe::nsp_predict(&h.inner, x, mask.as_deref())?;
        *out(label)? = match l {
            NspLabel::IsNext => DrNspLabel::IsNext,
            NspLabel::NotNext => DrNspLabel::NotNext,
        };
        Ok(())
    })
}

/// # Safety
/// `x` and `y` must point to `n` doubles; `rho` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_spearman(
    x: *const f64,
    y: *const f64,
    n: usize,
    rho: *mut f64,
) -> DrStatus {
    guard(|| {
        *out(rho)? = stats::spearman(slice(x, n, "x")?, slice(y, n, "y")?)?;
        Ok(())
    })
}

/// # Safety
/// `x` and `y` must point to `n` doubles; `r` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_pearson(
    x: *const f64,
    y: *const f64,
    n: usize,
    r: *mut f64,
) -> DrStatus {
    guard(|| {
        *out(r)? = stats::pearson(slice(x, n, "x")?, slice(y, n, "y")?)?;
        Ok(())
    })
}

/// Two-sided permutation p-value; `n_perm` must be at least 1000.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_perm_pvalue(
    x: *const f64,
    y: *const f64,
    n: usize,
    statistic: DrStatistic,
    n_perm: usize,
    seed: u64,
    p: *mut f64,
) -> DrStatus {
    guard(|| {
        let stat = match statistic {
            DrStatistic::Spearman => Statistic::Spearman,
            DrStatistic::Pearson => Statistic::Pearson,
        };
        *out(p)? = stats::perm_pvalue(slice(x, n, "x")?, slice(y, n, "y")?, stat, n_perm, seed)?;
        Ok(())
    })
}

/// # Safety
/// `u` and `v` must point to `n` doubles; `cos` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_cosine(
    u: *const f64,
    v: *const f64,
    n: usize,
    cos: *mut f64,
) -> DrStatus {
    guard(|| {
        *out(cos)? = baselines::cosine(slice(u, n, "u")?, slice(v, n, "v")?)?;
        Ok(())
    })
}

/// NORM-PROB scores of one batch of responses.
///
/// # Safety
/// `logprob_sums` and `token_counts` must point to `n` values; `scores`
/// must point to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dr_norm_prob(
    logprob_sums: *const f64,
    token_counts: *const u32,
    n: usize,
    scores: *mut f64,
) -> DrStatus {
    guard(|| {
        let sums = slice(logprob_sums, n, "logprob_sums")?;
        let counts = slice(token_counts, n, "token_counts")?;
        let batch: Vec<LogProbEntry> = sums
            .iter()
            .zip(counts)
            .enumerate()
            .map(|(i, (&s, &c))| LogProbEntry {
                example_id: i.to_string(),
                logprob_sum: s,
                token_count: c,
            })
            .collect();
        let (scored, _) = baselines::norm_prob(&batch)?;
        if scores.is_null() && n > 0 {
            return Err(null("scores"));
        }
        for (i, s) in scored.into_iter().enumerate() {
            *scores.add(i) = s.score;
        }
        Ok(())
    })
}

/// Best-to-worst ratio of `n >= 2` per-dataset Spearman values; may be
/// infinite.
///
/// # Safety
/// `spearman` must point to `n` doubles; `ratio` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dr_sensitivity_ratio(
    spearman: *const f64,
    n: usize,
    ratio: *mut f64,
) -> DrStatus {
    guard(|| {
        let values = slice(spearman, n, "spearman")?;
        if n > dialrel::corpus::Dataset::TABLE_ORDER.len() {
            return Err(Error::InvalidArgument(format!("at most 5 datasets, got {n}")).into());
        }
        let map = dialrel::corpus::Dataset::TABLE_ORDER
            .into_iter()
            .zip(values.iter().copied())
            .collect();
        *out(ratio)? = stats::sensitivity_ratio("ffi", &map)?.ratio;
        Ok(())
    })
}

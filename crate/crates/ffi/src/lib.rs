//! C ABI over `vexp-core`.
//!
//! Every fallible function returns a [`VexpStatus`]. On failure the message
//! is kept per thread and can be read with [`vexp_last_error`]. Functions
//! that fill caller buffers always write the required length to `out_len`,
//! so a call with `cap = 0` doubles as a size query.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use vexp_core::bpe::Vocabulary;
use vexp_core::corpus::normalize_bytes;
use vexp_core::metrics::{fertility, renyi_efficiency};
use vexp_core::schedule::{
    exponential_schedule, mixture_schedule, uniform_schedule, ExpansionSchedule, MixtureParams,
};
use vexp_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VexpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Data = 3,
    Io = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Opaque vocabulary handle. Free with [`vexp_vocab_free`].
pub struct VexpVocab {
    inner: Vocabulary,
}

/// One mixture row in hundredths of a percent. The three fields sum to 10000.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VexpMixtureRow {
    pub arabic: u32,
    pub english: u32,
    pub math_code: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> VexpStatus {
    match err {
        Error::InvalidArgument(_) | Error::Validation(_) => VexpStatus::InvalidArgument,
        Error::Io { .. } => VexpStatus::Io,
        _ => VexpStatus::Data,
    }
}

fn fail(status: VexpStatus, msg: impl Into<String>) -> VexpStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting core errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), VexpStatus>>(f: F) -> VexpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VexpStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(VexpStatus::Panic, "internal panic"),
    }
}

fn core<T>(r: vexp_core::Result<T>) -> Result<T, VexpStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), VexpStatus> {
    if p.is_null() {
        Err(fail(VexpStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Slice from a pointer and length; a null pointer is allowed when `len == 0`.
unsafe fn input<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], VexpStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(slice::from_raw_parts(p, len))
}

/// Copies `data` into `out` if it fits and reports the full length.
unsafe fn output<T: Copy>(
    data: &[T],
    out: *mut T,
    cap: usize,
    out_len: *mut usize,
) -> Result<(), VexpStatus> {
    non_null(out_len, "out_len")?;
    *out_len = data.len();
    if data.len() > cap {
        return Err(fail(
            VexpStatus::BufferTooSmall,
            format!("buffer holds {cap}, need {}", data.len()),
        ));
    }
    if !data.is_empty() {
        non_null(out, "out")?;
        ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
    }
    Ok(())
}

fn vocab<'a>(v: *const VexpVocab) -> Result<&'a Vocabulary, VexpStatus> {
    non_null(v, "vocab")?;
    Ok(unsafe { &(*v).inner })
}

fn boxed(v: Vocabulary, out: *mut *mut VexpVocab) -> Result<(), VexpStatus> {
    non_null(out, "out")?;
    unsafe { *out = Box::into_raw(Box::new(VexpVocab { inner: v })) };
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn vexp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a vocabulary file written by `vexp`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vexp_vocab_load(
    path: *const c_char,
    out: *mut *mut VexpVocab,
) -> VexpStatus {
    guard(|| {
        non_null(path, "path")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(VexpStatus::InvalidArgument, "path is not UTF-8"))?;
        boxed(core(Vocabulary::load(Path::new(path)))?, out)
    })
}

/// Parses a vocabulary from its JSON text.
///
/// # Safety
/// `json` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vexp_vocab_from_json(
    json: *const u8,
    len: usize,
    out: *mut *mut VexpVocab,
) -> VexpStatus {
    guard(|| {
        let text = std::str::from_utf8(input(json, len, "json")?)
            .map_err(|e| fail(VexpStatus::Data, format!("vocabulary is not UTF-8: {e}")))?;
        boxed(core(Vocabulary::from_json(text))?, out)
    })
}

/// # Safety
/// `v` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vexp_vocab_free(v: *mut VexpVocab) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Number of tokens in the vocabulary, 0 for a null handle.
///
/// # Safety
/// `v` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vexp_vocab_size(v: *const VexpVocab) -> usize {
    v.as_ref().map_or(0, |v| v.inner.len())
}

/// Normalizes and tokenizes UTF-8 `text`. Writes at most `cap` ids to `out`
/// and the full count to `out_len`.
///
/// # Safety
/// `text` must point to `len` bytes, `out` to `cap` ids, `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vexp_vocab_tokenize(
    v: *const VexpVocab,
    text: *const u8,
    len: usize,
    out: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> VexpStatus {
    guard(|| {
        let v = vocab(v)?;
        let norm = core(normalize_bytes(input(text, len, "text")?))?;
        output(&v.tokenize(&norm), out, cap, out_len)
    })
}

/// Concatenated surface bytes of `ids`.
///
/// # Safety
/// `ids` must point to `n` ids, `out` to `cap` bytes, `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vexp_vocab_decode(
    v: *const VexpVocab,
    ids: *const u32,
    n: usize,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> VexpStatus {
    guard(|| {
        let v = vocab(v)?;
        let ids = input(ids, n, "ids")?;
        if let Some(bad) = ids.iter().find(|&&id| id as usize >= v.len()) {
            return Err(fail(
                VexpStatus::InvalidArgument,
                format!("token id {bad} out of range"),
            ));
        }
        output(&v.decode(ids), out, cap, out_len)
    })
}

/// Mean tokens per word.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vexp_fertility(
    total_tokens: u64,
    total_words: u64,
    out: *mut f64,
) -> VexpStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = core(fertility(total_tokens, total_words))?;
        Ok(())
    })
}

/// Rényi entropy of the token distribution divided by `ln(vocab_size)`.
///
/// # Safety
/// `counts` must point to `n` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vexp_renyi_efficiency(
    counts: *const u64,
    n: usize,
    vocab_size: u64,
    alpha: f64,
    out: *mut f64,
) -> VexpStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = core(renyi_efficiency(
            input(counts, n, "counts")?,
            vocab_size,
            alpha,
        ))?;
        Ok(())
    })
}

unsafe fn write_schedule(
    s: vexp_core::Result<ExpansionSchedule>,
    out: *mut u64,
    cap: usize,
    out_len: *mut usize,
) -> VexpStatus {
    guard(|| output(&core(s)?.cumulative_targets, out, cap, out_len))
}

/// Cumulative new-subword targets of the doubling schedule, one per stage.
///
/// # Safety
/// `out` must hold `cap` values and `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vexp_exponential_schedule(
    budget: u64,
    stages: usize,
    out: *mut u64,
    cap: usize,
    out_len: *mut usize,
) -> VexpStatus {
    write_schedule(exponential_schedule(budget, stages), out, cap, out_len)
}

/// Cumulative new-subword targets of the evenly spaced schedule.
///
/// # Safety
/// `out` must hold `cap` values and `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vexp_uniform_schedule(
    budget: u64,
    stages: usize,
    out: *mut u64,
    cap: usize,
    out_len: *mut usize,
) -> VexpStatus {
    write_schedule(uniform_schedule(budget, stages), out, cap, out_len)
}

/// Language mixture of 1-based `stage` out of `stages`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vexp_mixture_row(
    stages: usize,
    stage: usize,
    start_pct: f64,
    end_pct: f64,
    constant_pct: f64,
    out: *mut VexpMixtureRow,
) -> VexpStatus {
    guard(|| {
        non_null(out, "out")?;
        if stage == 0 || stage > stages {
            return Err(fail(
                VexpStatus::InvalidArgument,
                format!("stage {stage} outside 1..={stages}"),
            ));
        }
        let params = MixtureParams {
            start_pct,
            end_pct,
            constant_pct,
        };
        let row = core(mixture_schedule(stages, params))?.rows[stage - 1];
        *out = VexpMixtureRow {
            arabic: row.arabic_pct.hundredths(),
            english: row.english_pct.hundredths(),
            math_code: row.math_code_pct.hundredths(),
        };
        Ok(())
    })
}

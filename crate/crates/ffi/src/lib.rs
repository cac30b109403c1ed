//! C ABI for natlex: opaque handles, status codes and a per-thread last-error
//! message. Every function returns a [`NatlexStatus`] unless it is a plain
//! accessor; handles are released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use natlex::aligner::{self, EmConfig};
use natlex::corpus::{self, ParallelCorpus, TokenId, Vocab};
use natlex::lexicon::LexiconTable;
use natlex::nat::{self, LexModelParams};
use natlex::priors::{self, ScheduleConfig};
use natlex::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NatlexStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Validation = 3,
    NotFound = 4,
    Io = 5,
    Parse = 6,
    BufferTooSmall = 7,
    Runtime = 8,
    Panic = 9,
}

/// Parallel corpus with its vocabularies.
pub struct NatlexCorpus {
    corpus: ParallelCorpus,
}

/// Lexical translation table bound to the vocabularies it was trained with.
pub struct NatlexLexicon {
    table: LexiconTable,
    src_vocab: Arc<Vocab>,
    tgt_vocab: Arc<Vocab>,
}

/// Trained NAT model parameters.
pub struct NatlexModel {
    params: LexModelParams,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> NatlexStatus {
    match err {
        Error::Validation(_) => NatlexStatus::Validation,
        Error::MissingArtifact(..) => NatlexStatus::NotFound,
        Error::Io { .. } => NatlexStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::EmptyLine { .. } | Error::LineCountMismatch { .. } => {
            NatlexStatus::Parse
        }
        Error::Stage { source, .. } => status_of(source),
        _ => NatlexStatus::Runtime,
    }
}

fn fail(status: NatlexStatus, msg: impl Into<String>) -> NatlexStatus {
    set_error(msg);
    status
}

/// Runs `body`, turning library errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), NatlexStatus>) -> NatlexStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NatlexStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(NatlexStatus::Panic, "internal panic"),
    }
}

fn lib(err: Error) -> NatlexStatus {
    fail(status_of(&err), err.to_string())
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, NatlexStatus> {
    str_arg(p, what).map(PathBuf::from)
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, NatlexStatus> {
    if p.is_null() {
        return Err(fail(NatlexStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(NatlexStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, NatlexStatus> {
    p.as_ref().ok_or_else(|| fail(NatlexStatus::NullArgument, format!("{what} is null")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), NatlexStatus> {
    if p.is_null() {
        Err(fail(NatlexStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next natlex call on the same thread.
#[no_mangle]
pub extern "C" fn natlex_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn natlex_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a two-file parallel corpus (one whitespace-tokenized sentence per line).
///
/// # Safety
/// `src_path` and `tgt_path` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn natlex_corpus_load(
    src_path: *const c_char,
    tgt_path: *const c_char,
    out: *mut *mut NatlexCorpus,
) -> NatlexStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let (s, t) = (path_arg(src_path, "src_path")?, path_arg(tgt_path, "tgt_path")?);
        let corpus = corpus::load_corpus(&s, &t).map_err(lib)?;
        *out = Box::into_raw(Box::new(NatlexCorpus { corpus }));
        Ok(())
    })
}

/// Number of sentence pairs; 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle from [`natlex_corpus_load`].
#[no_mangle]
pub unsafe extern "C" fn natlex_corpus_len(corpus: *const NatlexCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.corpus.len())
}

/// # Safety
/// `corpus` must be NULL or a handle from [`natlex_corpus_load`] not freed before.
#[no_mangle]
pub unsafe extern "C" fn natlex_corpus_free(corpus: *mut NatlexCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Trains an IBM Model 1 lexicon on the corpus.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn natlex_align(
    corpus: *const NatlexCorpus,
    iterations: u32,
    smoothing: f64,
    out: *mut *mut NatlexLexicon,
) -> NatlexStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let c = &handle(corpus, "corpus")?.corpus;
        let cfg = EmConfig { iterations: iterations as usize, smoothing, ..EmConfig::default() };
        let table = aligner::train_aligner(c, &cfg).map_err(lib)?;
        *out = Box::into_raw(Box::new(NatlexLexicon {
            table,
            src_vocab: c.src_vocab.clone(),
            tgt_vocab: c.tgt_vocab.clone(),
        }));
        Ok(())
    })
}

/// P(tgt | src) for two surface tokens; 0 when the pair is absent.
///
/// # Safety
/// `lexicon` must be a live handle; `src` and `tgt` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn natlex_lexicon_prob(
    lexicon: *const NatlexLexicon,
    src: *const c_char,
    tgt: *const c_char,
    out: *mut f64,
) -> NatlexStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let lex = handle(lexicon, "lexicon")?;
        let (f, e) = (str_arg(src, "src")?, str_arg(tgt, "tgt")?);
        *out = match (lex.src_vocab.get(f), lex.tgt_vocab.get(e)) {
            (Some(f), Some(e)) => lex.table.prob(f, e),
            _ => 0.0,
        };
        Ok(())
    })
}

/// Writes the lexicon as `source \t target \t probability` lines.
///
/// # Safety
/// `lexicon` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn natlex_lexicon_write(lexicon: *const NatlexLexicon, path: *const c_char) -> NatlexStatus {
    guard(|| {
        let lex = handle(lexicon, "lexicon")?;
        let p = path_arg(path, "path")?;
        lex.table.write_tsv(&p, &lex.src_vocab, &lex.tgt_vocab).map_err(lib)
    })
}

/// # Safety
/// `lexicon` must be NULL or a handle from [`natlex_align`] not freed before.
#[no_mangle]
pub unsafe extern "C" fn natlex_lexicon_free(lexicon: *mut NatlexLexicon) {
    if !lexicon.is_null() {
        drop(Box::from_raw(lexicon));
    }
}

/// Clamped imitation rate at `step` of a `total_steps` run.
#[no_mangle]
pub extern "C" fn natlex_lambda_at(step: usize, total_steps: usize) -> f64 {
    priors::lambda_at(step, &ScheduleConfig::new(total_steps))
}

/// KL(q || p) over two length-`len` distributions.
///
/// # Safety
/// `q` and `p` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn natlex_kl(q: *const f64, p: *const f64, len: usize, out: *mut f64) -> NatlexStatus {
    guard(|| {
        out_ptr(out, "out")?;
        if q.is_null() || p.is_null() {
            return Err(fail(NatlexStatus::NullArgument, "q or p is null"));
        }
        let (q, p) = (std::slice::from_raw_parts(q, len), std::slice::from_raw_parts(p, len));
        *out = priors::kl_prior_loss(q, p).map_err(lib)?.0;
        Ok(())
    })
}

/// Loads a NAT checkpoint written by `natlex train`.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn natlex_model_load(path: *const c_char, out: *mut *mut NatlexModel) -> NatlexStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let params = LexModelParams::read(&path_arg(path, "path")?).map_err(lib)?;
        *out = Box::into_raw(Box::new(NatlexModel { params }));
        Ok(())
    })
}

/// Target vocabulary size; 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn natlex_model_target_size(model: *const NatlexModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.tgt_size)
}

/// Writes P(· | f) for the one-word source `f` into `out[0..len]`; `len`
/// must equal the target vocabulary size.
///
/// # Safety
/// `model` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn natlex_model_lexical_query(
    model: *const NatlexModel,
    f: u32,
    out: *mut f64,
    len: usize,
) -> NatlexStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let m = &handle(model, "model")?.params;
        if len != m.tgt_size {
            return Err(fail(NatlexStatus::InvalidArgument, format!("len {len} != target size {}", m.tgt_size)));
        }
        if f as usize >= m.src_size {
            return Err(fail(NatlexStatus::InvalidArgument, format!("source id {f} out of range")));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&nat::lexical_query(m, f as TokenId));
        Ok(())
    })
}

/// Parallel decode of a source id sequence. The predicted length is always
/// stored in `out_len`; the ids are written only when `capacity` suffices,
/// otherwise the call returns `BUFFER_TOO_SMALL`.
///
/// # Safety
/// `model` must be a live handle; `src` must point to `src_len` ids; `out`
/// must point to `capacity` writable ids; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn natlex_model_decode(
    model: *const NatlexModel,
    src: *const u32,
    src_len: usize,
    out: *mut u32,
    capacity: usize,
    out_len: *mut usize,
) -> NatlexStatus {
    guard(|| {
        out_ptr(out_len, "out_len")?;
        let m = &handle(model, "model")?.params;
        if src.is_null() || src_len == 0 {
            return Err(fail(NatlexStatus::InvalidArgument, "source must be non-empty"));
        }
        let src = std::slice::from_raw_parts(src, src_len);
        if let Some(bad) = src.iter().find(|&&f| f as usize >= m.src_size) {
            return Err(fail(NatlexStatus::InvalidArgument, format!("source id {bad} out of range")));
        }
        let pred = nat::decode(m, src);
        *out_len = pred.tokens.len();
        if capacity < pred.tokens.len() {
            return Err(fail(NatlexStatus::BufferTooSmall, format!("need {} slots", pred.tokens.len())));
        }
        out_ptr(out, "out")?;
        std::slice::from_raw_parts_mut(out, pred.tokens.len()).copy_from_slice(&pred.tokens);
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`natlex_model_load`] not freed before.
#[no_mangle]
pub unsafe extern "C" fn natlex_model_free(model: *mut NatlexModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

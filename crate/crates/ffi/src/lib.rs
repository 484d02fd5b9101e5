//! C ABI over the protoken tokenizers.
//!
//! Every fallible function returns a [`PtkStatus`]. On failure a message is
//! stored per thread and can be read with [`ptk_last_error`]. Handles are
//! opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use protoken::corpus::load_corpus;
use protoken::report::{train_ladder, TrainOptions};
use protoken::tokenizer::{load_model, save_model};
use protoken::{CorpusConfig, Error, Mode, Segmentation, Tokenizer, TokenizerKind};

/// Result codes shared by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtkStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Encoding = 5,
    Config = 6,
    Model = 7,
    Analysis = 8,
    OutOfRange = 9,
    Panic = 99,
}

/// A trained vocabulary together with its encoder.
pub struct PtkModel {
    tokenizer: Tokenizer,
}

/// Token ids and character offsets for one encoded string.
pub struct PtkEncoding {
    ids: Vec<u32>,
    /// Flattened (start, end) pairs.
    offsets: Vec<u32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PtkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => PtkStatus::Io,
            Error::Parse { .. } => PtkStatus::Parse,
            Error::Encoding { .. } => PtkStatus::Encoding,
            Error::Config(_) => PtkStatus::Config,
            Error::Model { .. } => PtkStatus::Model,
            Error::Analysis(_) => PtkStatus::Analysis,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PtkStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PtkStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            PtkStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(PtkStatus::NullArgument, format!("`{name}` is null"))
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(PtkStatus::InvalidUtf8, format!("`{name}` is not UTF-8: {e}")))
}

unsafe fn model<'a>(p: *const PtkModel) -> Result<&'a PtkModel, Failure> {
    p.as_ref().ok_or_else(|| null("model"))
}

unsafe fn out_ptr<'a, T>(p: *mut *mut T, name: &str) -> Result<&'a mut *mut T, Failure> {
    let out = p.as_mut().ok_or_else(|| null(name))?;
    *out = ptr::null_mut();
    Ok(out)
}

fn boxed(tokenizer: Tokenizer) -> *mut PtkModel {
    Box::into_raw(Box::new(PtkModel { tokenizer }))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ptk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ptk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Load a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ptk_model_load(path: *const c_char, out: *mut *mut PtkModel) -> PtkStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let vocab = load_model(string(path, "path")?)?;
        *out = boxed(Tokenizer::new(vocab));
        Ok(())
    })
}

/// Write a model file.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ptk_model_save(model: *const PtkModel, path: *const c_char) -> PtkStatus {
    guard(|| {
        let m = self::model(model)?;
        save_model(m.tokenizer.vocab(), string(path, "path")?)?;
        Ok(())
    })
}

/// Train a model on a corpus file.
///
/// `method` is `bpe`, `wordpiece` or `unigram`; `mode` is `protein` or
/// `text`. A `sample_size` of 0 uses every record.
///
/// # Safety
/// String arguments must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ptk_model_train(
    method: *const c_char,
    mode: *const c_char,
    corpus_path: *const c_char,
    vocab_size: usize,
    seed: u64,
    sample_size: usize,
    out: *mut *mut PtkModel,
) -> PtkStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let kind: TokenizerKind = string(method, "method")?.parse()?;
        let mode: Mode = string(mode, "mode")?.parse()?;
        let mut cfg = CorpusConfig::new(mode);
        cfg.seed = seed;
        cfg.sample_size = (sample_size > 0).then_some(sample_size);
        let corpus = load_corpus(string(corpus_path, "corpus_path")?, &cfg)?;
        let vocab = train_ladder(kind, &corpus.records, mode, &[vocab_size], &TrainOptions::default())
            .pop()
            .expect("one vocabulary per size")?;
        *out = boxed(Tokenizer::new(vocab));
        Ok(())
    })
}

/// Number of non-special tokens, or 0 for a null model.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ptk_model_vocab_size(model: *const PtkModel) -> usize {
    model.as_ref().map_or(0, |m| m.tokenizer.vocab().size())
}

/// Number of ids in the model including specials, or 0 for a null model.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ptk_model_len(model: *const PtkModel) -> usize {
    model.as_ref().map_or(0, |m| m.tokenizer.vocab().len())
}

/// Surface of token `id` as a newly allocated string. Release it with
/// [`ptk_string_free`].
///
/// # Safety
/// `model` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ptk_model_token(model: *const PtkModel, id: u32, out: *mut *mut c_char) -> PtkStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let vocab = self::model(model)?.tokenizer.vocab();
        if id as usize >= vocab.len() {
            return Err(Failure(
                PtkStatus::OutOfRange,
                format!("token id {id} outside 0..{}", vocab.len()),
            ));
        }
        *out = CString::new(vocab.token(id).replace('\0', " "))
            .unwrap_or_default()
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ptk_model_free(model: *mut PtkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Encode one record (a protein sequence or a line of text).
///
/// # Safety
/// `model` must come from this library, `text` be NUL-terminated and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ptk_encode(
    model: *const PtkModel,
    text: *const c_char,
    out: *mut *mut PtkEncoding,
) -> PtkStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = self::model(model)?;
        let Segmentation { token_ids, offsets, .. } = m.tokenizer.encode_text("", string(text, "text")?);
        let offsets = offsets.into_iter().flat_map(|(s, e)| [s, e]).collect();
        *out = Box::into_raw(Box::new(PtkEncoding {
            ids: token_ids,
            offsets,
        }));
        Ok(())
    })
}

/// Number of tokens, or 0 for a null encoding.
///
/// # Safety
/// `encoding` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ptk_encoding_len(encoding: *const PtkEncoding) -> usize {
    encoding.as_ref().map_or(0, |e| e.ids.len())
}

/// Pointer to `ptk_encoding_len` token ids, owned by the encoding.
///
/// # Safety
/// `encoding` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ptk_encoding_ids(encoding: *const PtkEncoding) -> *const u32 {
    encoding.as_ref().map_or(ptr::null(), |e| e.ids.as_ptr())
}

/// Pointer to `2 * ptk_encoding_len` values: the half-open character span
/// of each token as consecutive (start, end) pairs.
///
/// # Safety
/// `encoding` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ptk_encoding_offsets(encoding: *const PtkEncoding) -> *const u32 {
    encoding.as_ref().map_or(ptr::null(), |e| e.offsets.as_ptr())
}

/// # Safety
/// `encoding` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ptk_encoding_free(encoding: *mut PtkEncoding) {
    if !encoding.is_null() {
        drop(Box::from_raw(encoding));
    }
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ptk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

//! C interface: opaque corpus and model handles, integer status codes and a
//! thread-local message for the most recent failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use altag::active::{rank, score_pool, Strategy};
use altag::corpus::{convert_scheme, parse_conll, synthesize_corpus, Corpus, Sentence, TagScheme, TemplateSpec};
use altag::harness::{evaluate_span_f1, init_model, train_on, ExperimentConfig};
use altag::submod::{check_guarantee, random_instance};
use altag::tagger::{predict, TaggerModel};
use altag::Error;

/// Result of every fallible call. `ALTAG_STATUS_OK` is zero.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AltagStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidArgument = 4,
    Io = 5,
    BufferTooSmall = 6,
    Internal = 7,
    Panic = 8,
}

/// Uncertainty strategy for [`altag_model_rank_pool`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AltagStrategy {
    Rand = 0,
    Lc = 1,
    Mnlp = 2,
    Bald = 3,
}

impl From<AltagStrategy> for Strategy {
    fn from(s: AltagStrategy) -> Self {
        match s {
            AltagStrategy::Rand => Strategy::Rand,
            AltagStrategy::Lc => Strategy::Lc,
            AltagStrategy::Mnlp => Strategy::Mnlp,
            AltagStrategy::Bald => Strategy::Bald,
        }
    }
}

/// A tagged corpus (BIOES).
pub struct AltagCorpus(Corpus);

/// A tagger together with its training settings.
pub struct AltagModel {
    model: TaggerModel,
    config: ExperimentConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AltagStatus {
    match e {
        Error::Parse { .. } | Error::Scheme { .. } | Error::Conversion { .. } | Error::Format { .. } => {
            AltagStatus::Parse
        }
        Error::Io(_) => AltagStatus::Io,
        Error::Param(_) | Error::SynthSpec(_) | Error::EmptyInput(_) | Error::Size(_) | Error::WrongDecoder(_) => {
            AltagStatus::InvalidArgument
        }
        _ => AltagStatus::Internal,
    }
}

struct Failure(AltagStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: AltagStatus, msg: &str) -> Failure {
    Failure(status, msg.to_string())
}

/// Runs `f`, records any failure message and maps it to a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AltagStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AltagStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside altag".into());
            AltagStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(AltagStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AltagStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(AltagStatus::NullPointer, "null output pointer"))
}

unsafe fn ref_arg<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(AltagStatus::NullPointer, "null handle"))
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn altag_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Synthesizes the four-type, two-genre corpus with `n_sentences` sentences.
///
/// # Safety
/// `out` must be a valid pointer; the handle is released with [`altag_corpus_free`].
#[no_mangle]
pub unsafe extern "C" fn altag_corpus_synthesize(seed: u64, n_sentences: usize, out: *mut *mut AltagCorpus) -> AltagStatus {
    guard(|| {
        let out = out_arg(out)?;
        let corpus = synthesize_corpus(seed, n_sentences, &TemplateSpec::desk())?;
        *out = Box::into_raw(Box::new(AltagCorpus(corpus)));
        Ok(())
    })
}

/// Parses column-format text. `bio` nonzero means the input uses BIO tags,
/// which are converted to BIOES.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn altag_corpus_parse(text: *const c_char, bio: i32, out: *mut *mut AltagCorpus) -> AltagStatus {
    guard(|| {
        let text = str_arg(text)?;
        let out = out_arg(out)?;
        let scheme = if bio != 0 { TagScheme::Bio } else { TagScheme::Bioes };
        let mut corpus = parse_conll(text, scheme)?;
        if scheme == TagScheme::Bio {
            corpus = convert_scheme(&corpus, TagScheme::Bioes)?;
        }
        *out = Box::into_raw(Box::new(AltagCorpus(corpus)));
        Ok(())
    })
}

/// Number of sentences, 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn altag_corpus_len(corpus: *const AltagCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// Number of tokens, 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn altag_corpus_word_count(corpus: *const AltagCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.word_count())
}

/// # Safety
/// `corpus` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn altag_corpus_free(corpus: *mut AltagCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// A fresh tagger from preset `preset` (e.g. "tiny") with the vocabulary of `corpus`.
///
/// # Safety
/// `corpus` must be a live handle, `preset` a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn altag_model_new(
    corpus: *const AltagCorpus,
    preset: *const c_char,
    seed: u64,
    out: *mut *mut AltagModel,
) -> AltagStatus {
    guard(|| {
        let corpus = ref_arg(corpus)?;
        let config = ExperimentConfig {
            tagger: str_arg(preset)?.to_string(),
            seed,
            ..ExperimentConfig::default()
        };
        config.validate()?;
        let out = out_arg(out)?;
        let model = init_model(&config, &corpus.0)?;
        *out = Box::into_raw(Box::new(AltagModel { model, config }));
        Ok(())
    })
}

/// Trains for `epochs` passes over every sentence of `corpus`. The mean
/// per-word loss of the last epoch is written to `loss` when it is not null.
///
/// # Safety
/// `model` and `corpus` must be live handles; `loss` null or valid.
#[no_mangle]
pub unsafe extern "C" fn altag_model_train(
    model: *mut AltagModel,
    corpus: *const AltagCorpus,
    epochs: usize,
    seed: u64,
    loss: *mut f64,
) -> AltagStatus {
    guard(|| {
        let m = out_arg(model)?;
        let corpus = ref_arg(corpus)?;
        let all: Vec<&Sentence> = corpus.0.sentences.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = train_on(&mut m.model, &all, epochs, &m.config, &mut rng)?;
        if let Some(out) = loss.as_mut() {
            *out = l;
        }
        Ok(())
    })
}

/// Span F1 (0..100) of the model on `corpus`.
///
/// # Safety
/// `model` and `corpus` must be live handles and `f1` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn altag_model_evaluate(model: *const AltagModel, corpus: *const AltagCorpus, f1: *mut f64) -> AltagStatus {
    guard(|| {
        let m = ref_arg(model)?;
        let corpus = ref_arg(corpus)?;
        let out = out_arg(f1)?;
        *out = evaluate_span_f1(&m.model, &corpus.0)?.f1;
        Ok(())
    })
}

/// Predicted tag ids for sentence `index` of `corpus`. Writes the sentence
/// length to `len`; fails with `ALTAG_STATUS_BUFFER_TOO_SMALL` when `cap` is short.
///
/// # Safety
/// `tags` must hold `cap` elements; `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn altag_model_predict(
    model: *const AltagModel,
    corpus: *const AltagCorpus,
    index: usize,
    tags: *mut usize,
    cap: usize,
    len: *mut usize,
) -> AltagStatus {
    guard(|| {
        let m = ref_arg(model)?;
        let corpus = ref_arg(corpus)?;
        let len = out_arg(len)?;
        let s = corpus
            .0
            .sentences
            .get(index)
            .ok_or_else(|| fail(AltagStatus::InvalidArgument, "sentence index out of range"))?;
        let d = predict(&m.model, s)?;
        *len = d.tags.len();
        if cap < d.tags.len() {
            return Err(fail(AltagStatus::BufferTooSmall, "tag buffer too small"));
        }
        if tags.is_null() {
            return Err(fail(AltagStatus::NullPointer, "null tag buffer"));
        }
        std::slice::from_raw_parts_mut(tags, d.tags.len()).copy_from_slice(&d.tags);
        Ok(())
    })
}

/// Writes the NUL-terminated name of tag `id` into `buf`.
///
/// # Safety
/// `buf` must hold `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn altag_model_tag_name(model: *const AltagModel, id: usize, buf: *mut c_char, cap: usize) -> AltagStatus {
    guard(|| {
        let m = ref_arg(model)?;
        if id >= m.model.n_tags() {
            return Err(fail(AltagStatus::InvalidArgument, "tag id out of range"));
        }
        let name = m.model.vocab.tag(id).as_bytes();
        if buf.is_null() {
            return Err(fail(AltagStatus::NullPointer, "null buffer"));
        }
        if cap <= name.len() {
            return Err(fail(AltagStatus::BufferTooSmall, "name buffer too small"));
        }
        let dst = std::slice::from_raw_parts_mut(buf as *mut u8, name.len() + 1);
        dst[..name.len()].copy_from_slice(name);
        dst[name.len()] = 0;
        Ok(())
    })
}

/// Ranks every sentence of `pool` by `strategy` (most informative first) and
/// writes the sentence ids to `ids`. RAND yields id order.
///
/// # Safety
/// `ids` must hold `cap` elements; `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn altag_model_rank_pool(
    model: *const AltagModel,
    pool: *const AltagCorpus,
    strategy: AltagStrategy,
    bald_m: usize,
    seed: u64,
    ids: *mut usize,
    cap: usize,
    len: *mut usize,
) -> AltagStatus {
    guard(|| {
        let m = ref_arg(model)?;
        let pool = ref_arg(pool)?;
        let len = out_arg(len)?;
        let sents: Vec<&Sentence> = pool.0.sentences.iter().collect();
        let ranked = rank(score_pool(&m.model, &sents, strategy.into(), bald_m, seed)?);
        *len = ranked.len();
        if cap < ranked.len() {
            return Err(fail(AltagStatus::BufferTooSmall, "id buffer too small"));
        }
        if ids.is_null() && !ranked.is_empty() {
            return Err(fail(AltagStatus::NullPointer, "null id buffer"));
        }
        for (i, s) in ranked.iter().enumerate() {
            *ids.add(i) = s.sentence_id;
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn altag_model_save(model: *const AltagModel, path: *const c_char) -> AltagStatus {
    guard(|| {
        let m = ref_arg(model)?;
        m.model.save_file(Path::new(str_arg(path)?))?;
        Ok(())
    })
}

/// Loads a saved tagger; training settings revert to defaults.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn altag_model_load(path: *const c_char, out: *mut *mut AltagModel) -> AltagStatus {
    guard(|| {
        let path = str_arg(path)?;
        let out = out_arg(out)?;
        let model = TaggerModel::load_file(Path::new(path))?;
        *out = Box::into_raw(Box::new(AltagModel {
            model,
            config: ExperimentConfig::default(),
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn altag_model_free(model: *mut AltagModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Checks the streaming submodular maximizer against the exhaustive optimum
/// on `n_instances` random instances; writes the number of bound violations.
///
/// # Safety
/// `violations` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn altag_submod_check(
    seed: u64,
    n_instances: usize,
    max_pool: usize,
    eps: f64,
    violations: *mut usize,
) -> AltagStatus {
    guard(|| {
        let out = out_arg(violations)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bad = 0;
        for _ in 0..n_instances {
            if !check_guarantee(&random_instance(&mut rng, max_pool), eps)?.holds() {
                bad += 1;
            }
        }
        *out = bad;
        Ok(())
    })
}

use std::ffi::{CStr, CString};
use std::ptr;

use altag_ffi::*;

fn last_error() -> String {
    let p = altag_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn corpus_round_trip() {
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(altag_corpus_synthesize(3, 40, &mut c), AltagStatus::Ok);
        assert_eq!(altag_corpus_len(c), 40);
        assert!(altag_corpus_word_count(c) >= 40);
        altag_corpus_free(c);
        assert_eq!(altag_corpus_len(ptr::null()), 0);
        altag_corpus_free(ptr::null_mut());
    }
}

#[test]
fn bio_and_malformed_input() {
    let text = CString::new("John B-PER\nSmith I-PER\nleft O\n\nParis B-LOC\n").unwrap();
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(altag_corpus_parse(text.as_ptr(), 1, &mut c), AltagStatus::Ok);
        assert_eq!(altag_corpus_len(c), 2);
        assert_eq!(altag_corpus_word_count(c), 4);
        altag_corpus_free(c);
        // a missing tag column is a parse error
        let bad = CString::new("Kate\n\n").unwrap();
        let mut c = ptr::null_mut();
        assert_eq!(altag_corpus_parse(bad.as_ptr(), 0, &mut c), AltagStatus::Parse);
        assert!(c.is_null());
        assert!(!last_error().is_empty());
    }
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        assert_eq!(altag_corpus_synthesize(0, 5, ptr::null_mut()), AltagStatus::NullPointer);
        assert!(last_error().contains("null"));
        let mut m = ptr::null_mut();
        let preset = CString::new("tiny").unwrap();
        assert_eq!(altag_model_new(ptr::null(), preset.as_ptr(), 0, &mut m), AltagStatus::NullPointer);
    }
}

#[test]
fn unknown_preset_is_invalid_argument() {
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(altag_corpus_synthesize(1, 10, &mut c), AltagStatus::Ok);
        let mut m = ptr::null_mut();
        let preset = CString::new("enormous").unwrap();
        assert_eq!(altag_model_new(c, preset.as_ptr(), 0, &mut m), AltagStatus::InvalidArgument);
        assert!(m.is_null());
        altag_corpus_free(c);
    }
}

#[test]
fn train_predict_rank_save_load() {
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(altag_corpus_synthesize(5, 60, &mut c), AltagStatus::Ok);
        let preset = CString::new("tiny").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(altag_model_new(c, preset.as_ptr(), 7, &mut m), AltagStatus::Ok);
        let mut loss = f64::NAN;
        assert_eq!(altag_model_train(m, c, 2, 7, &mut loss), AltagStatus::Ok);
        assert!(loss.is_finite() && loss > 0.0);

        let mut f1 = -1.0;
        assert_eq!(altag_model_evaluate(m, c, &mut f1), AltagStatus::Ok);
        assert!((0.0..=100.0).contains(&f1));

        let mut len = 0;
        assert_eq!(altag_model_predict(m, c, 0, ptr::null_mut(), 0, &mut len), AltagStatus::BufferTooSmall);
        let mut tags = vec![0usize; len];
        assert_eq!(altag_model_predict(m, c, 0, tags.as_mut_ptr(), len, &mut len), AltagStatus::Ok);
        let mut name = [0i8; 32];
        assert_eq!(altag_model_tag_name(m, tags[0], name.as_mut_ptr().cast(), name.len()), AltagStatus::Ok);
        assert!(!CStr::from_ptr(name.as_ptr().cast()).to_bytes().is_empty());
        assert_eq!(
            altag_model_predict(m, c, 10_000, tags.as_mut_ptr(), len, &mut len),
            AltagStatus::InvalidArgument
        );

        let mut ids = vec![0usize; 60];
        let mut n = 0;
        assert_eq!(
            altag_model_rank_pool(m, c, AltagStrategy::Mnlp, 0, 1, ids.as_mut_ptr(), ids.len(), &mut n),
            AltagStatus::Ok
        );
        assert_eq!(n, 60);
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..60).collect::<Vec<_>>());

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.bin").to_str().unwrap()).unwrap();
        assert_eq!(altag_model_save(m, path.as_ptr()), AltagStatus::Ok);
        let mut m2 = ptr::null_mut();
        assert_eq!(altag_model_load(path.as_ptr(), &mut m2), AltagStatus::Ok);
        let mut f1b = -1.0;
        assert_eq!(altag_model_evaluate(m2, c, &mut f1b), AltagStatus::Ok);
        assert_eq!(f1, f1b);

        let missing = CString::new(dir.path().join("none.bin").to_str().unwrap()).unwrap();
        let mut m3 = ptr::null_mut();
        assert_eq!(altag_model_load(missing.as_ptr(), &mut m3), AltagStatus::Io);

        altag_model_free(m);
        altag_model_free(m2);
        altag_corpus_free(c);
    }
}

#[test]
fn submod_bound_holds() {
    let mut bad = usize::MAX;
    unsafe {
        assert_eq!(altag_submod_check(11, 30, 8, 0.1, &mut bad), AltagStatus::Ok);
    }
    assert_eq!(bad, 0);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/altag.h")).unwrap();
    for sym in [
        "altag_last_error_message",
        "altag_corpus_synthesize",
        "altag_model_new",
        "altag_model_rank_pool",
        "ALTAG_STATUS_OK",
        "typedef struct AltagModel AltagModel",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}

use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use natlex::corpus::{gen_corpus, SynthConfig};
use natlex::nat::train_nat;
use natlex::optim::TrainConfig;
use natlex_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = natlex_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_synth() -> SynthConfig {
    SynthConfig { src_vocab_size: 30, pairs: 300, test_pairs: 0, max_len: 8, mean_len: 5.0, ..SynthConfig::default() }
}

#[test]
fn corpus_align_and_query_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = gen_corpus(&small_synth()).unwrap();
    let (s, t) = (dir.path().join("c.src"), dir.path().join("c.tgt"));
    corpus.write(&s, &t).unwrap();

    let mut c = ptr::null_mut();
    assert_eq!(unsafe { natlex_corpus_load(cstr(&s).as_ptr(), cstr(&t).as_ptr(), &mut c) }, NatlexStatus::Ok);
    assert_eq!(unsafe { natlex_corpus_len(c) }, 300);
    assert!(natlex_last_error_message().is_null());

    let mut lex = ptr::null_mut();
    assert_eq!(unsafe { natlex_align(c, 5, 0.0, &mut lex) }, NatlexStatus::Ok);

    let f = corpus.src_vocab.token(corpus.pairs[0].source[0]).to_string();
    let mut total = 0.0;
    for id in 0..corpus.tgt_vocab.len() as u32 {
        let e = corpus.tgt_vocab.token(id);
        let (fc, ec) = (CString::new(f.as_str()).unwrap(), CString::new(e).unwrap());
        let mut p = -1.0;
        assert_eq!(unsafe { natlex_lexicon_prob(lex, fc.as_ptr(), ec.as_ptr(), &mut p) }, NatlexStatus::Ok);
        assert!((0.0..=1.0).contains(&p));
        total += p;
    }
    assert!((total - 1.0).abs() < 1e-9, "row sums to {total}");

    let out = dir.path().join("lex.tsv");
    assert_eq!(unsafe { natlex_lexicon_write(lex, cstr(&out).as_ptr()) }, NatlexStatus::Ok);
    assert!(std::fs::read_to_string(&out).unwrap().lines().count() > 0);

    unsafe {
        natlex_lexicon_free(lex);
        natlex_corpus_free(c);
        natlex_corpus_free(ptr::null_mut());
    }
}

#[test]
fn missing_files_and_null_arguments_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let missing = cstr(&dir.path().join("nope"));
    let mut c = ptr::null_mut();
    let st = unsafe { natlex_corpus_load(missing.as_ptr(), missing.as_ptr(), &mut c) };
    assert_ne!(st, NatlexStatus::Ok);
    assert!(c.is_null());
    assert!(last_error().contains("nope"));

    assert_eq!(unsafe { natlex_corpus_load(ptr::null(), missing.as_ptr(), &mut c) }, NatlexStatus::NullArgument);
    let mut lex = ptr::null_mut();
    assert_eq!(unsafe { natlex_align(ptr::null(), 5, 0.0, &mut lex) }, NatlexStatus::NullArgument);
    assert_eq!(unsafe { natlex_corpus_len(ptr::null()) }, 0);

    let mut m = ptr::null_mut();
    let st = unsafe { natlex_model_load(missing.as_ptr(), &mut m) };
    assert_eq!(st, NatlexStatus::NotFound);
    assert!(last_error().contains("checkpoint not found"));
}

#[test]
fn schedule_and_kl() {
    assert_eq!(natlex_lambda_at(0, 100), 1.0);
    assert_eq!(natlex_lambda_at(51, 100), 0.0);
    let expected = (100.0f64 / 22.0).ln() / 50.0f64.ln();
    assert!((natlex_lambda_at(10, 100) - expected).abs() < 1e-12);

    let q = [0.5, 0.5];
    let p = [0.25, 0.75];
    let mut kl = 0.0;
    assert_eq!(unsafe { natlex_kl(q.as_ptr(), p.as_ptr(), 2, &mut kl) }, NatlexStatus::Ok);
    let oracle = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
    assert!((kl - oracle).abs() < 1e-12);

    let zero = [0.0, 1.0];
    assert_eq!(unsafe { natlex_kl(q.as_ptr(), zero.as_ptr(), 2, &mut kl) }, NatlexStatus::Runtime);
}

#[test]
fn model_decode_and_lexical_query() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = gen_corpus(&small_synth()).unwrap();
    let cfg = TrainConfig { steps: 20, dim: 8, ..TrainConfig::default() };
    let params = train_nat(&corpus, &cfg, None, None).unwrap();
    let path = dir.path().join("model.ckpt");
    params.write(&path).unwrap();

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { natlex_model_load(cstr(&path).as_ptr(), &mut m) }, NatlexStatus::Ok);
    let size = unsafe { natlex_model_target_size(m) };
    assert_eq!(size, corpus.tgt_vocab.len());

    let mut dist = vec![0.0; size];
    let f = corpus.pairs[0].source[0];
    assert_eq!(unsafe { natlex_model_lexical_query(m, f, dist.as_mut_ptr(), size) }, NatlexStatus::Ok);
    assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(
        unsafe { natlex_model_lexical_query(m, f, dist.as_mut_ptr(), size - 1) },
        NatlexStatus::InvalidArgument
    );

    let src = &corpus.pairs[0].source;
    let mut len = 0usize;
    let st = unsafe { natlex_model_decode(m, src.as_ptr(), src.len(), ptr::null_mut(), 0, &mut len) };
    assert_eq!(st, NatlexStatus::BufferTooSmall);
    assert!(len > 0);
    let mut out = vec![0u32; len];
    let st = unsafe { natlex_model_decode(m, src.as_ptr(), src.len(), out.as_mut_ptr(), len, &mut len) };
    assert_eq!(st, NatlexStatus::Ok);
    assert_eq!(out, natlex::nat::decode(&params, src).tokens);

    unsafe { natlex_model_free(m) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/natlex.h")).unwrap();
    for name in [
        "natlex_corpus_load",
        "natlex_align",
        "natlex_lexicon_prob",
        "natlex_model_decode",
        "natlex_last_error_message",
        "typedef struct NatlexModel NatlexModel",
        "NATLEX_STATUS_BUFFER_TOO_SMALL = 7",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let v = unsafe { CStr::from_ptr(natlex_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

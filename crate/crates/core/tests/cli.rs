//! Runs the binary end to end. Every experiment command is run twice and its
//! CSV outputs compared byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &[&str] = &["--data-seed", "3", "--train-sentences", "150", "--test-sentences", "40"];
const QUICK: &[&str] = &["--rounds", "2", "--budget-per-round", "150", "--warm-start-fraction", "0.1"];

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_altag")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs `make(dir)` in two fresh directories and compares every listed file.
fn twice(files: &[&str], make: impl Fn(&Path) -> Vec<String>) -> Vec<Vec<u8>> {
    let dirs = [TempDir::new().unwrap(), TempDir::new().unwrap()];
    for d in &dirs {
        let args = make(d.path());
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    }
    files
        .iter()
        .map(|f| {
            let a = fs::read(dirs[0].path().join(f)).unwrap();
            let b = fs::read(dirs[1].path().join(f)).unwrap();
            assert_eq!(a, b, "{f} differs between runs");
            assert!(!a.is_empty());
            a
        })
        .collect()
}

fn args(parts: &[&[&str]], extra: &[String]) -> Vec<String> {
    parts.iter().flat_map(|p| p.iter().map(|x| x.to_string())).chain(extra.iter().cloned()).collect()
}

fn path(dir: &Path, name: &str) -> String {
    s(&dir.join(name)).to_string()
}

#[test]
fn synth_data_is_reproducible() {
    let out = twice(&["c.txt"], |d| {
        args(&[&["synth-data", "--seed", "4", "--sentences", "30"]], &["--out".into(), path(d, "c.txt")])
    });
    let text = String::from_utf8(out[0].clone()).unwrap();
    assert!(text.lines().any(|l| l.ends_with(" O")));
}

#[test]
fn active_run_outputs_are_reproducible() {
    for strategy in ["RAND", "MNLP", "BALD", "SUBMOD"] {
        let out = twice(&["curve.csv", "scores.csv", "genres.csv"], |d| {
            args(
                &[&["active-run", "--seed", "1", "--strategy", strategy, "--bald-m", "3"], SMALL, QUICK],
                &[
                    "--out".into(),
                    path(d, "curve.csv"),
                    "--scores-out".into(),
                    path(d, "scores.csv"),
                    "--genres-out".into(),
                    path(d, "genres.csv"),
                ],
            )
        });
        let curve = String::from_utf8(out[0].clone()).unwrap();
        assert_eq!(curve.lines().next(), Some("round,words,percent,f1,seconds"));
        assert_eq!(curve.lines().count(), 4, "{strategy}");
        let scores = String::from_utf8(out[1].clone()).unwrap();
        assert_eq!(scores.lines().next(), Some("sentence_id,strategy,value,length"));
    }
}

#[test]
fn replicate_and_genre_shift_are_reproducible() {
    let out = twice(&["agg.csv", "curves/curve_MNLP_seed0.csv", "curves/curve_MNLP_seed1.csv"], |d| {
        args(
            &[&["replicate", "--seed", "0", "--n-seeds", "2"], SMALL, QUICK],
            &["--out".into(), path(d, "agg.csv"), "--curves-dir".into(), path(d, "curves")],
        )
    });
    assert!(String::from_utf8(out[0].clone()).unwrap().starts_with("round,n,words_mean"));

    let out = twice(&["genre.csv"], |d| {
        args(
            &[&["genre-shift", "--seed", "2", "--excluded", "news", "--top-budget", "200"], SMALL, QUICK],
            &["--out".into(), path(d, "genre.csv")],
        )
    });
    let text = String::from_utf8(out[0].clone()).unwrap();
    assert!(text.starts_with("warm_start,genre,count"));
    assert!(text.contains("biased,") && text.contains("unbiased,"));
}

#[test]
fn train_eval_and_checks_are_reproducible() {
    let out = twice(&["loss.csv", "eval.csv"], |d| {
        let model = path(d, "m.json");
        ok(&args(
            &[&["train", "--seed", "0", "--epochs", "2"], SMALL],
            &["--model".into(), model.clone(), "--out".into(), path(d, "loss.csv")],
        )
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>());
        args(&[&["eval", "--seed", "0"], SMALL], &["--model".into(), model, "--out".into(), path(d, "eval.csv")])
    });
    assert_eq!(String::from_utf8(out[0].clone()).unwrap().lines().count(), 3);

    let out = twice(&["sub.csv"], |d| {
        args(&[&["submod-check", "--seed", "0", "--instances", "20", "--max-pool", "8"]], &["--out".into(), path(d, "sub.csv")])
    });
    let text = String::from_utf8(out[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));

    let out = twice(&["grad.csv"], |d| {
        args(&[&["grad-check", "--seed", "0", "--sentences", "2", "--limit", "4"]], &["--out".into(), path(d, "grad.csv")])
    });
    assert!(String::from_utf8(out[0].clone()).unwrap().starts_with("checked,max_rel_err"));
}

#[test]
fn reads_corpora_from_files() {
    let d = TempDir::new().unwrap();
    let (train, test) = (d.path().join("train.txt"), d.path().join("test.txt"));
    ok(&["synth-data", "--seed", "1", "--sentences", "80", "--scheme", "BIO", "--out", s(&train)]);
    ok(&["synth-data", "--seed", "2", "--sentences", "20", "--scheme", "BIO", "--out", s(&test)]);
    let curve = d.path().join("curve.csv");
    ok(&[
        "active-run", "--seed", "0", "--train", s(&train), "--test", s(&test), "--scheme", "BIO", "--rounds", "1",
        "--budget-per-round", "100", "--warm-start-fraction", "0.2", "--out", s(&curve),
    ]);
    assert_eq!(fs::read_to_string(&curve).unwrap().lines().count(), 3);
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    let d = TempDir::new().unwrap();
    let out_path: PathBuf = d.path().join("x.csv");
    let missing_seed = run(&["active-run", "--out", s(&out_path)]);
    assert!(!missing_seed.status.success());

    let bad = run(&["active-run", "--seed", "0", "--strategy", "EGL", "--out", s(&out_path)]);
    assert!(!bad.status.success());
    assert!(!bad.stderr.is_empty());

    let no_file = run(&["active-run", "--seed", "0", "--train", "/nonexistent/corpus.txt", "--out", s(&out_path)]);
    assert!(!no_file.status.success());
    assert!(String::from_utf8_lossy(&no_file.stderr).starts_with("altag: "));
}

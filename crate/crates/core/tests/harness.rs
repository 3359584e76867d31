mod common;

use std::collections::BTreeSet;

use altag::active::SelectionResult;
use altag::corpus::{Corpus, Span};
use altag::harness::{
    aggregate, bench_decoder, genre_histogram, replicate, run_active_learning, span_f1, warm_start_ids, BenchSettings,
    CurveRecord, ExperimentConfig, LearningCurve, QueryStrategy, UNKNOWN_GENRE,
};
use altag::tagger::TaggerConfig;
use common::*;

fn span(ty: &str, start: usize, end: usize) -> Span {
    Span { ty: ty.into(), start, end }
}

#[test]
fn f1_arithmetic() {
    let gold = vec![vec![span("PER", 0, 1), span("LOC", 3, 4)]];
    let r = span_f1(&gold, &gold);
    assert_eq!((r.precision, r.recall, r.f1), (100.0, 100.0, 100.0));

    let r = span_f1(&gold, &[vec![]]);
    assert_eq!(r.f1, 0.0);

    let pred = vec![vec![span("PER", 0, 1), span("LOC", 2, 4)]];
    let r = span_f1(&gold, &pred);
    assert_eq!((r.precision, r.recall, r.f1), (50.0, 50.0, 50.0));
    assert_eq!(r.per_type["LOC"].true_pos, 0);

    // a type mismatch on the right boundaries is still wrong
    let r = span_f1(&gold, &[vec![span("ORG", 0, 1)]]);
    assert_eq!(r.f1, 0.0);
}

fn small_config(strategy: QueryStrategy) -> ExperimentConfig {
    ExperimentConfig {
        strategy,
        rounds: 2,
        budget_per_round: 150,
        warm_start_fraction: 0.1,
        passes_per_round: 1,
        warm_start_epochs: 2,
        seed: 5,
        bald_m: 3,
        ..Default::default()
    }
}

fn corpora() -> (Corpus, Corpus) {
    (small_corpus(100, 200), small_corpus(200, 60))
}

fn csv_of(curve: &LearningCurve) -> Vec<u8> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn curves_are_byte_identical_across_runs() {
    let (corpus, test) = corpora();
    for strategy in [
        QueryStrategy::Rand,
        QueryStrategy::Lc,
        QueryStrategy::Mnlp,
        QueryStrategy::Bald,
        QueryStrategy::Submod,
    ] {
        let cfg = small_config(strategy);
        let a = run_active_learning(&cfg, &corpus, &test).unwrap();
        let b = run_active_learning(&cfg, &corpus, &test).unwrap();
        assert_eq!(csv_of(&a), csv_of(&b), "{strategy:?}");
        assert_eq!(a.selections, b.selections);
    }
}

#[test]
fn curve_bookkeeping() {
    let (corpus, test) = corpora();
    for strategy in [QueryStrategy::Mnlp, QueryStrategy::Submod] {
        let cfg = small_config(strategy);
        let curve = run_active_learning(&cfg, &corpus, &test).unwrap();
        assert_eq!(curve.records.len(), 3);
        assert_eq!(curve.selections.len(), 2);

        let warm = warm_start_ids(&corpus, cfg.warm_start_fraction, None, cfg.seed);
        assert_eq!(warm.len(), 20);
        let warm_words: usize = warm.iter().map(|&i| corpus.sentences[i].len()).sum();
        assert_eq!(curve.records[0].words, warm_words);

        let mut seen = warm.clone();
        let total = corpus.word_count() as f64;
        for (rec, sel) in curve.records.windows(2).zip(&curve.selections) {
            assert_eq!(rec[1].words, rec[0].words + sel.words_used);
            assert!(sel.words_used <= cfg.budget_per_round);
            for id in &sel.chosen {
                assert!(seen.insert(*id), "id {id} selected twice");
            }
        }
        for r in &curve.records {
            assert!((r.percent - 100.0 * r.words as f64 / total).abs() < 1e-9);
            assert!((0.0..=100.0).contains(&r.f1));
            assert_eq!(r.seconds, 0.0);
        }
    }
}

#[test]
fn zero_rounds_gives_warm_start_only() {
    let (corpus, test) = corpora();
    let cfg = ExperimentConfig { rounds: 0, ..small_config(QueryStrategy::Lc) };
    let curve = run_active_learning(&cfg, &corpus, &test).unwrap();
    assert_eq!(curve.records.len(), 1);
    assert_eq!(curve.records[0].round, 0);
    assert!(curve.selections.is_empty());
    assert_eq!(curve.auc(), 0.0);
}

#[test]
fn exhausted_pool_truncates() {
    let corpus = small_corpus(7, 30);
    let test = small_corpus(8, 10);
    let cfg = ExperimentConfig { rounds: 5, budget_per_round: 100_000, ..small_config(QueryStrategy::Rand) };
    let curve = run_active_learning(&cfg, &corpus, &test).unwrap();
    assert_eq!(curve.records.len(), 2);
    assert_eq!(curve.records[1].words, corpus.word_count());
    assert!((curve.records[1].percent - 100.0).abs() < 1e-9);
}

#[test]
fn single_seed_replication_matches_curve() {
    let (corpus, test) = corpora();
    let cfg = small_config(QueryStrategy::Mnlp);
    let rep = replicate(&cfg, &corpus, &test, 1).unwrap();
    let curve = run_active_learning(&cfg, &corpus, &test).unwrap();
    assert_eq!(rep.curves[0], curve);
    for (agg, rec) in rep.rounds.iter().zip(&curve.records) {
        assert_eq!(agg.n, 1);
        assert_eq!(agg.f1_std, 0.0);
        assert_eq!(agg.f1_mean, rec.f1);
        assert_eq!(agg.words_mean, rec.words as f64);
    }
    assert!(replicate(&cfg, &corpus, &test, 0).is_err());
}

#[test]
fn aggregate_of_constant_curves() {
    let curve = |seed| LearningCurve {
        strategy: QueryStrategy::Rand,
        seed,
        records: (0..4)
            .map(|r| CurveRecord { round: r, words: 10 * r, percent: r as f64, f1: 20.0 + r as f64, seconds: 0.0 })
            .collect(),
        selections: vec![],
    };
    let agg = aggregate(&[curve(0), curve(1), curve(2)]);
    assert_eq!(agg.len(), 4);
    for (r, a) in agg.iter().enumerate() {
        assert_eq!(a.n, 3);
        assert_eq!(a.f1_mean, 20.0 + r as f64);
        assert_eq!(a.f1_std, 0.0);
    }
}

#[test]
fn auc_is_a_trapezoid() {
    let curve = LearningCurve {
        strategy: QueryStrategy::Rand,
        seed: 0,
        records: [(0.0, 10.0), (2.0, 30.0), (5.0, 30.0)]
            .iter()
            .enumerate()
            .map(|(i, &(percent, f1))| CurveRecord { round: i, words: i, percent, f1, seconds: 0.0 })
            .collect(),
        selections: vec![],
    };
    assert!((curve.auc() - (40.0 + 90.0)).abs() < 1e-12);
    assert_eq!(curve.percent_reaching(30.0), Some(2.0));
    assert_eq!(curve.percent_reaching(31.0), None);
}

#[test]
fn genre_histograms() {
    let mut corpus = small_corpus(3, 50);
    let all = SelectionResult { chosen: (0..50).collect(), words_used: 0, budget: 0 };
    let h = genre_histogram(&all, &corpus);
    assert_eq!(h.values().sum::<usize>(), 50);
    assert!(h.len() <= 2);

    for s in corpus.sentences.iter_mut().filter(|s| s.genre.as_deref() == Some("news")) {
        s.genre = None;
    }
    let news = small_corpus(3, 50).sentences.iter().filter(|s| s.genre.as_deref() == Some("news")).count();
    let h = genre_histogram(&all, &corpus);
    assert_eq!(h.get(UNKNOWN_GENRE).copied().unwrap_or(0), news);
    assert_eq!(h.values().sum::<usize>(), 50);

    let chat: Vec<usize> =
        corpus.sentences.iter().filter(|s| s.genre.as_deref() == Some("chat")).map(|s| s.id).collect();
    let only = SelectionResult { chosen: chat.clone(), words_used: 0, budget: 0 };
    let h = genre_histogram(&only, &corpus);
    assert_eq!(h.len(), 1);
    assert_eq!(h["chat"], chat.len());
}

#[test]
fn warm_start_respects_exclusion() {
    let corpus = small_corpus(4, 300);
    let ids = warm_start_ids(&corpus, 0.1, Some("news"), 9);
    assert_eq!(ids.len(), 30);
    assert!(ids.iter().all(|&i| corpus.sentences[i].genre.as_deref() == Some("chat")));
    assert_eq!(ids, warm_start_ids(&corpus, 0.1, Some("news"), 9));
    let other: BTreeSet<usize> = warm_start_ids(&corpus, 0.1, Some("news"), 10);
    assert_ne!(ids, other);
}

#[test]
fn bench_table_shape() {
    let settings = BenchSettings { n_sentences: 20, repeats: 3, ..Default::default() };
    let rows = bench_decoder(&[2, 3], &TaggerConfig::tiny(), &settings).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].tags, 1 + 8);
    assert_eq!(rows[2].tags, 1 + 12);
    assert!(rows.iter().all(|r| r.sec_per_epoch > 0.0));
    let few = BenchSettings { repeats: 2, ..settings };
    assert!(bench_decoder(&[2], &TaggerConfig::tiny(), &few).is_err());
}

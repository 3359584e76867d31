mod common;

use altag::nnkernel::crf::{conditional_log_probs, log_partition, viterbi};
use altag::nnkernel::Tensor;
use altag::tagger::{crf_log_partition, crf_scores, crf_viterbi, decode_greedy, encode_sentence, Decoder};
use altag::nnkernel::Mode;
use altag::Error;
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn partition_and_viterbi_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..600 {
        let (em, a) = random_crf(&mut rng, 6, 4);
        let oracle = enumerate_crf(&em, &a);
        let log_z = log_partition(&em, &a).unwrap();
        assert!((log_z - oracle.log_z).abs() <= 1e-8, "{log_z} vs {}", oracle.log_z);
        let (tags, score) = viterbi(&em, &a).unwrap();
        assert_eq!(tags, oracle.best);
        assert!((score - oracle.best_score).abs() <= 1e-8);
        assert!(score <= log_z + 1e-12);
    }
}

#[test]
fn probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let (em, a) = random_crf(&mut rng, 5, 3);
        let log_z = log_partition(&em, &a).unwrap();
        let total: f64 = all_sequences(em.rows(), em.cols())
            .iter()
            .map(|s| (crf_score(&em, &a, s) - log_z).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
    }
}

#[test]
fn conditionals_are_normalized_and_telescope() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let (em, a) = random_crf(&mut rng, 5, 4);
        let (n, t) = (em.rows(), em.cols());
        let log_z = log_partition(&em, &a).unwrap();
        for seq in all_sequences(n, t).iter().step_by(7) {
            let steps = conditional_log_probs(&em, &a, seq).unwrap();
            let sum: f64 = steps.iter().sum();
            assert!((sum - (crf_score(&em, &a, seq) - log_z)).abs() < 1e-9);
            // each factor is normalized over the tag at its position
            for i in 0..n {
                let mut alt = seq.clone();
                let mass: f64 = (0..t)
                    .map(|k| {
                        alt[i] = k;
                        conditional_log_probs(&em, &a, &alt).unwrap()[i].exp()
                    })
                    .sum();
                assert!((mass - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn hand_cases() {
    let zeros = |n, t| Tensor::new(vec![n, t], vec![0.0; n * t]).unwrap();
    let z = log_partition(&zeros(2, 2), &zeros(2, 2)).unwrap();
    assert!((z - 4f64.ln()).abs() < 1e-12);
    let s = Tensor::new(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
    let expect = log_sum_exp(&[0.5, -1.0, 2.0]);
    assert!((log_partition(&s, &zeros(3, 3)).unwrap() - expect).abs() < 1e-12);
    // all-zero scores: lowest-id sequence
    assert_eq!(viterbi(&zeros(3, 3), &zeros(3, 3)).unwrap().0, vec![0, 0, 0]);
}

#[test]
fn tagger_crf_matches_enumeration() {
    let corpus = small_corpus(11, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..4 {
        let model = random_tagger(seed, &corpus, Some(Decoder::Crf), 3.0);
        for len in 1..=3 {
            let s = sentence_of_len(&corpus, 0, len, &mut rng);
            let enc = encode_sentence(&model, &s, Mode::Eval, &mut rng).unwrap();
            let (em, a) = crf_scores(&enc, &model).unwrap();
            let oracle = enumerate_crf(&em, &a);
            assert!((crf_log_partition(&enc, &model).unwrap() - oracle.log_z).abs() < 1e-8);
            let d = crf_viterbi(&enc, &model).unwrap();
            assert_eq!(d.tags, oracle.best);
            assert!((d.log_prob - (oracle.best_score - oracle.log_z)).abs() < 1e-8);
            let steps: f64 = d.step_log_probs.iter().sum();
            assert!((steps - d.log_prob).abs() < 1e-9);
        }
    }
}

#[test]
fn decoder_kind_is_checked() {
    let corpus = small_corpus(3, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let lstm = random_tagger(0, &corpus, None, 1.0);
    let crf = random_tagger(0, &corpus, Some(Decoder::Crf), 1.0);
    let s = &corpus.sentences[0];
    let e1 = encode_sentence(&lstm, s, Mode::Eval, &mut rng).unwrap();
    let e2 = encode_sentence(&crf, s, Mode::Eval, &mut rng).unwrap();
    assert!(matches!(crf_log_partition(&e1, &lstm), Err(Error::WrongDecoder(_))));
    assert!(matches!(crf_viterbi(&e1, &lstm), Err(Error::WrongDecoder(_))));
    assert!(matches!(decode_greedy(&e2, &crf), Err(Error::WrongDecoder(_))));
}

//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod grad;

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use altag::corpus::{build_vocabulary, synthesize_corpus, Corpus, Sentence, TemplateSpec};
use altag::nnkernel::Tensor;
use altag::submod::{Kernel, SubmodInstance};
use altag::tagger::{Decoder, StepModel, TaggerConfig, TaggerModel};
use altag::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Every sequence of length `n` over `t` symbols, in lexicographic order.
pub fn all_sequences(n: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..t).map(move |k| {
                    let mut q = p.clone();
                    q.push(k);
                    q
                })
            })
            .collect();
    }
    out
}

/// Chain score written out from the definition: emissions plus transitions
/// between consecutive tags, nothing at the ends.
pub fn crf_score(em: &Tensor, a: &Tensor, tags: &[usize]) -> f64 {
    let t = em.cols();
    let e: f64 = tags.iter().enumerate().map(|(i, &k)| em.data()[i * t + k]).sum();
    let tr: f64 = tags.windows(2).map(|w| a.data()[w[0] * t + w[1]]).sum();
    e + tr
}

pub struct CrfEnumeration {
    pub log_z: f64,
    pub best: Vec<usize>,
    pub best_score: f64,
}

pub fn enumerate_crf(em: &Tensor, a: &Tensor) -> CrfEnumeration {
    let seqs = all_sequences(em.rows(), em.cols());
    let scores: Vec<f64> = seqs.iter().map(|s| crf_score(em, a, s)).collect();
    let (bi, &best_score) = scores
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, s)| if *s > *acc.1 { (i, s) } else { acc });
    CrfEnumeration {
        log_z: log_sum_exp(&scores),
        best: seqs[bi].clone(),
        best_score,
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Emissions `[n × t]` and transitions `[t × t]` with `1 ≤ n ≤ max_n`, `1 ≤ t ≤ max_t`.
pub fn random_crf(rng: &mut ChaCha8Rng, max_n: usize, max_t: usize) -> (Tensor, Tensor) {
    let n = rng.gen_range(1..=max_n);
    let t = rng.gen_range(1..=max_t);
    let scale = [0.1, 1.0, 5.0][rng.gen_range(0..3)];
    (random_tensor(rng, &[n, t], scale), random_tensor(rng, &[t, t], scale))
}

/// A locally normalized tag model whose distribution at each step is a
/// pseudo-random function of the whole prefix, like an LSTM decoder.
pub struct HashStepModel {
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub sharpness: f64,
}

impl StepModel for HashStepModel {
    type State = Vec<usize>;

    fn len(&self) -> usize {
        self.n
    }

    fn start(&self) -> Vec<usize> {
        Vec::new()
    }

    fn step(&self, state: &Vec<usize>, prev: Option<usize>, pos: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        // the state holds the tags before `prev`
        let mut history = state.clone();
        history.extend(prev);
        assert_eq!(pos, history.len());
        let mut h = DefaultHasher::new();
        (self.seed, &history).hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let logits: Vec<f64> = (0..self.t).map(|_| self.sharpness * rng.gen_range(-1.0..1.0)).collect();
        let z = log_sum_exp(&logits);
        Ok((history, logits.iter().map(|l| l - z).collect()))
    }
}

/// Log-probability of a full sequence under a step model, by teacher forcing.
pub fn sequence_log_prob<S: StepModel>(model: &S, tags: &[usize]) -> f64 {
    let mut state = model.start();
    let mut prev = None;
    let mut total = 0.0;
    for (pos, &k) in tags.iter().enumerate() {
        let (next, lp) = model.step(&state, prev, pos).unwrap();
        total += lp[k];
        state = next;
        prev = Some(k);
    }
    total
}

/// Highest-probability sequence by enumeration; the first in lexicographic
/// order wins exact ties.
pub fn exhaustive_argmax<S: StepModel>(model: &S, t: usize) -> (Vec<usize>, f64) {
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for seq in all_sequences(model.len(), t) {
        let lp = sequence_log_prob(model, &seq);
        if lp > best.1 {
            best = (seq, lp);
        }
    }
    best
}

pub fn small_corpus(seed: u64, n: usize) -> Corpus {
    synthesize_corpus(seed, n, &TemplateSpec::desk()).unwrap()
}

/// An untrained tiny tagger whose weights are scaled by `sharpen` so the
/// output distributions are far from uniform.
pub fn random_tagger(seed: u64, corpus: &Corpus, decoder: Option<Decoder>, sharpen: f64) -> TaggerModel {
    let mut cfg = TaggerConfig::preset("tiny").unwrap();
    if let Some(d) = decoder {
        cfg = cfg.with_decoder(d);
    }
    let vocab = build_vocabulary(corpus, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = TaggerModel::new(cfg, vocab, None, &mut rng).unwrap();
    let ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();
    for id in ids {
        for v in model.params.get_mut(id).tensor.data_mut() {
            *v = *v * sharpen + 0.05 * rng.gen_range(-1.0..1.0);
        }
    }
    model
}

/// A sentence of `len` tokens drawn from `corpus`, all tagged `O`.
pub fn sentence_of_len(corpus: &Corpus, id: usize, len: usize, rng: &mut ChaCha8Rng) -> Sentence {
    let words: Vec<&String> = corpus.sentences.iter().flat_map(|s| &s.tokens).collect();
    let tokens: Vec<String> = (0..len).map(|_| words[rng.gen_range(0..words.len())].clone()).collect();
    Sentence {
        id,
        tags: vec!["O".into(); len],
        tokens,
        genre: None,
    }
}

/// Utility written from the definition on raw embeddings: similarities from
/// the kernel and the pairwise distance cap, coverage gain over the labeled set.
pub fn oracle_utility(inst: &SubmodInstance, set: &BTreeSet<usize>) -> f64 {
    let emb = &inst.embeddings;
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        match inst.kernel {
            Kernel::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            _ => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
        }
    };
    let scope: Vec<usize> = inst.unlabeled_ids.union(&inst.labeled_ids).copied().collect();
    let mut d: f64 = 0.0;
    for &i in &scope {
        for &j in &scope {
            d = d.max(dist(&emb[&i], &emb[&j]));
        }
    }
    let sim = |i: usize, j: usize| -> f64 {
        let (a, b) = (&emb[&i], &emb[&j]);
        match inst.kernel {
            Kernel::Cosine => {
                let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                (1.0 + dot / (na * nb)).max(0.0)
            }
            _ => d - dist(a, b),
        }
    };
    let mut total = 0.0;
    for &i in &inst.unlabeled_ids {
        let u = inst.weights.as_ref().map_or(1.0, |w| w[&i]);
        let base = inst.labeled_ids.iter().map(|&l| sim(i, l)).fold(0.0, f64::max);
        let with = set.iter().map(|&s| sim(i, s)).fold(base, f64::max);
        total += u * (with - base);
    }
    total
}

/// Subsets of `ids` (all of them; callers keep `ids` small).
pub fn subsets(ids: &BTreeSet<usize>) -> Vec<BTreeSet<usize>> {
    let v: Vec<usize> = ids.iter().copied().collect();
    (0..1u64 << v.len())
        .map(|mask| v.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &x)| x).collect())
        .collect()
}

pub fn oracle_opt(inst: &SubmodInstance) -> f64 {
    subsets(&inst.candidate_ids)
        .iter()
        .filter(|s| s.iter().map(|i| inst.costs[i]).sum::<usize>() <= inst.budget)
        .map(|s| oracle_utility(inst, s))
        .fold(0.0, f64::max)
}

pub fn costs_of(inst: &SubmodInstance, set: &BTreeSet<usize>) -> usize {
    set.iter().map(|i| inst.costs[i]).sum()
}

pub fn random_subset(rng: &mut ChaCha8Rng, ids: &BTreeSet<usize>, p: f64) -> BTreeSet<usize> {
    ids.iter().copied().filter(|_| rng.gen_bool(p)).collect()
}

pub type Histogram = BTreeMap<String, usize>;

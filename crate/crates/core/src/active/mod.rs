//! Uncertainty scores and budgeted selection from the unlabeled pool.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::nnkernel::Mode;
use crate::tagger::{decode, encode_sentence, predict, Decoding, TaggerModel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    Rand,
    Lc,
    Mnlp,
    Bald,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Rand => "RAND",
            Strategy::Lc => "LC",
            Strategy::Mnlp => "MNLP",
            Strategy::Bald => "BALD",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RAND" => Ok(Strategy::Rand),
            "LC" => Ok(Strategy::Lc),
            "MNLP" => Ok(Strategy::Mnlp),
            "BALD" => Ok(Strategy::Bald),
            _ => Err(Error::Param(format!("unknown strategy {s:?}"))),
        }
    }
}

impl Strategy {
    /// Whether a smaller value means "select first".
    pub fn ascending(self) -> bool {
        matches!(self, Strategy::Mnlp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub sentence_id: usize,
    pub strategy: Strategy,
    pub value: f64,
    /// Real word count (annotation cost).
    pub length: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: Vec<usize>,
    pub words_used: usize,
    pub budget: usize,
}

/// `1 − P(greedy sequence)`.
pub fn lc_value(d: &Decoding) -> f64 {
    1.0 - d.log_prob.exp()
}

/// Mean per-position log-probability of the greedy sequence.
pub fn mnlp_value(d: &Decoding) -> f64 {
    if d.step_log_probs.is_empty() {
        return 0.0;
    }
    d.step_log_probs.iter().sum::<f64>() / d.step_log_probs.len() as f64
}

/// Mean over positions of `1 − (top vote count)/M`, given `M` tag sequences.
pub fn bald_value(passes: &[Vec<usize>]) -> f64 {
    let m = passes.len();
    let n = passes.first().map_or(0, Vec::len);
    if m == 0 || n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut counts = std::collections::BTreeMap::new();
    for i in 0..n {
        counts.clear();
        for p in passes {
            *counts.entry(p[i]).or_insert(0usize) += 1;
        }
        let top = counts.values().copied().max().unwrap_or(0);
        total += 1.0 - top as f64 / m as f64;
    }
    total / n as f64
}

fn make(sentence: &Sentence, strategy: Strategy, value: f64) -> UncertaintyScore {
    UncertaintyScore {
        sentence_id: sentence.id,
        strategy,
        value,
        length: sentence.len(),
    }
}

pub fn score_lc(model: &TaggerModel, sentence: &Sentence) -> Result<UncertaintyScore> {
    Ok(make(sentence, Strategy::Lc, lc_value(&predict(model, sentence)?)))
}

pub fn score_mnlp(model: &TaggerModel, sentence: &Sentence) -> Result<UncertaintyScore> {
    Ok(make(sentence, Strategy::Mnlp, mnlp_value(&predict(model, sentence)?)))
}

/// `m` Monte Carlo dropout passes (dropout on, word-drop off), each decoded greedily.
pub fn score_bald<R: Rng + ?Sized>(
    model: &TaggerModel,
    sentence: &Sentence,
    m: usize,
    rng: &mut R,
) -> Result<UncertaintyScore> {
    if m < 2 {
        return Err(Error::Param(format!("BALD needs at least 2 passes, got {m}")));
    }
    let passes = (0..m)
        .map(|_| {
            let enc = encode_sentence(model, sentence, Mode::Stochastic, rng)?;
            Ok(decode(&enc, model)?.tags)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(make(sentence, Strategy::Bald, bald_value(&passes)))
}

/// Independent rng stream for one sentence, derived from a base seed.
pub fn sentence_rng(seed: u64, sentence_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sentence_id as u64);
    rng
}

/// Scores every sentence of `pool` against a frozen model. Sentences are
/// scored in parallel; BALD draws from a per-sentence stream of `seed`, so the
/// result does not depend on scheduling. `Rand` yields zero values.
pub fn score_pool(
    model: &TaggerModel,
    pool: &[&Sentence],
    strategy: Strategy,
    bald_m: usize,
    seed: u64,
) -> Result<Vec<UncertaintyScore>> {
    pool.par_iter()
        .map(|s| match strategy {
            Strategy::Rand => Ok(make(s, Strategy::Rand, 0.0)),
            Strategy::Lc => score_lc(model, s),
            Strategy::Mnlp => score_mnlp(model, s),
            Strategy::Bald => score_bald(model, s, bald_m, &mut sentence_rng(seed, s.id)),
        })
        .collect()
}

/// Scores in selection order: by value (ascending for MNLP, descending
/// otherwise), ties by sentence id.
pub fn rank(mut scores: Vec<UncertaintyScore>) -> Vec<UncertaintyScore> {
    scores.sort_by(|a, b| {
        let ord = a.value.total_cmp(&b.value);
        let ord = if a.strategy.ascending() { ord } else { ord.reverse() };
        ord.then(a.sentence_id.cmp(&b.sentence_id))
    });
    scores
}

/// Walks `(id, length)` pairs in order, taking each that still fits the
/// remaining budget and skipping those that do not.
pub fn fill_budget(order: impl IntoIterator<Item = (usize, usize)>, budget: usize) -> SelectionResult {
    let mut out = SelectionResult {
        budget,
        ..Default::default()
    };
    for (id, len) in order {
        if out.words_used + len <= budget {
            out.chosen.push(id);
            out.words_used += len;
        }
    }
    out
}

/// Budgeted selection from `pool`, excluding `labeled` ids. `rng` drives the
/// RAND shuffle and seeds BALD's per-sentence streams.
pub fn select<R: Rng + ?Sized>(
    strategy: Strategy,
    pool: &[&Sentence],
    labeled: &BTreeSet<usize>,
    model: &TaggerModel,
    budget_words: usize,
    bald_m: usize,
    rng: &mut R,
) -> Result<SelectionResult> {
    let mut seen = BTreeSet::new();
    let mut pool: Vec<&Sentence> = pool
        .iter()
        .copied()
        .filter(|s| !labeled.contains(&s.id) && seen.insert(s.id))
        .collect();
    pool.sort_by_key(|s| s.id);
    if strategy == Strategy::Rand {
        pool.shuffle(rng);
        return Ok(fill_budget(pool.iter().map(|s| (s.id, s.len())), budget_words));
    }
    let seed = rng.gen::<u64>();
    let scores = rank(score_pool(model, &pool, strategy, bald_m, seed)?);
    Ok(fill_budget(scores.iter().map(|s| (s.sentence_id, s.length)), budget_words))
}

/// CSV with header `sentence_id,strategy,value,length`.
pub fn write_scores_csv<W: Write>(scores: &[UncertaintyScore], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sentence_id", "strategy", "value", "length"])?;
    for s in scores {
        out.write_record([
            s.sentence_id.to_string(),
            s.strategy.to_string(),
            format!("{:?}", s.value),
            s.length.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(steps: &[f64]) -> Decoding {
        Decoding {
            tags: vec![0; steps.len()],
            log_prob: steps.iter().sum(),
            step_log_probs: steps.to_vec(),
            step_dists: vec![],
        }
    }

    #[test]
    fn lc_and_mnlp_arithmetic() {
        assert_eq!(lc_value(&dec(&[0.0])), 0.0);
        assert!((lc_value(&dec(&[0.8f64.ln()])) - 0.2).abs() < 1e-12);
        let h = 0.5f64.ln();
        assert!((mnlp_value(&dec(&[h, h])) - h).abs() < 1e-12);
        for k in 1..6 {
            assert!((mnlp_value(&dec(&vec![-0.3; k])) + 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn bald_votes() {
        assert_eq!(bald_value(&[vec![1, 2], vec![1, 2], vec![1, 2]]), 0.0);
        let v = bald_value(&[vec![0], vec![0], vec![1], vec![2]]);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn budget_rule() {
        let r = fill_budget([(0, 5), (1, 5), (2, 5)], 10);
        assert_eq!(r.chosen, [0, 1]);
        assert_eq!(r.words_used, 10);
        assert!(fill_budget([(0, 5)], 0).chosen.is_empty());
        // skip and continue
        assert_eq!(fill_budget([(0, 8), (1, 5), (2, 2)], 10).chosen, [0, 2]);
    }

    #[test]
    fn strategy_names() {
        for s in [Strategy::Rand, Strategy::Lc, Strategy::Mnlp, Strategy::Bald] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("EGL".parse::<Strategy>().is_err());
    }
}

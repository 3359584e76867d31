use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{spans_lenient, spans_strict, Corpus, Span};
use crate::tagger::{predict, TaggerModel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub true_pos: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.true_pos, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_pos, self.gold)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if self.true_pos == 0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        100.0 * a as f64 / b as f64
    }
}

/// Exact-span scores on a 0..100 scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    pub per_type: BTreeMap<String, Counts>,
}

/// Scores predicted against gold spans, sentence by sentence.
pub fn span_f1(gold: &[Vec<Span>], predicted: &[Vec<Span>]) -> F1Report {
    let mut total = Counts::default();
    let mut per_type: BTreeMap<String, Counts> = BTreeMap::new();
    for (g, p) in gold.iter().zip(predicted) {
        for s in g {
            total.gold += 1;
            per_type.entry(s.ty.clone()).or_default().gold += 1;
        }
        for s in p {
            total.predicted += 1;
            let c = per_type.entry(s.ty.clone()).or_default();
            c.predicted += 1;
            if g.contains(s) {
                total.true_pos += 1;
                c.true_pos += 1;
            }
        }
    }
    F1Report {
        precision: total.precision(),
        recall: total.recall(),
        f1: total.f1(),
        counts: total,
        per_type,
    }
}

/// Decodes every sentence (greedy, or Viterbi for a CRF) and scores exact spans.
pub fn evaluate_span_f1(model: &TaggerModel, corpus: &Corpus) -> Result<F1Report> {
    let gold = corpus
        .sentences
        .iter()
        .map(|s| spans_strict(&s.tags, corpus.scheme).map_err(|msg| Error::Conversion { sentence_id: s.id, msg }))
        .collect::<Result<Vec<_>>>()?;
    let predicted = corpus
        .sentences
        .par_iter()
        .map(|s| {
            let d = predict(model, s)?;
            let tags: Vec<&str> = d.tags.iter().map(|&t| model.vocab.tag(t)).collect();
            Ok(spans_lenient(&tags))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(span_f1(&gold, &predicted))
}

use super::encoder::SentenceEncoding;
use super::model::{DecoderIds, TaggerModel};
use crate::nnkernel::ops::{argmax, linear, log_softmax, lstm_step};
use crate::nnkernel::{crf, Tensor};
use crate::{Error, Result};

/// Result of decoding one sentence over its real positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoding {
    pub tags: Vec<usize>,
    pub log_prob: f64,
    /// `log P(y_i | y_<i, x)` of the chosen tag at each position.
    pub step_log_probs: Vec<f64>,
    /// Full log-distribution at each step (greedy LSTM decoding only; empty otherwise).
    pub step_dists: Vec<Vec<f64>>,
}

/// A left-to-right locally normalized tag model.
pub trait StepModel {
    type State: Clone;

    /// Number of positions to tag.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn start(&self) -> Self::State;

    /// Log-distribution over tags at `pos` given the previous tag (`None` before the first).
    fn step(&self, state: &Self::State, prev: Option<usize>, pos: usize) -> Result<(Self::State, Vec<f64>)>;
}

/// Argmax at each step; exact ties go to the lowest tag id.
pub fn greedy<S: StepModel>(model: &S) -> Result<Decoding> {
    let mut state = model.start();
    let mut prev = None;
    let mut out = Decoding {
        tags: Vec::with_capacity(model.len()),
        log_prob: 0.0,
        step_log_probs: Vec::with_capacity(model.len()),
        step_dists: Vec::with_capacity(model.len()),
    };
    for pos in 0..model.len() {
        let (next, lp) = model.step(&state, prev, pos)?;
        let tag = argmax(&lp);
        debug_assert!(lp.iter().all(|&v| v <= lp[tag]));
        out.tags.push(tag);
        out.log_prob += lp[tag];
        out.step_log_probs.push(lp[tag]);
        out.step_dists.push(lp);
        state = next;
        prev = Some(tag);
    }
    Ok(out)
}

struct Hyp<St> {
    tags: Vec<usize>,
    steps: Vec<f64>,
    score: f64,
    state: St,
}

/// Length-synchronized beam search. Candidates are ranked by summed log
/// probability, ties by the tag sequence in lexicographic order, so that a
/// width of 1 reproduces [`greedy`].
pub fn beam<S: StepModel>(model: &S, width: usize) -> Result<Decoding> {
    if width == 0 {
        return Err(Error::Param("beam width must be at least 1".into()));
    }
    let mut hyps = vec![Hyp {
        tags: Vec::new(),
        steps: Vec::new(),
        score: 0.0,
        state: model.start(),
    }];
    for pos in 0..model.len() {
        let mut cands = Vec::new();
        for h in &hyps {
            let (next, lp) = model.step(&h.state, h.tags.last().copied(), pos)?;
            for (tag, &v) in lp.iter().enumerate() {
                cands.push((h.score + v, h, tag, v, next.clone()));
            }
        }
        cands.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.tags.cmp(&b.1.tags))
                .then(a.2.cmp(&b.2))
        });
        cands.truncate(width);
        hyps = cands
            .into_iter()
            .map(|(score, h, tag, v, state)| {
                let mut tags = h.tags.clone();
                tags.push(tag);
                let mut steps = h.steps.clone();
                steps.push(v);
                Hyp { tags, steps, score, state }
            })
            .collect();
    }
    let best = hyps.swap_remove(0);
    Ok(Decoding {
        tags: best.tags,
        log_prob: best.steps.iter().sum(),
        step_log_probs: best.steps,
        step_dists: Vec::new(),
    })
}

/// The LSTM tag decoder reading a sentence encoding.
pub struct LstmStepper<'a> {
    model: &'a TaggerModel,
    enc: &'a Tensor,
    length: usize,
}

impl<'a> LstmStepper<'a> {
    pub fn new(model: &'a TaggerModel, enc: &'a SentenceEncoding) -> Result<Self> {
        if model.is_crf() {
            return Err(Error::WrongDecoder("LSTM decoding requested from a CRF model".into()));
        }
        Ok(LstmStepper {
            model,
            enc: &enc.enc,
            length: enc.length,
        })
    }
}

impl StepModel for LstmStepper<'_> {
    type State = (Tensor, Tensor);

    fn len(&self) -> usize {
        self.length
    }

    fn start(&self) -> Self::State {
        let units = match self.model.ids.decoder {
            DecoderIds::Lstm { cell, .. } => self.model.params.get(cell.u).tensor.rows(),
            DecoderIds::Crf { .. } => 0,
        };
        (Tensor::zeros(&[units]), Tensor::zeros(&[units]))
    }

    fn step(&self, state: &Self::State, prev: Option<usize>, pos: usize) -> Result<(Self::State, Vec<f64>)> {
        let DecoderIds::Lstm { tag_emb, cell, out_w, out_b } = self.model.ids.decoder else {
            return Err(Error::WrongDecoder("LSTM decoding requested from a CRF model".into()));
        };
        let p = &self.model.params;
        let prev = prev.unwrap_or(self.model.vocab.go_id());
        let mut x = p.get(tag_emb).tensor.row(prev).to_vec();
        x.extend_from_slice(self.enc.row(pos + 1));
        let (h, c, _) = lstm_step(
            &Tensor::vector(x),
            &state.0,
            &state.1,
            &p.get(cell.w).tensor,
            &p.get(cell.u).tensor,
            &p.get(cell.b).tensor,
        )?;
        let logits = linear(&h, &p.get(out_w).tensor, &p.get(out_b).tensor)?;
        Ok(((h, c), log_softmax(logits.data())))
    }
}

pub fn decode_greedy(enc: &SentenceEncoding, model: &TaggerModel) -> Result<Decoding> {
    greedy(&LstmStepper::new(model, enc)?)
}

pub fn decode_beam(enc: &SentenceEncoding, model: &TaggerModel, width: usize) -> Result<Decoding> {
    if width == 0 {
        return Err(Error::Param("beam width must be at least 1".into()));
    }
    beam(&LstmStepper::new(model, enc)?, width)
}

/// CRF emission scores `[n × T]` over real positions, and the transition matrix.
pub fn crf_scores(enc: &SentenceEncoding, model: &TaggerModel) -> Result<(Tensor, Tensor)> {
    let DecoderIds::Crf { w, b, a } = model.ids.decoder else {
        return Err(Error::WrongDecoder("CRF scoring requested from an LSTM model".into()));
    };
    let e = enc.enc.cols();
    let real = Tensor::new(
        vec![enc.length, e],
        enc.enc.data()[e..(enc.length + 1) * e].to_vec(),
    )?;
    let p = &model.params;
    let em = linear(&real, &p.get(w).tensor, &p.get(b).tensor)?;
    Ok((em, p.get(a).tensor.clone()))
}

pub fn crf_log_partition(enc: &SentenceEncoding, model: &TaggerModel) -> Result<f64> {
    let (em, a) = crf_scores(enc, model)?;
    crf::log_partition(&em, &a)
}

/// Exact best sequence; `log_prob = score − log Z`, split into chain-rule factors.
pub fn crf_viterbi(enc: &SentenceEncoding, model: &TaggerModel) -> Result<Decoding> {
    let (em, a) = crf_scores(enc, model)?;
    let (tags, score) = crf::viterbi(&em, &a)?;
    let log_z = crf::log_partition(&em, &a)?;
    debug_assert!(score <= log_z + 1e-9);
    let step_log_probs = crf::conditional_log_probs(&em, &a, &tags)?;
    Ok(Decoding {
        tags,
        log_prob: score - log_z,
        step_log_probs,
        step_dists: Vec::new(),
    })
}

/// Greedy for the LSTM decoder, Viterbi for the CRF.
pub fn decode(enc: &SentenceEncoding, model: &TaggerModel) -> Result<Decoding> {
    if model.is_crf() {
        crf_viterbi(enc, model)
    } else {
        decode_greedy(enc, model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two steps over tags {a=0, b=1, c=2}.
    struct Toy;

    impl StepModel for Toy {
        type State = ();
        fn len(&self) -> usize {
            2
        }
        fn start(&self) {}
        fn step(&self, _: &(), prev: Option<usize>, _: usize) -> Result<((), Vec<f64>)> {
            let p = match prev {
                None => [0.6, 0.4, 0.0],
                Some(0) => [0.25, 0.25, 0.5],
                Some(_) => [0.0, 0.0, 1.0],
            };
            Ok(((), p.iter().map(|v: &f64| v.ln()).collect()))
        }
    }

    #[test]
    fn toy_greedy_and_beam() {
        let g = greedy(&Toy).unwrap();
        assert_eq!(g.tags, [0, 2]);
        assert!((g.log_prob - 0.3f64.ln()).abs() < 1e-12);
        let b = beam(&Toy, 2).unwrap();
        assert_eq!(b.tags, [1, 2]);
        assert!((b.log_prob - 0.4f64.ln()).abs() < 1e-12);
        assert_eq!(beam(&Toy, 1).unwrap(), Decoding { step_dists: vec![], ..g });
        assert!(beam(&Toy, 0).is_err());
    }
}

use rand::Rng;

use super::model::{CharIds, LstmIds, TaggerModel, WordIds};
use crate::corpus::{FormattedBatch, Vocabulary};
use crate::nnkernel::{Mode, NodeId, Tape, Tensor};
use crate::Result;

/// Encoder activations of one sentence, each `[padded_len × dim]`.
///
/// Every sentence is encoded over its own `[BOS] .. [EOS]` span only, so the
/// result does not depend on the batch it was padded into. `[PAD]` rows are
/// filled afterwards: `h_top` is zero there and `w_char`/`w_full` come from a
/// word consisting of a single `[PAD]` char.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceEncoding {
    pub sentence_id: usize,
    /// Real word count; real words sit at rows `1..=length`.
    pub length: usize,
    pub w_char: Tensor,
    pub w_full: Tensor,
    pub h_top: Tensor,
    pub enc: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub sentences: Vec<SentenceEncoding>,
}

/// Nodes for one sentence span recorded on a tape.
pub(crate) struct TapeEncoding {
    pub w_char: NodeId,
    pub w_full: NodeId,
    pub h_top: NodeId,
    pub enc: NodeId,
}

/// Replaces each id by `[UNK]` with probability `p` in train mode.
pub fn word_drop<R: Rng + ?Sized>(ids: &[usize], p: f64, mode: Mode, rng: &mut R) -> Vec<usize> {
    if mode != Mode::Train || p == 0.0 {
        return ids.to_vec();
    }
    ids.iter()
        .map(|&id| if rng.gen::<f64>() < p { Vocabulary::UNK } else { id })
        .collect()
}

fn zeros(tape: &mut Tape<'_>, n: usize) -> NodeId {
    tape.input(Tensor::zeros(&[n]))
}

/// Runs one LSTM direction over `xs`, returning the hidden state at every step.
fn run_lstm(tape: &mut Tape<'_>, ids: LstmIds, xs: &[NodeId], reverse: bool) -> Result<Vec<NodeId>> {
    let hid = tape.params().get(ids.u).tensor.rows();
    let (w, u, b) = (tape.param(ids.w), tape.param(ids.u), tape.param(ids.b));
    let mut h = zeros(tape, hid);
    let mut c = zeros(tape, hid);
    let mut out = vec![h; xs.len()];
    let order: Vec<usize> = if reverse { (0..xs.len()).rev().collect() } else { (0..xs.len()).collect() };
    for t in order {
        (h, c) = tape.lstm(xs[t], h, c, w, u, b)?;
        out[t] = h;
    }
    Ok(out)
}

fn rows(tape: &mut Tape<'_>, x: NodeId) -> Result<Vec<NodeId>> {
    let n = tape.value(x).rows();
    (0..n).map(|t| tape.row(x, t)).collect()
}

/// `w_char` of one word from its char ids (`[BOW] .. [EOW]`, no trailing pads).
pub(crate) fn char_vector<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    model: &TaggerModel,
    chars: &[usize],
    mode: Mode,
    rng: &mut R,
) -> Result<NodeId> {
    let p = model.config.dropout_p;
    let table = tape.param(model.ids.char_emb);
    let mut x = tape.gather(table, chars.to_vec())?;
    match &model.ids.chars {
        CharIds::Cnn(layers) => {
            for (l, &(k, b)) in layers.iter().enumerate() {
                let (k, b) = (tape.param(k), tape.param(b));
                let conv = tape.conv1d(x, k, b)?;
                let mut y = tape.relu(conv)?;
                if l > 0 && tape.value(y).cols() == tape.value(x).cols() {
                    y = tape.add(y, x)?;
                }
                x = tape.dropout(y, p, mode, rng)?;
            }
            tape.max_pool(x)
        }
        CharIds::Lstm { fw, bw } => {
            let xs = rows(tape, x)?;
            let f = run_lstm(tape, *fw, &xs, false)?;
            let b = run_lstm(tape, *bw, &xs, true)?;
            let both = tape.concat(vec![f[xs.len() - 1], b[0]])?;
            tape.dropout(both, p, mode, rng)
        }
    }
}

/// Records the encoder for one `[BOS] .. [EOS]` span.
///
/// `word_ids` and `chars` cover the span; word-drop touches only the real
/// words between the two boundary tokens.
pub(crate) fn encode_span<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    model: &TaggerModel,
    word_ids: &[usize],
    chars: &[&[usize]],
    mode: Mode,
    rng: &mut R,
) -> Result<TapeEncoding> {
    let span = word_ids.len();
    let p = model.config.dropout_p;
    let mut wc = Vec::with_capacity(span);
    for ch in chars {
        wc.push(char_vector(tape, model, ch, mode, rng)?);
    }
    let w_char = tape.stack(wc)?;

    let mut ids = word_ids.to_vec();
    let dropped = word_drop(&word_ids[1..span - 1], model.config.word_drop_p, mode, rng);
    ids[1..span - 1].copy_from_slice(&dropped);
    let table = tape.param(model.ids.word_emb);
    let w_emb = tape.gather(table, ids)?;
    let w_full = tape.concat(vec![w_char, w_emb])?;

    let mut x = w_full;
    match &model.ids.words {
        WordIds::Cnn(layers) => {
            for &(k, b) in layers {
                let (k, b) = (tape.param(k), tape.param(b));
                let conv = tape.conv1d(x, k, b)?;
                let y = tape.relu(conv)?;
                x = tape.dropout(y, p, mode, rng)?;
            }
        }
        WordIds::Lstm(layers) => {
            for &(fw, bw) in layers {
                let xs = rows(tape, x)?;
                let f = run_lstm(tape, fw, &xs, false)?;
                let b = run_lstm(tape, bw, &xs, true)?;
                let per_pos = f
                    .into_iter()
                    .zip(b)
                    .map(|(f, b)| tape.concat(vec![f, b]))
                    .collect::<Result<Vec<_>>>()?;
                let y = tape.stack(per_pos)?;
                x = tape.dropout(y, p, mode, rng)?;
            }
        }
    }
    let enc = tape.concat(vec![x, w_full])?;
    Ok(TapeEncoding {
        w_char,
        w_full,
        h_top: x,
        enc,
    })
}

fn pad_rows(t: &Tensor, fill: &[f64], padded_len: usize) -> Tensor {
    let mut data = t.data().to_vec();
    for _ in t.rows()..padded_len {
        data.extend_from_slice(fill);
    }
    Tensor::new(vec![padded_len, fill.len()], data).expect("row width matches fill")
}

/// `(w_char, w_full)` of a `[PAD]` word; a constant of the parameters.
pub(crate) fn pad_features(model: &TaggerModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::new(&model.params);
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let wc = char_vector(&mut tape, model, &[Vocabulary::CHAR_PAD], Mode::Eval, &mut rng)?;
    let w_char = tape.value(wc).data().to_vec();
    let emb = &model.params.get(model.ids.word_emb).tensor;
    let mut w_full = w_char.clone();
    w_full.extend_from_slice(emb.row(Vocabulary::PAD));
    Ok((w_char, w_full))
}

/// Encodes a single span without padding. Rows: `[BOS]`, words, `[EOS]`.
pub fn encode_span_values<R: Rng + ?Sized>(
    model: &TaggerModel,
    word_ids: &[usize],
    chars: &[&[usize]],
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Tensor, Tensor, Tensor)> {
    let mut tape = Tape::new(&model.params);
    let e = encode_span(&mut tape, model, word_ids, chars, mode, rng)?;
    Ok((
        tape.value(e.w_char).clone(),
        tape.value(e.w_full).clone(),
        tape.value(e.h_top).clone(),
        tape.value(e.enc).clone(),
    ))
}

/// Full encoder over a batch. Rows are processed in batch order and share one rng stream.
pub fn encode_words<R: Rng + ?Sized>(
    batch: &FormattedBatch,
    model: &TaggerModel,
    mode: Mode,
    rng: &mut R,
) -> Result<EncoderOutput> {
    let padded = batch.padded_len();
    let (pad_char, pad_full) = pad_features(model)?;
    let mut pad_enc = vec![0.0; model.config.top_dim()];
    pad_enc.extend_from_slice(&pad_full);
    let pad_top = vec![0.0; model.config.top_dim()];
    let mut sentences = Vec::with_capacity(batch.len());
    for b in 0..batch.len() {
        let span = batch.span_len(b);
        let chars: Vec<&[usize]> = (0..span).map(|i| batch.word_chars(b, i)).collect();
        let (w_char, w_full, h_top, enc) = encode_span_values(model, &batch.word_ids[b][..span], &chars, mode, rng)?;
        sentences.push(SentenceEncoding {
            sentence_id: batch.sentence_ids[b],
            length: batch.lengths[b],
            w_char: pad_rows(&w_char, &pad_char, padded),
            w_full: pad_rows(&w_full, &pad_full, padded),
            h_top: pad_rows(&h_top, &pad_top, padded),
            enc: pad_rows(&enc, &pad_enc, padded),
        });
    }
    Ok(EncoderOutput { sentences })
}

/// Per-sentence `w_char` rows `[padded_len × char_dim]`.
pub fn encode_chars<R: Rng + ?Sized>(
    batch: &FormattedBatch,
    model: &TaggerModel,
    mode: Mode,
    rng: &mut R,
) -> Result<Vec<Tensor>> {
    let out = encode_words(batch, model, mode, rng)?;
    Ok(out.sentences.into_iter().map(|s| s.w_char).collect())
}

/// Per-sentence `w_full = (w_char, w_emb)` rows `[padded_len × full_dim]`.
pub fn word_features<R: Rng + ?Sized>(
    batch: &FormattedBatch,
    model: &TaggerModel,
    mode: Mode,
    rng: &mut R,
) -> Result<Vec<Tensor>> {
    let out = encode_words(batch, model, mode, rng)?;
    Ok(out.sentences.into_iter().map(|s| s.w_full).collect())
}

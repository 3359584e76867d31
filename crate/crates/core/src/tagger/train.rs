use rand::Rng;

use super::encoder::encode_span;
use super::model::{DecoderIds, TaggerModel};
use crate::corpus::FormattedBatch;
use crate::nnkernel::gradcheck::{check_gradients, GradCheckReport};
use crate::nnkernel::{sgd_update, Gradients, Mode, NodeId, Tape, Tensor};
use crate::{Error, Result};

/// Records the summed (not averaged) negative log-likelihood of every real
/// word in the batch. The LSTM decoder is teacher-forced on gold tags.
pub(crate) fn record_batch_nll<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    model: &TaggerModel,
    batch: &FormattedBatch,
    mode: Mode,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    let mut terms = Vec::new();
    for b in 0..batch.len() {
        let span = batch.span_len(b);
        let n = batch.lengths[b];
        let chars: Vec<&[usize]> = (0..span).map(|i| batch.word_chars(b, i)).collect();
        let enc = encode_span(tape, model, &batch.word_ids[b][..span], &chars, mode, rng)?.enc;
        let gold = &batch.tag_ids[b][1..=n];
        match model.ids.decoder {
            DecoderIds::Lstm { tag_emb, cell, out_w, out_b } => {
                let units = model.params.get(cell.u).tensor.rows();
                let (te, w, u, bias) = (tape.param(tag_emb), tape.param(cell.w), tape.param(cell.u), tape.param(cell.b));
                let (ow, ob) = (tape.param(out_w), tape.param(out_b));
                let mut h = tape.input(Tensor::zeros(&[units]));
                let mut c = tape.input(Tensor::zeros(&[units]));
                let mut prev = model.vocab.go_id();
                for (i, &g) in gold.iter().enumerate() {
                    let y = tape.row(te, prev)?;
                    let e = tape.row(enc, i + 1)?;
                    let x = tape.concat(vec![y, e])?;
                    (h, c) = tape.lstm(x, h, c, w, u, bias)?;
                    let logits = tape.linear(h, ow, ob)?;
                    terms.push(tape.nll(logits, g)?);
                    prev = g;
                }
            }
            DecoderIds::Crf { w, b: bias, a } => {
                let real = tape.gather(enc, (1..=n).collect())?;
                let (w, bias, a) = (tape.param(w), tape.param(bias), tape.param(a));
                let em = tape.linear(real, w, bias)?;
                terms.push(tape.crf_nll(em, a, gold.to_vec())?);
            }
        }
    }
    Ok(terms)
}

/// Per-word loss of a batch and its gradients.
pub fn loss_and_gradients<R: Rng + ?Sized>(
    model: &TaggerModel,
    batch: &FormattedBatch,
    mode: Mode,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new(&model.params);
    let loss = batch_loss_node(&mut tape, model, batch, mode, rng)?;
    let value = tape.value(loss).item()?;
    Ok((value, tape.backward(loss)?))
}

pub(crate) fn batch_loss_node<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    model: &TaggerModel,
    batch: &FormattedBatch,
    mode: Mode,
    rng: &mut R,
) -> Result<NodeId> {
    let words = batch.n_words();
    if words == 0 {
        return Err(Error::EmptyInput("batch without real words".into()));
    }
    let terms = record_batch_nll(tape, model, batch, mode, rng)?;
    let total = tape.sum(terms)?;
    tape.scale(total, 1.0 / words as f64)
}

/// Negative log-likelihood averaged over the batch's real words.
pub fn sequence_nll<R: Rng + ?Sized>(
    batch: &FormattedBatch,
    model: &TaggerModel,
    mode: Mode,
    rng: &mut R,
) -> Result<f64> {
    let mut tape = Tape::new(&model.params);
    let loss = batch_loss_node(&mut tape, model, batch, mode, rng)?;
    tape.value(loss).item()
}

/// One pass over `batches` in the given order with an SGD step per batch,
/// gradients clipped to `config.clip_norm`. Returns the mean per-word loss
/// measured before each step.
pub fn train_epoch<R: Rng + ?Sized>(
    model: &mut TaggerModel,
    batches: &[FormattedBatch],
    lr: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(lr >= 0.0) {
        return Err(Error::Param(format!("learning rate must be non-negative, got {lr}")));
    }
    let mut total = 0.0;
    let mut words = 0;
    for batch in batches {
        let (loss, mut grads) = loss_and_gradients(model, batch, Mode::Train, rng)?;
        grads.clip_global_norm(model.config.clip_norm);
        sgd_update(&mut model.params, &grads, lr)?;
        total += loss * batch.n_words() as f64;
        words += batch.n_words();
    }
    Ok(if words == 0 { 0.0 } else { total / words as f64 })
}

/// Central-difference check of the batch loss gradient for every trainable
/// parameter (at most `limit` entries each). The loss is re-evaluated with an
/// rng reseeded from `seed`, so stochastic layers draw identical masks.
pub fn gradient_check(
    model: &mut TaggerModel,
    batch: &FormattedBatch,
    mode: Mode,
    seed: u64,
    eps: f64,
    limit: Option<usize>,
) -> Result<GradCheckReport> {
    use rand::SeedableRng;
    let fresh = || rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (_, grads) = loss_and_gradients(model, batch, mode, &mut fresh())?;
    let shell = model.clone();
    check_gradients(
        &mut model.params,
        &grads,
        |params| {
            let probe = TaggerModel {
                params: params.clone(),
                ..shell.clone()
            };
            sequence_nll(batch, &probe, mode, &mut fresh())
        },
        eps,
        limit,
    )
}

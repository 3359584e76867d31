//! CNN-CNN-LSTM tagger: char CNN, word CNN and an LSTM tag decoder, with a
//! chain CRF as alternative decoder and optional LSTM encoders.

mod config;
mod decoder;
mod encoder;
mod model;
mod train;

use rand::Rng;

pub use config::{CharEncoder, Decoder, TaggerConfig, WordEncoder};
pub use decoder::{
    beam, crf_log_partition, crf_scores, crf_viterbi, decode, decode_beam, decode_greedy, greedy, Decoding,
    LstmStepper, StepModel,
};
pub use encoder::{
    encode_chars, encode_span_values, encode_words, word_drop, word_features, EncoderOutput, SentenceEncoding,
};
pub use model::TaggerModel;
pub use train::{gradient_check, loss_and_gradients, sequence_nll, train_epoch};

use crate::corpus::{format_batch, Sentence};
use crate::nnkernel::Mode;
use crate::Result;

/// Encodes one sentence on its own (no padding).
pub fn encode_sentence<R: Rng + ?Sized>(
    model: &TaggerModel,
    sentence: &Sentence,
    mode: Mode,
    rng: &mut R,
) -> Result<SentenceEncoding> {
    let batch = format_batch(&[sentence], &model.vocab)?;
    let mut out = encode_words(&batch, model, mode, rng)?;
    Ok(out.sentences.swap_remove(0))
}

/// Deterministic prediction (eval mode): greedy for LSTM, Viterbi for CRF.
pub fn predict(model: &TaggerModel, sentence: &Sentence) -> Result<Decoding> {
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let enc = encode_sentence(model, sentence, Mode::Eval, &mut rng)?;
    decode(&enc, model)
}

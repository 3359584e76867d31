use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::nnkernel::DEFAULT_CLIP_NORM;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CharEncoder {
    Cnn { layers: usize, filters: usize, width: usize },
    /// Bidirectional; the word vector is both final states concatenated.
    Lstm { units: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WordEncoder {
    Cnn { layers: usize, filters: usize, width: usize },
    /// Stacked bidirectional layers.
    Lstm { layers: usize, units: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Decoder {
    Lstm { units: usize },
    Crf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub char_emb_dim: usize,
    pub char_encoder: CharEncoder,
    pub word_encoder: WordEncoder,
    pub decoder: Decoder,
    pub emb_dim: usize,
    pub dropout_p: f64,
    pub word_drop_p: f64,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
}

fn default_clip() -> f64 {
    DEFAULT_CLIP_NORM
}

impl TaggerConfig {
    /// Desk-scale CNN-CNN-LSTM.
    pub fn desk() -> Self {
        TaggerConfig {
            char_emb_dim: 16,
            char_encoder: CharEncoder::Cnn { layers: 1, filters: 25, width: 3 },
            word_encoder: WordEncoder::Cnn { layers: 2, filters: 64, width: 3 },
            decoder: Decoder::Lstm { units: 64 },
            emb_dim: 32,
            dropout_p: 0.5,
            word_drop_p: 0.5,
            clip_norm: DEFAULT_CLIP_NORM,
        }
    }

    /// Small enough for many active-learning runs on one core.
    pub fn tiny() -> Self {
        TaggerConfig {
            char_emb_dim: 8,
            char_encoder: CharEncoder::Cnn { layers: 1, filters: 12, width: 3 },
            word_encoder: WordEncoder::Cnn { layers: 1, filters: 32, width: 3 },
            decoder: Decoder::Lstm { units: 24 },
            emb_dim: 16,
            dropout_p: 0.25,
            word_drop_p: 0.2,
            clip_norm: DEFAULT_CLIP_NORM,
        }
    }

    /// Full-scale sizes (char CNN 1×50 width 3, word CNN 2×800 width 5).
    pub fn paper() -> Self {
        TaggerConfig {
            char_emb_dim: 25,
            char_encoder: CharEncoder::Cnn { layers: 1, filters: 50, width: 3 },
            word_encoder: WordEncoder::Cnn { layers: 2, filters: 800, width: 5 },
            decoder: Decoder::Lstm { units: 300 },
            emb_dim: 300,
            dropout_p: 0.5,
            word_drop_p: 0.5,
            clip_norm: DEFAULT_CLIP_NORM,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            "paper" => Ok(Self::paper()),
            "desk-crf" => Ok(Self { decoder: Decoder::Crf, ..Self::desk() }),
            "tiny-crf" => Ok(Self { decoder: Decoder::Crf, ..Self::tiny() }),
            other => Err(Error::Param(format!("unknown tagger preset {other:?}"))),
        }
    }

    pub fn with_decoder(mut self, decoder: Decoder) -> Self {
        self.decoder = decoder;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Param(m.to_string()));
        let counts_ok = match self.char_encoder {
            CharEncoder::Cnn { layers, filters, width } => layers >= 1 && filters >= 1 && width % 2 == 1,
            CharEncoder::Lstm { units } => units >= 1,
        } && match self.word_encoder {
            WordEncoder::Cnn { layers, filters, width } => layers >= 1 && filters >= 1 && width % 2 == 1,
            WordEncoder::Lstm { layers, units } => layers >= 1 && units >= 1,
        } && match self.decoder {
            Decoder::Lstm { units } => units >= 1,
            Decoder::Crf => true,
        } && self.char_emb_dim >= 1
            && self.emb_dim >= 1;
        if !counts_ok {
            return bad("tagger sizes must be at least 1 and CNN widths odd");
        }
        for p in [self.dropout_p, self.word_drop_p] {
            if !(0.0..1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1)");
            }
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn char_dim(&self) -> usize {
        match self.char_encoder {
            CharEncoder::Cnn { filters, .. } => filters,
            CharEncoder::Lstm { units } => 2 * units,
        }
    }

    pub fn full_dim(&self) -> usize {
        self.char_dim() + self.emb_dim
    }

    pub fn top_dim(&self) -> usize {
        match self.word_encoder {
            WordEncoder::Cnn { filters, .. } => filters,
            WordEncoder::Lstm { units, .. } => 2 * units,
        }
    }

    /// Width of `h^Enc = (h^(l), w^full)`.
    pub fn enc_dim(&self) -> usize {
        self.top_dim() + self.full_dim()
    }

    pub(crate) fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv = vec![("char_emb_dim".to_string(), self.char_emb_dim.to_string())];
        match self.char_encoder {
            CharEncoder::Cnn { layers, filters, width } => {
                kv.push(("char_encoder".into(), "cnn".into()));
                kv.push(("char_layers".into(), layers.to_string()));
                kv.push(("char_filters".into(), filters.to_string()));
                kv.push(("char_width".into(), width.to_string()));
            }
            CharEncoder::Lstm { units } => {
                kv.push(("char_encoder".into(), "lstm".into()));
                kv.push(("char_units".into(), units.to_string()));
            }
        }
        match self.word_encoder {
            WordEncoder::Cnn { layers, filters, width } => {
                kv.push(("word_encoder".into(), "cnn".into()));
                kv.push(("word_layers".into(), layers.to_string()));
                kv.push(("word_filters".into(), filters.to_string()));
                kv.push(("word_width".into(), width.to_string()));
            }
            WordEncoder::Lstm { layers, units } => {
                kv.push(("word_encoder".into(), "lstm".into()));
                kv.push(("word_layers".into(), layers.to_string()));
                kv.push(("word_units".into(), units.to_string()));
            }
        }
        match self.decoder {
            Decoder::Lstm { units } => {
                kv.push(("decoder".into(), "lstm".into()));
                kv.push(("decoder_units".into(), units.to_string()));
            }
            Decoder::Crf => kv.push(("decoder".into(), "crf".into())),
        }
        kv.push(("emb_dim".into(), self.emb_dim.to_string()));
        // {:?} on f64 round-trips exactly
        kv.push(("dropout_p".into(), format!("{:?}", self.dropout_p)));
        kv.push(("word_drop_p".into(), format!("{:?}", self.word_drop_p)));
        kv.push(("clip_norm".into(), format!("{:?}", self.clip_norm)));
        kv
    }

    pub(crate) fn from_kv(kv: &BTreeMap<&str, Vec<&str>>) -> Result<Self> {
        let get = |k: &str| -> Result<&str> {
            kv.get(k)
                .and_then(|v| v.first().copied())
                .ok_or_else(|| Error::Checkpoint(format!("config header lacks {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Checkpoint(format!("bad integer for {k}")))
        };
        let real = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Checkpoint(format!("bad real for {k}")))
        };
        let char_encoder = match get("char_encoder")? {
            "cnn" => CharEncoder::Cnn {
                layers: num("char_layers")?,
                filters: num("char_filters")?,
                width: num("char_width")?,
            },
            "lstm" => CharEncoder::Lstm { units: num("char_units")? },
            o => return Err(Error::Checkpoint(format!("unknown char encoder {o}"))),
        };
        let word_encoder = match get("word_encoder")? {
            "cnn" => WordEncoder::Cnn {
                layers: num("word_layers")?,
                filters: num("word_filters")?,
                width: num("word_width")?,
            },
            "lstm" => WordEncoder::Lstm {
                layers: num("word_layers")?,
                units: num("word_units")?,
            },
            o => return Err(Error::Checkpoint(format!("unknown word encoder {o}"))),
        };
        let decoder = match get("decoder")? {
            "lstm" => Decoder::Lstm { units: num("decoder_units")? },
            "crf" => Decoder::Crf,
            o => return Err(Error::Checkpoint(format!("unknown decoder {o}"))),
        };
        let cfg = TaggerConfig {
            char_emb_dim: num("char_emb_dim")?,
            char_encoder,
            word_encoder,
            decoder,
            emb_dim: num("emb_dim")?,
            dropout_p: real("dropout_p")?,
            word_drop_p: real("word_drop_p")?,
            clip_norm: real("clip_norm")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

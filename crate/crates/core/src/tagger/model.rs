use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;

use super::config::{CharEncoder, Decoder, TaggerConfig, WordEncoder};
use crate::corpus::{vocab, EmbeddingTable, Vocabulary};
use crate::nnkernel::checkpoint::{load_into, read_checkpoint, write_checkpoint};
use crate::nnkernel::{ParamId, ParamSet, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct LstmIds {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum CharIds {
    Cnn(Vec<(ParamId, ParamId)>),
    Lstm { fw: LstmIds, bw: LstmIds },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum WordIds {
    Cnn(Vec<(ParamId, ParamId)>),
    Lstm(Vec<(LstmIds, LstmIds)>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum DecoderIds {
    Lstm {
        tag_emb: ParamId,
        cell: LstmIds,
        out_w: ParamId,
        out_b: ParamId,
    },
    /// Emission projection `W`, `b` and transitions `A`.
    Crf { w: ParamId, b: ParamId, a: ParamId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct ModelIds {
    pub char_emb: ParamId,
    pub chars: CharIds,
    pub word_emb: ParamId,
    pub words: WordIds,
    pub decoder: DecoderIds,
}

/// All learnable state of a tagger plus the vocabulary it was built for.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggerModel {
    pub config: TaggerConfig,
    pub params: ParamSet,
    pub vocab: Vocabulary,
    pub(crate) ids: ModelIds,
}

struct Builder<'a, R: Rng + ?Sized> {
    params: ParamSet,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn weight(&mut self, name: &str, shape: &[usize], fan_in: usize, fan_out: usize) -> Result<ParamId> {
        let t = Tensor::glorot(shape, fan_in, fan_out, self.rng);
        self.params.add(name, t, true)
    }

    fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.params.add(name, Tensor::zeros(shape), true)
    }

    fn lstm(&mut self, prefix: &str, n_in: usize, hid: usize) -> Result<LstmIds> {
        let w = self.weight(&format!("{prefix}.w"), &[n_in, 4 * hid], n_in, 4 * hid)?;
        let u = self.weight(&format!("{prefix}.u"), &[hid, 4 * hid], hid, 4 * hid)?;
        let mut bias = Tensor::zeros(&[4 * hid]);
        bias.data_mut()[hid..2 * hid].iter_mut().for_each(|x| *x = 1.0);
        let b = self.params.add(&format!("{prefix}.b"), bias, true)?;
        Ok(LstmIds { w, u, b })
    }

    fn conv_stack(&mut self, prefix: &str, n_in: usize, layers: usize, filters: usize, width: usize) -> Result<Vec<(ParamId, ParamId)>> {
        let mut out = Vec::with_capacity(layers);
        let mut c_in = n_in;
        for l in 0..layers {
            let k = self.weight(&format!("{prefix}.{l}.kernel"), &[width, c_in, filters], width * c_in, width * filters)?;
            let b = self.zeros(&format!("{prefix}.{l}.bias"), &[filters])?;
            out.push((k, b));
            c_in = filters;
        }
        Ok(out)
    }
}

impl TaggerModel {
    /// Fresh parameters. Rows of the word embedding table are taken from
    /// `embeddings` where available and the dimension matches.
    pub fn new<R: Rng + ?Sized>(
        config: TaggerConfig,
        vocab: Vocabulary,
        embeddings: Option<&EmbeddingTable>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let mut bld = Builder { params: ParamSet::new(), rng };
        let n_tags = vocab.n_output_tags();

        let char_emb = bld.weight("char.emb", &[vocab.n_chars(), config.char_emb_dim], 1, config.char_emb_dim)?;
        let chars = match config.char_encoder {
            CharEncoder::Cnn { layers, filters, width } => {
                CharIds::Cnn(bld.conv_stack("char.cnn", config.char_emb_dim, layers, filters, width)?)
            }
            CharEncoder::Lstm { units } => CharIds::Lstm {
                fw: bld.lstm("char.lstm.fw", config.char_emb_dim, units)?,
                bw: bld.lstm("char.lstm.bw", config.char_emb_dim, units)?,
            },
        };

        let mut table = Tensor::glorot(&[vocab.n_words(), config.emb_dim], 1, config.emb_dim, bld.rng);
        if let Some(e) = embeddings.filter(|e| e.dimension == config.emb_dim) {
            for (i, w) in vocab.words.iter().enumerate() {
                if let Some(v) = e.get(w) {
                    table.data_mut()[i * config.emb_dim..(i + 1) * config.emb_dim].copy_from_slice(v);
                }
            }
        }
        let word_emb = bld.params.add("word.emb", table, true)?;

        let words = match config.word_encoder {
            WordEncoder::Cnn { layers, filters, width } => {
                WordIds::Cnn(bld.conv_stack("word.cnn", config.full_dim(), layers, filters, width)?)
            }
            WordEncoder::Lstm { layers, units } => {
                let mut v = Vec::with_capacity(layers);
                let mut n_in = config.full_dim();
                for l in 0..layers {
                    v.push((
                        bld.lstm(&format!("word.lstm.{l}.fw"), n_in, units)?,
                        bld.lstm(&format!("word.lstm.{l}.bw"), n_in, units)?,
                    ));
                    n_in = 2 * units;
                }
                WordIds::Lstm(v)
            }
        };

        let enc = config.enc_dim();
        let decoder = match config.decoder {
            Decoder::Lstm { units } => DecoderIds::Lstm {
                tag_emb: bld.weight("dec.tag_emb", &[vocab.tags.len(), units], 1, units)?,
                cell: bld.lstm("dec.lstm", units + enc, units)?,
                out_w: bld.weight("dec.out.w", &[units, n_tags], units, n_tags)?,
                out_b: bld.zeros("dec.out.b", &[n_tags])?,
            },
            Decoder::Crf => DecoderIds::Crf {
                w: bld.weight("crf.w", &[enc, n_tags], enc, n_tags)?,
                b: bld.zeros("crf.b", &[n_tags])?,
                a: bld.weight("crf.a", &[n_tags, n_tags], n_tags, n_tags)?,
            },
        };

        Ok(TaggerModel {
            config,
            params: bld.params,
            vocab,
            ids: ModelIds {
                char_emb,
                chars,
                word_emb,
                words,
                decoder,
            },
        })
    }

    pub fn n_tags(&self) -> usize {
        self.vocab.n_output_tags()
    }

    pub fn is_crf(&self) -> bool {
        matches!(self.config.decoder, Decoder::Crf)
    }

    /// Text header of `key=value` lines, a `---` line, then the checkpoint container.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, v) in self.config.to_kv().into_iter().chain(vocab::to_lines(&self.vocab)) {
            if v.contains('\n') {
                return Err(Error::Checkpoint(format!("value for {k} contains a newline")));
            }
            writeln!(w, "{k}={v}")?;
        }
        writeln!(w, "---")?;
        write_checkpoint(&self.params, &mut w)
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut lines = Vec::new();
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                return Err(Error::Checkpoint("missing header terminator".into()));
            }
            let line = line.strip_suffix('\n').unwrap_or(&line).to_string();
            if line == "---" {
                break;
            }
            lines.push(line);
        }
        let mut map: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for l in &lines {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("header line without '=': {l:?}")))?;
            map.entry(k).or_default().push(v);
        }
        let config = TaggerConfig::from_kv(&map)?;
        let vocab = vocab::from_lines(&map).ok_or_else(|| Error::Checkpoint("bad vocabulary".into()))?;
        // Parameter values are overwritten; the rng only shapes the skeleton.
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut model = TaggerModel::new(config, vocab, None, &mut rng)?;
        load_into(&mut model.params, read_checkpoint(reader)?)?;
        Ok(model)
    }

    pub fn save_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.save(std::io::BufWriter::new(f))
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        Self::load(std::fs::File::open(path)?)
    }
}

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabulary, make_batches, synthesize_corpus, Sentence, TemplateSpec};
use crate::tagger::{train_epoch, Decoder, TaggerConfig, TaggerModel};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// Entity types in the synthetic corpus.
    pub types: usize,
    /// Output tags (`O` plus four BIOES tags per type).
    pub tags: usize,
    pub decoder: String,
    /// Median wall-clock seconds per training epoch.
    pub sec_per_epoch: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub n_sentences: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Timed epochs per cell (a warm-up epoch is run first and discarded).
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            n_sentences: 300,
            batch_size: 16,
            lr: 0.01,
            repeats: 3,
            seed: 0,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Epoch timings of the LSTM decoder and the CRF over identical batches for
/// each entity-type count. The encoder comes from `tagger`; only the decoder changes.
pub fn bench_decoder(type_counts: &[usize], tagger: &TaggerConfig, settings: &BenchSettings) -> Result<Vec<BenchRow>> {
    if settings.repeats < 3 {
        return Err(Error::Param("bench_decoder needs at least 3 timed epochs".into()));
    }
    let units = match tagger.decoder {
        Decoder::Lstm { units } => units,
        Decoder::Crf => 64,
    };
    let mut rows = Vec::new();
    for &types in type_counts {
        let corpus = synthesize_corpus(settings.seed, settings.n_sentences, &TemplateSpec::with_types(types))?;
        let vocab = build_vocabulary(&corpus, 1);
        let sents: Vec<&Sentence> = corpus.sentences.iter().collect();
        let batches = make_batches::<ChaCha8Rng>(&sents, &vocab, settings.batch_size, None)?;
        for (name, decoder) in [("LSTM", Decoder::Lstm { units }), ("CRF", Decoder::Crf)] {
            let cfg = tagger.clone().with_decoder(decoder);
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            let mut model = TaggerModel::new(cfg, vocab.clone(), None, &mut rng)?;
            train_epoch(&mut model, &batches, settings.lr, &mut rng)?;
            let mut times = Vec::with_capacity(settings.repeats);
            for _ in 0..settings.repeats {
                let t = Instant::now();
                train_epoch(&mut model, &batches, settings.lr, &mut rng)?;
                times.push(t.elapsed().as_secs_f64());
            }
            rows.push(BenchRow {
                types,
                tags: vocab.n_output_tags(),
                decoder: name.to_string(),
                sec_per_epoch: median(times),
            });
        }
    }
    Ok(rows)
}

/// CRF seconds divided by LSTM seconds for one type count.
pub fn crf_lstm_ratio(rows: &[BenchRow], types: usize) -> Option<f64> {
    let get = |d: &str| rows.iter().find(|r| r.types == types && r.decoder == d).map(|r| r.sec_per_epoch);
    Some(get("CRF")? / get("LSTM")?)
}

/// CSV with header `types,tags,decoder,sec_per_epoch`.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["types", "tags", "decoder", "sec_per_epoch"])?;
    for r in rows {
        out.write_record([
            r.types.to_string(),
            r.tags.to_string(),
            r.decoder.clone(),
            format!("{:.6}", r.sec_per_epoch),
        ])?;
    }
    out.flush()?;
    Ok(())
}

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Sentence, Vocabulary};
use crate::{Error, Result};

/// Upper bounds (in words) of the length buckets. Longer sentences share a final bucket.
pub const BUCKET_BOUNDARIES: [usize; 5] = [8, 16, 32, 64, 128];

/// Padded id grids for a group of sentences.
///
/// Word rows are `[BOS] w1..wn [EOS] [PAD]*`; each word's char row is
/// `[BOW] c1..ck [EOW] [PAD]*` (special words carry `[BOW] [EOW]`, pad words
/// are all `[PAD]`). Tags outside the real words are `O` with a false mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormattedBatch {
    pub word_ids: Vec<Vec<usize>>,
    pub char_ids: Vec<Vec<Vec<usize>>>,
    pub tag_ids: Vec<Vec<usize>>,
    pub loss_mask: Vec<Vec<bool>>,
    pub sentence_ids: Vec<usize>,
    /// Real word count of each row.
    pub lengths: Vec<usize>,
}

impl FormattedBatch {
    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }

    pub fn padded_len(&self) -> usize {
        self.word_ids.first().map_or(0, Vec::len)
    }

    pub fn padded_word_len(&self) -> usize {
        self.char_ids
            .first()
            .and_then(|r| r.first())
            .map_or(0, Vec::len)
    }

    /// Number of real (loss-bearing) words.
    pub fn n_words(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Positions `[BOS] .. [EOS]` of row `b`.
    pub fn span_len(&self, b: usize) -> usize {
        self.lengths[b] + 2
    }

    /// Char ids of word `i` in row `b`, with trailing `[PAD]` removed.
    /// An all-`[PAD]` row yields a single `[PAD]`.
    pub fn word_chars(&self, b: usize, i: usize) -> &[usize] {
        let row = &self.char_ids[b][i];
        let end = row
            .iter()
            .rposition(|&c| c != Vocabulary::CHAR_PAD)
            .map_or(1, |p| p + 1);
        &row[..end]
    }
}

pub fn format_batch(sentences: &[&Sentence], vocabulary: &Vocabulary) -> Result<FormattedBatch> {
    if sentences.is_empty() {
        return Err(Error::EmptyInput("format_batch needs at least one sentence".into()));
    }
    let padded_len = sentences.iter().map(|s| s.len()).max().unwrap_or(0) + 2;
    let padded_word_len = sentences
        .iter()
        .flat_map(|s| s.tokens.iter())
        .map(|t| t.chars().count())
        .max()
        .unwrap_or(0)
        + 2;

    let mut batch = FormattedBatch {
        word_ids: Vec::with_capacity(sentences.len()),
        char_ids: Vec::with_capacity(sentences.len()),
        tag_ids: Vec::with_capacity(sentences.len()),
        loss_mask: Vec::with_capacity(sentences.len()),
        sentence_ids: Vec::with_capacity(sentences.len()),
        lengths: Vec::with_capacity(sentences.len()),
    };
    let special_chars = {
        let mut r = vec![Vocabulary::CHAR_PAD; padded_word_len];
        r[0] = Vocabulary::BOW;
        r[1] = Vocabulary::EOW;
        r
    };
    let pad_chars = vec![Vocabulary::CHAR_PAD; padded_word_len];

    for s in sentences {
        let n = s.len();
        let mut words = Vec::with_capacity(padded_len);
        let mut chars = Vec::with_capacity(padded_len);
        let mut tags = vec![Vocabulary::TAG_O; padded_len];
        let mut mask = vec![false; padded_len];

        words.push(Vocabulary::BOS);
        chars.push(special_chars.clone());
        for (i, (tok, tag)) in s.tokens.iter().zip(&s.tags).enumerate() {
            words.push(vocabulary.word_id(tok));
            let mut row = Vec::with_capacity(padded_word_len);
            row.push(Vocabulary::BOW);
            row.extend(tok.chars().map(|c| vocabulary.char_id(c)));
            row.push(Vocabulary::EOW);
            row.resize(padded_word_len, Vocabulary::CHAR_PAD);
            chars.push(row);
            tags[i + 1] = vocabulary
                .tag_id(tag)
                .ok_or_else(|| Error::Contract(format!("tag {tag:?} of sentence {} not in vocabulary", s.id)))?;
            mask[i + 1] = true;
        }
        words.push(Vocabulary::EOS);
        chars.push(special_chars.clone());
        words.resize(padded_len, Vocabulary::PAD);
        chars.resize(padded_len, pad_chars.clone());

        batch.word_ids.push(words);
        batch.char_ids.push(chars);
        batch.tag_ids.push(tags);
        batch.loss_mask.push(mask);
        batch.sentence_ids.push(s.id);
        batch.lengths.push(n);
    }
    Ok(batch)
}

/// Bucket index for a sentence of `len` words.
pub fn bucket_of(len: usize) -> usize {
    BUCKET_BOUNDARIES
        .iter()
        .position(|&b| len <= b)
        .unwrap_or(BUCKET_BOUNDARIES.len())
}

/// Groups sentences by length bucket and cuts each bucket into batches of at
/// most `batch_size`. With an rng, sentence order inside buckets and batch
/// order are shuffled; without one the order is deterministic (bucket, then input order).
pub fn make_batches<R: Rng + ?Sized>(
    sentences: &[&Sentence],
    vocabulary: &Vocabulary,
    batch_size: usize,
    rng: Option<&mut R>,
) -> Result<Vec<FormattedBatch>> {
    if batch_size == 0 {
        return Err(Error::Param("batch size must be positive".into()));
    }
    let mut buckets: Vec<Vec<&Sentence>> = vec![Vec::new(); BUCKET_BOUNDARIES.len() + 1];
    for s in sentences {
        buckets[bucket_of(s.len())].push(s);
    }
    let mut groups: Vec<Vec<&Sentence>> = Vec::new();
    let mut rng = rng;
    for mut bucket in buckets {
        if let Some(r) = rng.as_deref_mut() {
            bucket.shuffle(r);
        }
        groups.extend(bucket.chunks(batch_size).map(<[_]>::to_vec));
    }
    if let Some(r) = rng {
        groups.shuffle(r);
    }
    groups.iter().map(|g| format_batch(g, vocabulary)).collect()
}

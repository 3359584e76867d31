//! Tagged corpora: ingest, tag-scheme handling, vocabularies, batching and
//! synthetic corpus generation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

mod batch;
mod conll;
mod embed;
mod synth;
pub(crate) mod vocab;

pub use batch::{bucket_of, make_batches, format_batch, FormattedBatch, BUCKET_BOUNDARIES};
pub use conll::{parse_conll, render_conll};
pub use embed::{load_embeddings, EmbeddingTable};
pub use synth::{synthesize_corpus, Family, TemplateSpec};
pub use vocab::{build_vocabulary, Vocabulary, BOS, BOW, EOS, EOW, GO, PAD, UNK, UNKCHAR};

/// Span-encoding tag scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TagScheme {
    Bio,
    Bioes,
}

impl TagScheme {
    fn prefixes(self) -> &'static [char] {
        match self {
            TagScheme::Bio => &['B', 'I'],
            TagScheme::Bioes => &['B', 'I', 'E', 'S'],
        }
    }

    /// Every tag of the scheme for the given entity types, `O` first.
    pub fn expand<'a>(self, types: impl IntoIterator<Item = &'a String>) -> Vec<String> {
        let mut tags = vec!["O".to_string()];
        for ty in types {
            for p in self.prefixes() {
                tags.push(format!("{p}-{ty}"));
            }
        }
        tags
    }

    /// Returns the entity type carried by `tag`, `None` for `O`.
    pub fn check_tag(self, tag: &str) -> Option<Option<&str>> {
        if tag == "O" {
            return Some(None);
        }
        let (prefix, ty) = tag.split_once('-')?;
        let mut chars = prefix.chars();
        let p = chars.next()?;
        if chars.next().is_some() || ty.is_empty() || !self.prefixes().contains(&p) {
            return None;
        }
        Some(Some(ty))
    }
}

impl fmt::Display for TagScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagScheme::Bio => "BIO",
            TagScheme::Bioes => "BIOES",
        })
    }
}

impl FromStr for TagScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BIO" | "IOB2" => Ok(TagScheme::Bio),
            "BIOES" | "IOBES" => Ok(TagScheme::Bioes),
            other => Err(Error::Param(format!("unknown tag scheme {other:?}"))),
        }
    }
}

/// One annotation unit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
    pub genre: Option<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// An entity mention: `(type, start, end)` with `end` inclusive.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub ty: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub scheme: TagScheme,
    pub entity_types: BTreeSet<String>,
}

impl Corpus {
    /// Validates every sentence under `scheme` and collects the entity types.
    pub fn new(sentences: Vec<Sentence>, scheme: TagScheme) -> Result<Self> {
        let mut entity_types = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for s in &sentences {
            if s.tokens.is_empty() || s.tokens.len() != s.tags.len() {
                return Err(Error::Contract(format!(
                    "sentence {} has {} tokens and {} tags",
                    s.id,
                    s.tokens.len(),
                    s.tags.len()
                )));
            }
            if !seen.insert(s.id) {
                return Err(Error::Contract(format!("duplicate sentence id {}", s.id)));
            }
            for tag in &s.tags {
                match scheme.check_tag(tag) {
                    Some(Some(ty)) => {
                        entity_types.insert(ty.to_string());
                    }
                    Some(None) => {}
                    None => {
                        return Err(Error::Scheme {
                            line: 0,
                            tag: tag.clone(),
                            scheme: scheme.to_string(),
                        })
                    }
                }
            }
        }
        Ok(Corpus {
            sentences,
            scheme,
            entity_types,
        })
    }

    pub fn empty(scheme: TagScheme) -> Self {
        Corpus {
            sentences: Vec::new(),
            scheme,
            entity_types: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Annotation cost of the whole corpus.
    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn get(&self, id: usize) -> Option<&Sentence> {
        // ids are usually positions; fall back to a scan for subsets
        match self.sentences.get(id) {
            Some(s) if s.id == id => Some(s),
            _ => self.sentences.iter().find(|s| s.id == id),
        }
    }

    /// Sentences with the given ids, in corpus order. Keeps the full entity type set.
    pub fn subset(&self, ids: &BTreeSet<usize>) -> Corpus {
        Corpus {
            sentences: self
                .sentences
                .iter()
                .filter(|s| ids.contains(&s.id))
                .cloned()
                .collect(),
            scheme: self.scheme,
            entity_types: self.entity_types.clone(),
        }
    }

    pub fn ids(&self) -> BTreeSet<usize> {
        self.sentences.iter().map(|s| s.id).collect()
    }
}

/// Extracts the gold spans of a well-formed tag sequence.
pub fn spans_strict(tags: &[String], scheme: TagScheme) -> std::result::Result<Vec<Span>, String> {
    let mut spans = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let ty = scheme
            .check_tag(tag)
            .ok_or_else(|| format!("tag {tag:?} is not valid in {scheme}"))?;
        let prefix = tag.as_bytes()[0];
        match (scheme, prefix, ty) {
            (_, b'O', None) => {
                if let Some((t, s)) = open.take() {
                    if scheme == TagScheme::Bioes {
                        return Err(format!("span {t} at {s} is not closed before position {i}"));
                    }
                    spans.push(Span { ty: t, start: s, end: i - 1 });
                }
            }
            (_, b'B', Some(t)) | (TagScheme::Bioes, b'S', Some(t)) => {
                if let Some((ot, s)) = open.take() {
                    if scheme == TagScheme::Bioes {
                        return Err(format!("span {ot} at {s} is not closed before position {i}"));
                    }
                    spans.push(Span { ty: ot, start: s, end: i - 1 });
                }
                if prefix == b'S' {
                    spans.push(Span { ty: t.to_string(), start: i, end: i });
                } else {
                    open = Some((t.to_string(), i));
                }
            }
            (_, b'I', Some(t)) | (TagScheme::Bioes, b'E', Some(t)) => match &open {
                Some((ot, s)) if ot == t => {
                    if prefix == b'E' {
                        spans.push(Span { ty: ot.clone(), start: *s, end: i });
                        open = None;
                    }
                }
                _ => return Err(format!("{tag} at position {i} without a preceding B-{t}")),
            },
            _ => return Err(format!("tag {tag:?} is not valid in {scheme}")),
        }
    }
    if let Some((t, s)) = open {
        if scheme == TagScheme::Bioes {
            return Err(format!("span {t} at {s} is not closed at end of sentence"));
        }
        spans.push(Span { ty: t, start: s, end: tags.len() - 1 });
    }
    Ok(spans)
}

/// Span extraction for possibly ill-formed predicted BIOES sequences: only
/// well-formed `S` and `B I* E` runs count, fragments are dropped.
pub fn spans_lenient(tags: &[&str]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(&str, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let Some((p, ty)) = tag.split_once('-') else {
            open = None;
            continue;
        };
        match p {
            "S" => {
                spans.push(Span { ty: ty.to_string(), start: i, end: i });
                open = None;
            }
            "B" => open = Some((ty, i)),
            "I" => {
                if !matches!(open, Some((t, _)) if t == ty) {
                    open = None;
                }
            }
            "E" => {
                if let Some((t, s)) = open.take() {
                    if t == ty {
                        spans.push(Span { ty: ty.to_string(), start: s, end: i });
                    }
                }
            }
            _ => open = None,
        }
    }
    spans
}

/// Renders spans back into tags of the given scheme.
pub fn tags_from_spans(len: usize, spans: &[Span], scheme: TagScheme) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    for sp in spans {
        if scheme == TagScheme::Bioes && sp.start == sp.end {
            tags[sp.start] = format!("S-{}", sp.ty);
            continue;
        }
        tags[sp.start] = format!("B-{}", sp.ty);
        for t in &mut tags[sp.start + 1..=sp.end] {
            *t = format!("I-{}", sp.ty);
        }
        if scheme == TagScheme::Bioes {
            tags[sp.end] = format!("E-{}", sp.ty);
        }
    }
    tags
}

/// Re-encodes every sentence in `target`, preserving spans exactly.
pub fn convert_scheme(corpus: &Corpus, target: TagScheme) -> Result<Corpus> {
    let mut sentences = Vec::with_capacity(corpus.len());
    for s in &corpus.sentences {
        let spans = spans_strict(&s.tags, corpus.scheme).map_err(|msg| Error::Conversion {
            sentence_id: s.id,
            msg,
        })?;
        sentences.push(Sentence {
            tags: tags_from_spans(s.len(), &spans, target),
            ..s.clone()
        });
    }
    Ok(Corpus {
        sentences,
        scheme: target,
        entity_types: corpus.entity_types.clone(),
    })
}

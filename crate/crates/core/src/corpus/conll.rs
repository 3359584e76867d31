use std::fmt::Write;

use super::{Corpus, Sentence, TagScheme};
use crate::{Error, Result};

const GENRE_PREFIX: &str = "#genre=";

/// Parses a column-format corpus: token first, tag last, blank line between
/// sentences, optional `#genre=<label>` line before a sentence.
pub fn parse_conll(text: &str, scheme: TagScheme) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut genre: Option<String> = None;

    let mut flush = |tokens: &mut Vec<String>, tags: &mut Vec<String>, genre: &mut Option<String>| {
        if tokens.is_empty() {
            return;
        }
        // CoNLL-2003 document separators are not sentences.
        if tokens.len() == 1 && tokens[0] == "-DOCSTART-" {
            tokens.clear();
            tags.clear();
            return;
        }
        sentences.push(Sentence {
            id: sentences.len(),
            tokens: std::mem::take(tokens),
            tags: std::mem::take(tags),
            genre: genre.take(),
        });
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            flush(&mut tokens, &mut tags, &mut genre);
            continue;
        }
        if let Some(label) = line.strip_prefix(GENRE_PREFIX) {
            if !tokens.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "genre annotation inside a sentence".into(),
                });
            }
            genre = Some(label.trim().to_string());
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 2 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected at least 2 columns, found {}", cols.len()),
            });
        }
        let tag = cols[cols.len() - 1];
        if scheme.check_tag(tag).is_none() {
            return Err(Error::Scheme {
                line: line_no,
                tag: tag.to_string(),
                scheme: scheme.to_string(),
            });
        }
        tokens.push(cols[0].to_string());
        tags.push(tag.to_string());
    }
    flush(&mut tokens, &mut tags, &mut genre);

    Corpus::new(sentences, scheme)
}

/// Inverse of [`parse_conll`] for corpora with sequential ids.
pub fn render_conll(corpus: &Corpus) -> String {
    let mut out = String::new();
    for s in &corpus.sentences {
        if let Some(g) = &s.genre {
            let _ = writeln!(out, "{GENRE_PREFIX}{g}");
        }
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            let _ = writeln!(out, "{tok} {tag}");
        }
        out.push('\n');
    }
    out
}

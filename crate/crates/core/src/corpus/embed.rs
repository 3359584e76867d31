use std::collections::{BTreeSet, HashMap};

use super::Vocabulary;
use crate::{Error, Result};

/// Pretrained word vectors restricted to a vocabulary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingTable {
    pub dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
    /// Vocabulary words with no vector in the file; initialized randomly downstream.
    pub missing: BTreeSet<String>,
}

impl EmbeddingTable {
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Reads `word v1 ... vd` lines. Every line must carry the same `d`.
pub fn load_embeddings(text: &str, vocabulary: &Vocabulary) -> Result<EmbeddingTable> {
    let mut dimension = None;
    let mut vectors = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values = parts
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Format {
                        line: line_no,
                        msg: format!("non-numeric component {v:?}"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let d = *dimension.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            return Err(Error::Format {
                line: line_no,
                msg: format!("expected {d} components, found {}", values.len()),
            });
        }
        if vocabulary.contains_word(word) {
            vectors.insert(word.to_string(), values);
        }
    }
    let missing = vocabulary
        .words
        .iter()
        .skip(4)
        .filter(|w| !vectors.contains_key(*w))
        .cloned()
        .collect();
    Ok(EmbeddingTable {
        dimension: dimension.unwrap_or(0),
        vectors,
        missing,
    })
}

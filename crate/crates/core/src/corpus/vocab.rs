use std::collections::{BTreeMap, HashMap};

use super::Corpus;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const BOS: &str = "[BOS]";
pub const EOS: &str = "[EOS]";
pub const BOW: &str = "[BOW]";
pub const EOW: &str = "[EOW]";
pub const UNKCHAR: &str = "[UNKCHAR]";
pub const GO: &str = "[GO]";

/// Dense id maps for words, characters and tags.
///
/// Word ids 0..4 are `[PAD] [UNK] [BOS] [EOS]`; char ids 0..4 are
/// `[PAD] [UNKCHAR] [BOW] [EOW]`. Tags are `O`, then every scheme tag for each
/// entity type in sorted order, then `[GO]` as the last id so that decoder
/// outputs index tags directly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pub words: Vec<String>,
    pub chars: Vec<char>,
    pub tags: Vec<String>,
    word_to_id: HashMap<String, usize>,
    char_to_id: HashMap<char, usize>,
    tag_to_id: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const BOS: usize = 2;
    pub const EOS: usize = 3;
    pub const CHAR_PAD: usize = 0;
    pub const UNKCHAR: usize = 1;
    pub const BOW: usize = 2;
    pub const EOW: usize = 3;
    pub const TAG_O: usize = 0;

    /// Reserved char symbols have no `char`; they sit in slots filled with NUL.
    const RESERVED_CHAR: char = '\0';

    /// Builds from explicit lists. `words` and `chars` exclude reserved
    /// symbols; `tags` exclude `[GO]`.
    pub fn from_parts(words: Vec<String>, chars: Vec<char>, tags: Vec<String>) -> Self {
        let mut all_words: Vec<String> = [PAD, UNK, BOS, EOS].iter().map(|s| s.to_string()).collect();
        all_words.extend(words.into_iter().filter(|w| ![PAD, UNK, BOS, EOS].contains(&w.as_str())));
        let mut all_chars = vec![Self::RESERVED_CHAR; 4];
        all_chars.extend(chars.into_iter().filter(|c| *c != Self::RESERVED_CHAR));
        let mut all_tags: Vec<String> = tags.into_iter().filter(|t| t != GO).collect();
        all_tags.push(GO.to_string());

        let word_to_id = all_words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let char_to_id = all_chars.iter().enumerate().skip(4).map(|(i, c)| (*c, i)).collect();
        let tag_to_id = all_tags.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            words: all_words,
            chars: all_chars,
            tags: all_tags,
            word_to_id,
            char_to_id,
            tag_to_id,
        }
    }

    pub fn word_id(&self, word: &str) -> usize {
        self.word_to_id.get(word).copied().unwrap_or(Self::UNK)
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.word_to_id.contains_key(word)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_to_id.get(&c).copied().unwrap_or(Self::UNKCHAR)
    }

    pub fn tag_id(&self, tag: &str) -> Option<usize> {
        self.tag_to_id.get(tag).copied()
    }

    pub fn tag(&self, id: usize) -> &str {
        &self.tags[id]
    }

    pub fn go_id(&self) -> usize {
        self.tags.len() - 1
    }

    /// Number of tags the decoder emits over (everything but `[GO]`).
    pub fn n_output_tags(&self) -> usize {
        self.tags.len() - 1
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    pub fn n_chars(&self) -> usize {
        self.chars.len()
    }
}

/// Words seen fewer than `unk_threshold` times are left out (they map to
/// `[UNK]`); every observed character is kept.
pub fn build_vocabulary(corpus: &Corpus, unk_threshold: usize) -> Vocabulary {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut chars = std::collections::BTreeSet::new();
    for s in &corpus.sentences {
        for tok in &s.tokens {
            *counts.entry(tok.as_str()).or_default() += 1;
            chars.extend(tok.chars());
        }
    }
    let mut words: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= unk_threshold).collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let tags = corpus.scheme.expand(&corpus.entity_types);
    Vocabulary::from_parts(
        words.into_iter().map(|(w, _)| w.to_string()).collect(),
        chars.into_iter().collect(),
        tags,
    )
}

/// Plain-text form used inside model files: one `kind=value` line per entry, in id order.
pub(crate) fn to_lines(v: &Vocabulary) -> Vec<(String, String)> {
    let mut out = Vec::new();
    out.extend(v.words.iter().skip(4).map(|w| ("word".to_string(), w.clone())));
    out.extend(v.chars.iter().skip(4).map(|c| ("char".to_string(), (*c as u32).to_string())));
    out.extend(v.tags.iter().filter(|t| *t != GO).map(|t| ("tag".to_string(), t.clone())));
    out
}

pub(crate) fn from_lines(map: &BTreeMap<&str, Vec<&str>>) -> Option<Vocabulary> {
    let get = |k: &str| map.get(k).cloned().unwrap_or_default();
    let chars = get("char")
        .into_iter()
        .map(|s| s.parse::<u32>().ok().and_then(char::from_u32))
        .collect::<Option<Vec<_>>>()?;
    Some(Vocabulary::from_parts(
        get("word").into_iter().map(str::to_string).collect(),
        chars,
        get("tag").into_iter().map(str::to_string).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_conll, TagScheme};

    #[test]
    fn threshold_excludes_rare_words() {
        let c = parse_conll("a O\na O\nb O\n", TagScheme::Bioes).unwrap();
        let v = build_vocabulary(&c, 2);
        assert!(v.contains_word("a"));
        assert!(!v.contains_word("b"));
        assert_eq!(v.word_id("b"), Vocabulary::UNK);
        // characters are never thresholded
        assert_ne!(v.char_id('b'), Vocabulary::UNKCHAR);
    }

    #[test]
    fn threshold_one_keeps_everything() {
        let c = parse_conll("a O\na O\nb O\n", TagScheme::Bioes).unwrap();
        let v = build_vocabulary(&c, 1);
        assert!(v.contains_word("a") && v.contains_word("b"));
    }

    #[test]
    fn tag_inventory_for_formatted_example() {
        let c = parse_conll("Kate S-PER\nlives O\non O\nMars S-LOC\n", TagScheme::Bioes).unwrap();
        let v = build_vocabulary(&c, 1);
        for t in ["O", "S-PER", "S-LOC", GO] {
            assert!(v.tag_id(t).is_some(), "{t}");
        }
        assert_eq!(v.tag_id("O"), Some(Vocabulary::TAG_O));
        assert_eq!(v.tag_id(GO), Some(v.go_id()));
    }

    #[test]
    fn reserved_symbols_once_and_dense() {
        let v = Vocabulary::from_parts(vec!["[PAD]".into(), "x".into()], vec!['x'], vec!["O".into(), GO.into()]);
        assert_eq!(v.words.iter().filter(|w| *w == PAD).count(), 1);
        assert_eq!(v.word_id("x"), 4);
        assert_eq!(v.char_id('x'), 4);
        assert_eq!(v.tags, ["O", GO]);
    }
}

//! Deterministic template-based corpora.
//!
//! A [`TemplateSpec`] lists template families (each family is also the genre
//! label of the sentences it produces). Templates are whitespace-tokenized
//! strings with `{TYPE}` slots filled from the family's gazetteer for that
//! entity type and `{name}` slots (lowercase) filled from the shared filler
//! lists with `O` tags.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{tags_from_spans, Corpus, Sentence, Span, TagScheme};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub text: String,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub name: String,
    pub weight: f64,
    pub templates: Vec<Template>,
    /// Entity type → surface forms (may be multi-token).
    pub gazetteers: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub families: Vec<Family>,
    #[serde(default)]
    pub fillers: BTreeMap<String, Vec<String>>,
}

enum Piece<'a> {
    Word(&'a str),
    Entity(&'a str),
    Filler(&'a str),
}

fn pieces(text: &str) -> impl Iterator<Item = Piece<'_>> {
    text.split_whitespace().map(|tok| {
        match tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
            Some(slot) if slot.chars().next().is_some_and(char::is_uppercase) => Piece::Entity(slot),
            Some(slot) if !slot.is_empty() => Piece::Filler(slot),
            _ => Piece::Word(tok),
        }
    })
}

impl TemplateSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::SynthSpec(m));
        if self.families.len() < 2 {
            return err(format!("need at least 2 template families, found {}", self.families.len()));
        }
        for (name, list) in &self.fillers {
            if list.iter().all(|s| s.split_whitespace().next().is_none()) {
                return err(format!("filler list {name:?} is empty"));
            }
        }
        for f in &self.families {
            if !(f.weight > 0.0 && f.weight.is_finite()) {
                return err(format!("family {:?} has non-positive weight", f.name));
            }
            if f.gazetteers.len() < 2 {
                return err(format!("family {:?} needs gazetteers for at least 2 entity types", f.name));
            }
            for (ty, list) in &f.gazetteers {
                if list.is_empty() || list.iter().any(|s| s.split_whitespace().next().is_none()) {
                    return err(format!("family {:?} has an empty gazetteer for {ty}", f.name));
                }
                if ty.contains('-') || ty.contains(char::is_whitespace) {
                    return err(format!("entity type {ty:?} may not contain '-' or spaces"));
                }
            }
            if f.templates.is_empty() {
                return err(format!("family {:?} has no templates", f.name));
            }
            for t in &f.templates {
                if !(t.weight > 0.0 && t.weight.is_finite()) {
                    return err(format!("template {:?} has non-positive weight", t.text));
                }
                if t.text.split_whitespace().next().is_none() {
                    return err("empty template".into());
                }
                for p in pieces(&t.text) {
                    match p {
                        Piece::Entity(ty) if !f.gazetteers.contains_key(ty) => {
                            return err(format!("template {:?} uses {ty} without a gazetteer", t.text))
                        }
                        Piece::Filler(name) if !self.fillers.contains_key(name) => {
                            return err(format!("template {:?} uses unknown filler {name}", t.text))
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }

    /// The stock four-type, two-genre spec used by desk-scale experiments.
    ///
    /// Genre `news` is capitalized prose; genre `chat` is lowercased with
    /// different phrasing, so a model that never saw it is unsure there.
    /// Template weights are Zipf-like inside each family: a few frames are
    /// frequent and easy, many are rare and only learnable by seeing them.
    pub fn desk() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_da7a);
        let per = name_pool(&mut rng, 160, &PER_SYL, &[""], 2);
        let last = name_pool(&mut rng, 160, &PER_SYL, &["son", "ez", "ski", "er", ""], 2);
        let loc = name_pool(&mut rng, 160, &LOC_SYL, &["ia", "ton", "burg", "land", "ville", "or"], 2);
        let org_head = name_pool(&mut rng, 80, &ORG_SYL, &["ex", "tron", "corp", "co", "ify"], 2);
        let misc = name_pool(&mut rng, 80, &LOC_SYL, &["ish", "ese", "ian", "ic"], 1);

        let persons: Vec<String> = per
            .iter()
            .zip(last.iter().cycle().skip(7))
            .enumerate()
            .map(|(i, (f, l))| if i % 3 == 0 { f.clone() } else { format!("{f} {l}") })
            .collect();
        let orgs: Vec<String> = org_head
            .iter()
            .enumerate()
            .map(|(i, h)| match i % 4 {
                0 => format!("{h} Corp"),
                1 => format!("{h} Group"),
                // organisation names built from place names: ambiguous heads
                2 => format!("{} Bank", loc[i % loc.len()]),
                _ => h.clone(),
            })
            .collect();
        let lower = |v: &[String]| v.iter().map(|s| s.to_lowercase()).collect::<Vec<_>>();

        let news_templates = [
            "{PER} visited {LOC} on {day} .",
            "{ORG} said on {day} that profits rose in {LOC} .",
            "{PER} , a spokesman for {ORG} , declined to comment .",
            "The {MISC} delegation arrived in {LOC} .",
            "Shares of {ORG} fell {num} percent .",
            "{PER} met {PER} in {LOC} .",
            "{LOC} and {LOC} signed a trade pact .",
            "{ORG} hired {PER} as chief executive .",
            "{PER} won the {MISC} open in {LOC} .",
            "Officials in {LOC} blamed {ORG} for the delay .",
            "{MISC} voters backed {PER} .",
            "{PER} told reporters in {LOC} that {ORG} would expand .",
            "Police in {LOC} arrested {num} people .",
            "{ORG} agreed to buy {ORG} for {num} million .",
            "The {MISC} team beat {LOC} {num} to {num} .",
            "{PER} will lead {ORG} from {day} .",
            "Floods hit {LOC} on {day} .",
            "{PER} of {LOC} finished second .",
            "Analysts at {ORG} expect growth in {LOC} .",
            "{MISC} officials said {PER} resigned .",
        ];
        let chat_templates = [
            "yeah i saw {PER} at {LOC} {day}",
            "lol {ORG} is down again",
            "did {PER} ever call you back",
            "we drove to {LOC} with {PER}",
            "my cousin works for {ORG} in {LOC}",
            "that {MISC} place near {LOC} is great",
            "{PER} and {PER} are coming {day}",
            "ugh {ORG} charged me {num} bucks",
            "is {LOC} nice this time of year",
            "tell {PER} i said hi",
            "{ORG} support never answers",
            "moving to {LOC} next {day} maybe",
            "anyone know {PER} from {ORG}",
            "the {MISC} food in {LOC} was amazing",
            "{PER} thinks {ORG} will win",
            "flight to {LOC} got cancelled",
            "ok see you at {ORG} {day}",
            "{PER} posted pics from {LOC}",
            "best {MISC} movie ever",
            "why is {ORG} so slow",
        ];
        let zipf = |texts: &[&str]| {
            texts
                .iter()
                .enumerate()
                .map(|(r, t)| Template {
                    text: t.to_string(),
                    weight: 1.0 / (r as f64 + 1.0),
                })
                .collect::<Vec<_>>()
        };
        let gaz = |lowercase: bool| {
            let f = |v: &[String]| if lowercase { lower(v) } else { v.to_vec() };
            BTreeMap::from([
                ("PER".to_string(), f(&persons)),
                ("LOC".to_string(), f(&loc)),
                ("ORG".to_string(), f(&orgs)),
                ("MISC".to_string(), f(&misc)),
            ])
        };

        TemplateSpec {
            families: vec![
                Family {
                    name: "news".into(),
                    weight: 0.5,
                    templates: zipf(&news_templates),
                    gazetteers: gaz(false),
                },
                Family {
                    name: "chat".into(),
                    weight: 0.5,
                    templates: zipf(&chat_templates),
                    gazetteers: gaz(true),
                },
            ],
            fillers: BTreeMap::from([
                (
                    "day".to_string(),
                    ["Monday", "Tuesday", "Wednesday", "Friday", "Sunday", "today", "tomorrow"]
                        .map(String::from)
                        .to_vec(),
                ),
                ("num".to_string(), (1..=40).map(|n| n.to_string()).collect()),
            ]),
        }
    }

    /// Two generic families over `n_types` entity types named `T0, T1, ...`.
    /// Used for decoder timing where only the tag inventory size matters.
    pub fn with_types(n_types: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7a65 + n_types as u64);
        let types: Vec<String> = (0..n_types).map(|i| format!("T{i}")).collect();
        let gazetteers: BTreeMap<String, Vec<String>> = types
            .iter()
            .map(|t| (t.clone(), name_pool(&mut rng, 12, &ORG_SYL, &[""], 2)))
            .collect();
        let family = |name: &str, frames: &[&str]| {
            let templates = (0..n_types)
                .map(|i| Template {
                    text: frames[i % frames.len()]
                        .replace("{A}", &format!("{{{}}}", types[i]))
                        .replace("{B}", &format!("{{{}}}", types[(i * 7 + 3) % n_types])),
                    weight: 1.0,
                })
                .collect();
            Family {
                name: name.to_string(),
                weight: 1.0,
                templates,
                gazetteers: gazetteers.clone(),
            }
        };
        TemplateSpec {
            families: vec![
                family("a", &["the {A} was seen near {B} today", "{A} and {B} met"]),
                family("b", &["report from {A} about {B}", "{B} said {A} left early"]),
            ],
            fillers: BTreeMap::new(),
        }
    }

    /// Entity types across all families, sorted.
    pub fn entity_types(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .families
            .iter()
            .flat_map(|f| f.gazetteers.keys().cloned())
            .collect();
        v.sort();
        v.dedup();
        v
    }
}

const PER_SYL: [&str; 16] = [
    "ka", "te", "jo", "mar", "li", "an", "ro", "be", "sa", "mi", "da", "vi", "el", "no", "ra", "tho",
];
const LOC_SYL: [&str; 14] = [
    "mor", "val", "den", "bri", "sto", "kel", "ar", "lan", "wes", "tor", "gal", "pen", "rho", "dun",
];
const ORG_SYL: [&str; 12] = ["zen", "qua", "vex", "plo", "syn", "dat", "tek", "lum", "kor", "ny", "bix", "fy"];

/// `n` distinct capitalized names of `1..=max_syl + 1` syllables plus a suffix.
fn name_pool(rng: &mut ChaCha8Rng, n: usize, syl: &[&str], suffixes: &[&str], max_syl: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(n);
    let mut seen = std::collections::BTreeSet::new();
    while out.len() < n {
        let k = rng.gen_range(1..=max_syl + 1);
        let mut s: String = (0..k).map(|_| *syl.choose(rng).unwrap()).collect();
        s.push_str(suffixes.choose(rng).unwrap());
        let mut c = s.chars();
        let cap: String = c.next().unwrap().to_uppercase().chain(c).collect();
        if seen.insert(cap.clone()) {
            out.push(cap);
        }
    }
    out
}

/// Deterministic in `(seed, spec)`. Sentence ids run from 0; genre = family name.
pub fn synthesize_corpus(seed: u64, n_sentences: usize, spec: &TemplateSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family_dist = WeightedIndex::new(spec.families.iter().map(|f| f.weight))
        .map_err(|e| Error::SynthSpec(e.to_string()))?;
    let template_dists = spec
        .families
        .iter()
        .map(|f| WeightedIndex::new(f.templates.iter().map(|t| t.weight)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::SynthSpec(e.to_string()))?;

    let mut sentences = Vec::with_capacity(n_sentences);
    for id in 0..n_sentences {
        let fi = family_dist.sample(&mut rng);
        let family = &spec.families[fi];
        let template = &family.templates[template_dists[fi].sample(&mut rng)];
        let mut tokens: Vec<String> = Vec::new();
        let mut spans = Vec::new();
        for piece in pieces(&template.text) {
            match piece {
                Piece::Word(w) => tokens.push(w.to_string()),
                Piece::Filler(name) => {
                    let choice = spec.fillers[name].choose(&mut rng).unwrap();
                    tokens.extend(choice.split_whitespace().map(str::to_string));
                }
                Piece::Entity(ty) => {
                    let choice = family.gazetteers[ty].choose(&mut rng).unwrap();
                    let start = tokens.len();
                    tokens.extend(choice.split_whitespace().map(str::to_string));
                    spans.push(Span {
                        ty: ty.to_string(),
                        start,
                        end: tokens.len() - 1,
                    });
                }
            }
        }
        sentences.push(Sentence {
            id,
            tags: tags_from_spans(tokens.len(), &spans, TagScheme::Bioes),
            tokens,
            genre: Some(family.name.clone()),
        });
    }
    let mut corpus = Corpus::new(sentences, TagScheme::Bioes)?;
    // the tag inventory covers the spec, not just what this sample happened to draw
    corpus.entity_types.extend(spec.entity_types());
    Ok(corpus)
}

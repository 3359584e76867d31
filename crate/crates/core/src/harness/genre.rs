use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentConfig, QueryStrategy, Simulation};
use crate::active::{select, SelectionResult, Strategy};
use crate::corpus::Corpus;
use crate::Result;

/// Label used for sentences without a genre.
pub const UNKNOWN_GENRE: &str = "unknown";

/// Genre counts over a selection; the counts sum to the selection size.
pub fn genre_histogram(selection: &SelectionResult, corpus: &Corpus) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for id in &selection.chosen {
        let genre = corpus
            .get(*id)
            .and_then(|s| s.genre.clone())
            .unwrap_or_else(|| UNKNOWN_GENRE.to_string());
        *out.entry(genre).or_insert(0) += 1;
    }
    out
}

/// CSV with header `genre,count`.
pub fn write_histogram_csv<W: Write>(hist: &BTreeMap<String, usize>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["genre", "count"])?;
    for (g, c) in hist {
        out.write_record([g.as_str(), &c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenreShift {
    pub excluded: String,
    /// Histogram of the top batch after a warm start without `excluded`.
    pub biased: BTreeMap<String, usize>,
    /// Histogram of the top batch after an unrestricted warm start of the same size.
    pub unbiased: BTreeMap<String, usize>,
}

fn share(hist: &BTreeMap<String, usize>, genre: &str) -> f64 {
    let total: usize = hist.values().sum();
    if total == 0 {
        0.0
    } else {
        hist.get(genre).copied().unwrap_or(0) as f64 / total as f64
    }
}

impl GenreShift {
    pub fn biased_share(&self) -> f64 {
        share(&self.biased, &self.excluded)
    }

    pub fn unbiased_share(&self) -> f64 {
        share(&self.unbiased, &self.excluded)
    }
}

/// Trains on two warm starts (one leaving out `excluded`) and compares the
/// genre mix of the first MNLP batch of `top_budget` words.
pub fn genre_shift(config: &ExperimentConfig, corpus: &Corpus, excluded: &str, top_budget: usize) -> Result<GenreShift> {
    let run = |exclude: Option<String>| -> Result<BTreeMap<String, usize>> {
        let cfg = ExperimentConfig {
            strategy: QueryStrategy::Mnlp,
            exclude_genre: exclude,
            ..config.clone()
        };
        let sim = Simulation::start(&cfg, corpus)?;
        let pool = sim.pool();
        let mut rng = super::experiment::stream(cfg.seed, 5);
        let sel = select(Strategy::Mnlp, &pool, &sim.labeled, &sim.model, top_budget, cfg.bald_m, &mut rng)?;
        Ok(genre_histogram(&sel, corpus))
    };
    Ok(GenreShift {
        excluded: excluded.to_string(),
        biased: run(Some(excluded.to_string()))?,
        unbiased: run(None)?,
    })
}

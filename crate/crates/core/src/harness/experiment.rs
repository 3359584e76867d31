use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::f1::evaluate_span_f1;
use crate::active::{select, SelectionResult, Strategy};
use crate::corpus::{build_vocabulary, make_batches, Corpus, Sentence};
use crate::submod::{submod_select, SubmodParams};
use crate::tagger::{train_epoch, TaggerConfig, TaggerModel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum QueryStrategy {
    Rand,
    Lc,
    Mnlp,
    Bald,
    Submod,
}

impl fmt::Display for QueryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.uncertainty() {
            Some(s) => s.fmt(f),
            None => f.write_str("SUBMOD"),
        }
    }
}

impl FromStr for QueryStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("SUBMOD") {
            return Ok(QueryStrategy::Submod);
        }
        Ok(match s.parse::<Strategy>()? {
            Strategy::Rand => QueryStrategy::Rand,
            Strategy::Lc => QueryStrategy::Lc,
            Strategy::Mnlp => QueryStrategy::Mnlp,
            Strategy::Bald => QueryStrategy::Bald,
        })
    }
}

impl QueryStrategy {
    pub fn uncertainty(self) -> Option<Strategy> {
        match self {
            QueryStrategy::Rand => Some(Strategy::Rand),
            QueryStrategy::Lc => Some(Strategy::Lc),
            QueryStrategy::Mnlp => Some(Strategy::Mnlp),
            QueryStrategy::Bald => Some(Strategy::Bald),
            QueryStrategy::Submod => None,
        }
    }
}

/// One simulated active-learning experiment. Field names double as the JSON
/// config keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: QueryStrategy,
    pub rounds: usize,
    /// Words selected per round.
    pub budget_per_round: usize,
    /// Fraction of corpus sentences labeled before the first round.
    pub warm_start_fraction: f64,
    /// Epochs over the whole labeled set after each round.
    pub passes_per_round: usize,
    /// Epochs on the warm-start set.
    pub warm_start_epochs: usize,
    pub seed: u64,
    /// Tagger preset name (`tiny`, `desk`, `paper`, `tiny-crf`, `desk-crf`).
    pub tagger: String,
    pub bald_m: usize,
    pub submod: SubmodParams,
    pub lr: f64,
    pub batch_size: usize,
    pub unk_threshold: usize,
    /// Genre left out of the warm start.
    pub exclude_genre: Option<String>,
    /// Fill the curve's `seconds` column with wall-clock time. Off by default
    /// so that curves are byte-reproducible.
    pub record_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            strategy: QueryStrategy::Mnlp,
            rounds: 10,
            budget_per_round: 1000,
            warm_start_fraction: 0.02,
            passes_per_round: 2,
            warm_start_epochs: 10,
            seed: 0,
            tagger: "tiny".into(),
            bald_m: 8,
            submod: SubmodParams::default(),
            lr: 1.0,
            batch_size: 8,
            unk_threshold: 1,
            exclude_genre: None,
            record_time: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.warm_start_fraction > 0.0 && self.warm_start_fraction <= 1.0) {
            return Err(Error::Param("warm_start_fraction must lie in (0, 1]".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::Param("lr must be non-negative".into()));
        }
        if self.strategy == QueryStrategy::Bald && self.bald_m < 2 {
            return Err(Error::Param("bald_m must be at least 2".into()));
        }
        TaggerConfig::preset(&self.tagger)?;
        Ok(())
    }
}

/// Independent named streams derived from one experiment seed.
pub(crate) fn stream(seed: u64, which: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(which);
    r
}

const WARM_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;
const SELECT_STREAM: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub round: usize,
    /// Cumulative labeled words, warm start included.
    pub words: usize,
    pub percent: f64,
    pub f1: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub strategy: QueryStrategy,
    pub seed: u64,
    pub records: Vec<CurveRecord>,
    /// The batch chosen in each round, in round order.
    pub selections: Vec<SelectionResult>,
}

impl LearningCurve {
    /// Trapezoidal area under F1 against percent of words, over the recorded range.
    pub fn auc(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| (w[1].percent - w[0].percent) * (w[0].f1 + w[1].f1) / 2.0)
            .sum()
    }

    /// Smallest percent of words at which F1 reaches `target`, if ever.
    pub fn percent_reaching(&self, target: f64) -> Option<f64> {
        self.records.iter().find(|r| r.f1 >= target).map(|r| r.percent)
    }

    /// CSV with header `round,words,percent,f1,seconds`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["round", "words", "percent", "f1", "seconds"])?;
        for r in &self.records {
            out.write_record([
                r.round.to_string(),
                r.words.to_string(),
                format!("{:.6}", r.percent),
                format!("{:.6}", r.f1),
                format!("{:.3}", r.seconds),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Seeded random warm-start ids: `ceil(fraction · N)` sentences, drawn from
/// sentences outside `exclude_genre` when given.
pub fn warm_start_ids(
    corpus: &Corpus,
    fraction: f64,
    exclude_genre: Option<&str>,
    seed: u64,
) -> BTreeSet<usize> {
    let n = (fraction * corpus.len() as f64).ceil() as usize;
    let mut eligible: Vec<usize> = corpus
        .sentences
        .iter()
        .filter(|s| exclude_genre.is_none() || s.genre.as_deref() != exclude_genre)
        .map(|s| s.id)
        .collect();
    eligible.shuffle(&mut stream(seed, WARM_STREAM));
    eligible.into_iter().take(n).collect()
}

/// Fresh model with the vocabulary of `corpus` (tokens only; tags are not read).
pub fn init_model(config: &ExperimentConfig, corpus: &Corpus) -> Result<TaggerModel> {
    let vocab = build_vocabulary(corpus, config.unk_threshold);
    let tagger = TaggerConfig::preset(&config.tagger)?;
    TaggerModel::new(tagger, vocab, None, &mut stream(config.seed, INIT_STREAM))
}

/// `epochs` passes over `sentences`, re-bucketed and reshuffled each pass.
pub fn train_on(
    model: &mut TaggerModel,
    sentences: &[&Sentence],
    epochs: usize,
    config: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut loss = 0.0;
    if sentences.is_empty() {
        return Ok(loss);
    }
    for _ in 0..epochs {
        let batches = make_batches(sentences, &model.vocab, config.batch_size, Some(&mut *rng))?;
        loss = train_epoch(model, &batches, config.lr, rng)?;
    }
    Ok(loss)
}

/// State of a running simulation: the model, the labeled set and the rng streams.
pub struct Simulation<'a> {
    pub config: &'a ExperimentConfig,
    pub corpus: &'a Corpus,
    pub model: TaggerModel,
    pub labeled: BTreeSet<usize>,
    train_rng: ChaCha8Rng,
    select_rng: ChaCha8Rng,
}

impl<'a> Simulation<'a> {
    /// Builds the model and trains it on the warm start.
    pub fn start(config: &'a ExperimentConfig, corpus: &'a Corpus) -> Result<Self> {
        config.validate()?;
        let labeled = warm_start_ids(
            corpus,
            config.warm_start_fraction,
            config.exclude_genre.as_deref(),
            config.seed,
        );
        let mut sim = Simulation {
            config,
            corpus,
            model: init_model(config, corpus)?,
            labeled,
            train_rng: stream(config.seed, TRAIN_STREAM),
            select_rng: stream(config.seed, SELECT_STREAM),
        };
        let warm = sim.labeled_sentences();
        train_on(&mut sim.model, &warm, config.warm_start_epochs, config, &mut sim.train_rng)?;
        Ok(sim)
    }

    pub fn labeled_sentences(&self) -> Vec<&'a Sentence> {
        self.corpus
            .sentences
            .iter()
            .filter(|s| self.labeled.contains(&s.id))
            .collect()
    }

    pub fn pool(&self) -> Vec<&'a Sentence> {
        self.corpus
            .sentences
            .iter()
            .filter(|s| !self.labeled.contains(&s.id))
            .collect()
    }

    pub fn labeled_words(&self) -> usize {
        self.labeled_sentences().iter().map(|s| s.len()).sum()
    }

    /// Scores the pool on the frozen model and picks a batch within the round budget.
    pub fn query(&mut self) -> Result<SelectionResult> {
        let pool = self.pool();
        match self.config.strategy.uncertainty() {
            Some(s) => select(
                s,
                &pool,
                &self.labeled,
                &self.model,
                self.config.budget_per_round,
                self.config.bald_m,
                &mut self.select_rng,
            ),
            None => submod_select(
                &self.model,
                &pool,
                &self.labeled_sentences(),
                self.config.budget_per_round,
                &self.config.submod,
                self.config.bald_m,
                &mut self.select_rng,
            ),
        }
    }

    /// Reveals gold tags for `selection` and continues training on the whole labeled set.
    pub fn annotate_and_train(&mut self, selection: &SelectionResult) -> Result<()> {
        self.labeled.extend(selection.chosen.iter().copied());
        let labeled = self.labeled_sentences();
        let epochs = self.config.passes_per_round;
        train_on(&mut self.model, &labeled, epochs, self.config, &mut self.train_rng)?;
        Ok(())
    }
}

/// The full loop: warm start, then `rounds` rounds of query, annotate,
/// retrain and evaluate. Stops early when the pool is exhausted or nothing fits.
pub fn run_active_learning(config: &ExperimentConfig, corpus: &Corpus, test: &Corpus) -> Result<LearningCurve> {
    let clock = Instant::now();
    let total_words = corpus.word_count().max(1) as f64;
    let seconds = |c: &Instant| if config.record_time { c.elapsed().as_secs_f64() } else { 0.0 };
    let mut sim = Simulation::start(config, corpus)?;
    let mut words = sim.labeled_words();
    let mut records = vec![CurveRecord {
        round: 0,
        words,
        percent: 100.0 * words as f64 / total_words,
        f1: evaluate_span_f1(&sim.model, test)?.f1,
        seconds: seconds(&clock),
    }];
    let mut selections = Vec::new();
    for round in 1..=config.rounds {
        if sim.pool().is_empty() {
            break;
        }
        let sel = sim.query()?;
        if sel.chosen.is_empty() {
            break;
        }
        sim.annotate_and_train(&sel)?;
        words += sel.words_used;
        records.push(CurveRecord {
            round,
            words,
            percent: 100.0 * words as f64 / total_words,
            f1: evaluate_span_f1(&sim.model, test)?.f1,
            seconds: seconds(&clock),
        });
        selections.push(sel);
    }
    Ok(LearningCurve {
        strategy: config.strategy,
        seed: config.seed,
        records,
        selections,
    })
}

/// Test F1 after training on every sentence of `corpus` for `epochs` epochs.
pub fn full_data_f1(config: &ExperimentConfig, corpus: &Corpus, test: &Corpus, epochs: usize) -> Result<f64> {
    let mut model = init_model(config, corpus)?;
    let all: Vec<&Sentence> = corpus.sentences.iter().collect();
    train_on(&mut model, &all, epochs, config, &mut stream(config.seed, TRAIN_STREAM))?;
    Ok(evaluate_span_f1(&model, test)?.f1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundAggregate {
    pub round: usize,
    pub n: usize,
    pub words_mean: f64,
    pub percent_mean: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub curves: Vec<LearningCurve>,
    pub rounds: Vec<RoundAggregate>,
}

impl Replication {
    /// CSV with header `round,n,words_mean,percent_mean,f1_mean,f1_std`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["round", "n", "words_mean", "percent_mean", "f1_mean", "f1_std"])?;
        for r in &self.rounds {
            out.write_record([
                r.round.to_string(),
                r.n.to_string(),
                format!("{:.3}", r.words_mean),
                format!("{:.6}", r.percent_mean),
                format!("{:.6}", r.f1_mean),
                format!("{:.6}", r.f1_std),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-round mean and (population) standard deviation over curves; a round
/// is aggregated over the curves that reached it.
pub fn aggregate(curves: &[LearningCurve]) -> Vec<RoundAggregate> {
    let mut by_round: BTreeMap<usize, Vec<&CurveRecord>> = BTreeMap::new();
    for c in curves {
        for r in &c.records {
            by_round.entry(r.round).or_default().push(r);
        }
    }
    by_round
        .into_iter()
        .map(|(round, recs)| {
            let f1: Vec<f64> = recs.iter().map(|r| r.f1).collect();
            let (f1_mean, f1_std) = mean_std(&f1);
            let n = recs.len() as f64;
            RoundAggregate {
                round,
                n: recs.len(),
                words_mean: recs.iter().map(|r| r.words as f64).sum::<f64>() / n,
                percent_mean: recs.iter().map(|r| r.percent).sum::<f64>() / n,
                f1_mean,
                f1_std,
            }
        })
        .collect()
}

/// Runs `n_seeds` experiments with seeds `config.seed + offset`.
pub fn replicate(config: &ExperimentConfig, corpus: &Corpus, test: &Corpus, n_seeds: usize) -> Result<Replication> {
    if n_seeds == 0 {
        return Err(Error::Param("replicate needs at least one seed".into()));
    }
    let curves = (0..n_seeds as u64)
        .map(|off| {
            let cfg = ExperimentConfig {
                seed: config.seed + off,
                ..config.clone()
            };
            run_active_learning(&cfg, corpus, test)
        })
        .collect::<Result<Vec<_>>>()?;
    let rounds = aggregate(&curves);
    Ok(Replication { curves, rounds })
}

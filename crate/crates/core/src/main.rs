use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use altag::active::{rank, score_pool, write_scores_csv, SelectionResult, Strategy};
use altag::corpus::{convert_scheme, parse_conll, render_conll, synthesize_corpus, Corpus, Sentence, TagScheme, TemplateSpec};
use altag::harness::{
    bench_decoder, evaluate_span_f1, genre_histogram, genre_shift, init_model, replicate, run_active_learning,
    train_on, write_bench_csv, write_histogram_csv, BenchSettings, ExperimentConfig, QueryStrategy, Simulation,
};
use altag::nnkernel::Mode;
use altag::submod::{random_instance, DenseInstance, EmbeddingKind, Kernel};
use altag::tagger::{gradient_check, Decoder, TaggerConfig, TaggerModel};
use altag::{Error, Result};

/// Offset between the seed of a synthetic training corpus and its test split.
const TEST_SEED_OFFSET: u64 = 0x9E37_79B9;

#[derive(Parser)]
#[command(name = "altag", version, about = "Active learning for named-entity tagging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic tagged corpus in column format.
    SynthData(SynthArgs),
    /// Train a tagger on a full corpus and save it.
    Train(TrainArgs),
    /// Span F1 of a saved tagger on a test corpus.
    Eval(EvalArgs),
    /// One simulated active-learning run.
    ActiveRun(ActiveArgs),
    /// Active-learning runs over consecutive seeds with per-round mean and std.
    Replicate(ReplicateArgs),
    /// Streaming submodular maximization against the exhaustive optimum.
    SubmodCheck(SubmodArgs),
    /// Finite-difference check of the tagger loss gradients.
    GradCheck(GradArgs),
    /// Epoch time of the LSTM decoder and the CRF across entity-type counts.
    BenchDecoder(BenchArgs),
    /// Genre mix of the first MNLP batch with and without a genre in the warm start.
    GenreShift(GenreArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    sentences: usize,
    /// Entity types; the default uses the four-type, two-genre template set.
    #[arg(long)]
    types: Option<usize>,
    #[arg(long, default_value = "BIOES")]
    scheme: TagScheme,
    #[arg(long)]
    out: PathBuf,
}

/// Where the corpora come from. Without files, corpora are synthesized.
#[derive(Args)]
struct DataArgs {
    /// Training corpus (column format).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Test corpus (column format).
    #[arg(long)]
    test: Option<PathBuf>,
    /// Tag scheme of the input files; BIO input is converted to BIOES.
    #[arg(long, default_value = "BIOES")]
    scheme: TagScheme,
    /// Seed of the synthetic corpora (defaults to the experiment seed).
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long, default_value_t = 5000)]
    train_sentences: usize,
    #[arg(long, default_value_t = 1000)]
    test_sentences: usize,
}

/// Overrides for [`ExperimentConfig`] fields, applied on top of `--config`.
#[derive(Args)]
struct ConfigArgs {
    /// JSON file with ExperimentConfig fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    strategy: Option<QueryStrategy>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    budget_per_round: Option<usize>,
    #[arg(long)]
    warm_start_fraction: Option<f64>,
    #[arg(long)]
    passes_per_round: Option<usize>,
    #[arg(long)]
    warm_start_epochs: Option<usize>,
    #[arg(long)]
    tagger: Option<String>,
    #[arg(long)]
    bald_m: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    unk_threshold: Option<usize>,
    #[arg(long)]
    exclude_genre: Option<String>,
    #[arg(long)]
    record_time: Option<bool>,
    #[arg(long)]
    submod_t: Option<usize>,
    #[arg(long)]
    submod_eps: Option<f64>,
    #[arg(long)]
    submod_base: Option<Strategy>,
    #[arg(long)]
    submod_kind: Option<EmbeddingKind>,
    #[arg(long)]
    submod_kernel: Option<Kernel>,
    #[arg(long)]
    submod_weighted: Option<bool>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Where to save the trained model.
    #[arg(long)]
    model: PathBuf,
    /// CSV `epoch,loss`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    data: DataArgs,
    /// CSV `type,precision,recall,f1,true_pos,predicted,gold`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ActiveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Learning curve CSV.
    #[arg(long)]
    out: PathBuf,
    /// Pool scores under the final model.
    #[arg(long)]
    scores_out: Option<PathBuf>,
    /// Genre histogram of all selected sentences.
    #[arg(long)]
    genres_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplicateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 8)]
    n_seeds: usize,
    /// Per-round aggregate CSV.
    #[arg(long)]
    out: PathBuf,
    /// Directory for one learning curve per seed.
    #[arg(long)]
    curves_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SubmodArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 12)]
    max_pool: usize,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Check a single instance from CSV instead of random ones.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Directory where violating instances are dumped.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
    /// CSV `instance,value,opt,delta,bound,cost,budget,holds`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "tiny")]
    tagger: String,
    /// Check the CRF decoder instead of the preset's decoder.
    #[arg(long)]
    crf: bool,
    #[arg(long, default_value_t = 4)]
    sentences: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Entries checked per parameter.
    #[arg(long, default_value_t = 20)]
    limit: usize,
    /// CSV `checked,max_rel_err,worst_param,worst_index`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    types: Vec<usize>,
    #[arg(long, default_value = "tiny")]
    tagger: String,
    #[arg(long, default_value_t = 300)]
    sentences: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenreArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Genre left out of the biased warm start.
    #[arg(long)]
    excluded: String,
    /// Word budget of the compared batch.
    #[arg(long, default_value_t = 1000)]
    top_budget: usize,
    /// CSV `warm_start,genre,count`.
    #[arg(long)]
    out: PathBuf,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c: ExperimentConfig = match &self.config {
            Some(p) => serde_json::from_str(&read(p)?)?,
            None => ExperimentConfig::default(),
        };
        c.seed = self.seed;
        macro_rules! set {
            ($($field:ident => $($target:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$field { c.$($target).+ = v.clone(); })*
            };
        }
        set!(
            strategy => strategy,
            rounds => rounds,
            budget_per_round => budget_per_round,
            warm_start_fraction => warm_start_fraction,
            passes_per_round => passes_per_round,
            warm_start_epochs => warm_start_epochs,
            tagger => tagger,
            bald_m => bald_m,
            lr => lr,
            batch_size => batch_size,
            unk_threshold => unk_threshold,
            record_time => record_time,
            submod_t => submod.t,
            submod_eps => submod.eps,
            submod_base => submod.base,
            submod_kind => submod.kind,
            submod_kernel => submod.kernel,
            submod_weighted => submod.weighted,
        );
        if let Some(g) = &self.exclude_genre {
            c.exclude_genre = Some(g.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

impl DataArgs {
    fn load(&self, path: &Path) -> Result<Corpus> {
        let corpus = parse_conll(&read(path)?, self.scheme)?;
        match corpus.scheme {
            TagScheme::Bioes => Ok(corpus),
            TagScheme::Bio => convert_scheme(&corpus, TagScheme::Bioes),
        }
    }

    fn corpora(&self, seed: u64) -> Result<(Corpus, Corpus)> {
        let data_seed = self.data_seed.unwrap_or(seed);
        let spec = TemplateSpec::desk();
        let train = match &self.train {
            Some(p) => self.load(p)?,
            None => synthesize_corpus(data_seed, self.train_sentences, &spec)?,
        };
        let test = match &self.test {
            Some(p) => self.load(p)?,
            None => synthesize_corpus(data_seed.wrapping_add(TEST_SEED_OFFSET), self.test_sentences, &spec)?,
        };
        Ok((train, test))
    }
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn synth_data(a: &SynthArgs) -> Result<()> {
    let spec = match a.types {
        Some(t) => TemplateSpec::with_types(t),
        None => TemplateSpec::desk(),
    };
    let mut corpus = synthesize_corpus(a.seed, a.sentences, &spec)?;
    if a.scheme != corpus.scheme {
        corpus = convert_scheme(&corpus, a.scheme)?;
    }
    create(&a.out)?.write_all(render_conll(&corpus).as_bytes())?;
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let config = a.config.resolve()?;
    let (corpus, _) = a.data.corpora(config.seed)?;
    let mut model = init_model(&config, &corpus)?;
    let all: Vec<&Sentence> = corpus.sentences.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut losses = Vec::with_capacity(a.epochs);
    for _ in 0..a.epochs {
        losses.push(train_on(&mut model, &all, 1, &config, &mut rng)?);
    }
    model.save_file(&a.model)?;
    if let Some(out) = &a.out {
        let mut w = csv::Writer::from_writer(create(out)?);
        w.write_record(["epoch", "loss"])?;
        for (i, l) in losses.iter().enumerate() {
            w.write_record([(i + 1).to_string(), format!("{l:.9}")])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let model = TaggerModel::load_file(&a.model)?;
    let (_, test) = a.data.corpora(a.seed)?;
    let report = evaluate_span_f1(&model, &test)?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record(["type", "precision", "recall", "f1", "true_pos", "predicted", "gold"])?;
    let rows = std::iter::once(("ALL".to_string(), report.counts)).chain(report.per_type.clone());
    for (ty, c) in rows {
        w.write_record([
            ty,
            format!("{:.6}", c.precision()),
            format!("{:.6}", c.recall()),
            format!("{:.6}", c.f1()),
            c.true_pos.to_string(),
            c.predicted.to_string(),
            c.gold.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn active_run(a: &ActiveArgs) -> Result<()> {
    let config = a.config.resolve()?;
    let (corpus, test) = a.data.corpora(config.seed)?;
    let curve = run_active_learning(&config, &corpus, &test)?;
    curve.write_csv(create(&a.out)?)?;
    if let Some(path) = &a.genres_out {
        let all = SelectionResult {
            chosen: curve.selections.iter().flat_map(|s| s.chosen.iter().copied()).collect(),
            words_used: curve.selections.iter().map(|s| s.words_used).sum(),
            budget: curve.selections.iter().map(|s| s.budget).sum(),
        };
        write_histogram_csv(&genre_histogram(&all, &corpus), create(path)?)?;
    }
    if let Some(path) = &a.scores_out {
        let strategy = config.strategy.uncertainty().unwrap_or(config.submod.base);
        let (model, labeled) = final_model(&config, &corpus, &curve.selections)?;
        let pool: Vec<&Sentence> = corpus.sentences.iter().filter(|s| !labeled.contains(&s.id)).collect();
        let scores = rank(score_pool(&model, &pool, strategy, config.bald_m, config.seed)?);
        write_scores_csv(&scores, create(path)?)?;
    }
    Ok(())
}

/// Replays a run's recorded selections to recover its final model and labeled set.
fn final_model(
    config: &ExperimentConfig,
    corpus: &Corpus,
    selections: &[SelectionResult],
) -> Result<(TaggerModel, BTreeSet<usize>)> {
    let mut sim = Simulation::start(config, corpus)?;
    for sel in selections {
        sim.annotate_and_train(sel)?;
    }
    Ok((sim.model, sim.labeled))
}

fn replicate_cmd(a: &ReplicateArgs) -> Result<()> {
    let config = a.config.resolve()?;
    let (corpus, test) = a.data.corpora(config.seed)?;
    let rep = replicate(&config, &corpus, &test, a.n_seeds)?;
    rep.write_csv(create(&a.out)?)?;
    if let Some(dir) = &a.curves_dir {
        for c in &rep.curves {
            c.write_csv(create(&dir.join(format!("curve_{}_seed{}.csv", c.strategy, c.seed)))?)?;
        }
    }
    Ok(())
}

fn submod_check(a: &SubmodArgs) -> Result<usize> {
    let instances: Vec<DenseInstance> = match &a.instance {
        Some(p) => vec![DenseInstance::read_csv(BufReader::new(File::open(p)?))?],
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            (0..a.instances)
                .map(|_| random_instance(&mut rng, a.max_pool).prepare())
                .collect::<Result<_>>()?
        }
    };
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record(["instance", "value", "opt", "delta", "bound", "cost", "budget", "holds"])?;
    let mut violations = 0;
    for (i, inst) in instances.iter().enumerate() {
        let check = inst.check_guarantee(a.eps)?;
        if !check.holds() {
            violations += 1;
            if let Some(dir) = &a.dump_dir {
                inst.write_csv(create(&dir.join(format!("instance_{i}.csv")))?)?;
            }
        }
        w.write_record([
            i.to_string(),
            format!("{:.9}", check.value),
            format!("{:.9}", check.opt),
            format!("{:.9}", check.delta),
            format!("{:.9}", check.bound),
            check.cost.to_string(),
            check.budget.to_string(),
            check.holds().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(violations)
}

fn grad_check(a: &GradArgs) -> Result<f64> {
    let mut tagger = TaggerConfig::preset(&a.tagger)?;
    if a.crf {
        tagger = tagger.with_decoder(Decoder::Crf);
    }
    let corpus = synthesize_corpus(a.seed, a.sentences, &TemplateSpec::desk())?;
    let vocab = altag::corpus::build_vocabulary(&corpus, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut model = TaggerModel::new(tagger, vocab, None, &mut rng)?;
    let sents: Vec<&Sentence> = corpus.sentences.iter().collect();
    let batch = altag::corpus::format_batch(&sents, &model.vocab)?;
    let report = gradient_check(&mut model, &batch, Mode::Train, a.seed, a.eps, Some(a.limit))?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record(["checked", "max_rel_err", "worst_param", "worst_index"])?;
    let (name, idx) = report.worst.clone().unwrap_or_default();
    w.write_record([
        report.checked.to_string(),
        format!("{:.3e}", report.max_rel_err),
        name,
        idx.to_string(),
    ])?;
    w.flush()?;
    Ok(report.max_rel_err)
}

fn bench(a: &BenchArgs) -> Result<()> {
    let tagger = TaggerConfig::preset(&a.tagger)?;
    let settings = BenchSettings {
        n_sentences: a.sentences,
        repeats: a.repeats,
        seed: a.seed,
        ..BenchSettings::default()
    };
    let rows = bench_decoder(&a.types, &tagger, &settings)?;
    write_bench_csv(&rows, create(&a.out)?)
}

fn genre_cmd(a: &GenreArgs) -> Result<()> {
    let config = a.config.resolve()?;
    let (corpus, _) = a.data.corpora(config.seed)?;
    let shift = genre_shift(&config, &corpus, &a.excluded, a.top_budget)?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record(["warm_start", "genre", "count"])?;
    for (label, hist) in [("biased", &shift.biased), ("unbiased", &shift.unbiased)] {
        for (g, c) in hist {
            w.write_record([label, g.as_str(), &c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthData(a) => synth_data(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::ActiveRun(a) => active_run(&a),
        Command::Replicate(a) => replicate_cmd(&a),
        Command::SubmodCheck(a) => match submod_check(&a)? {
            0 => Ok(()),
            n => Err(Error::Contract(format!("{n} instances violate the approximation bound"))),
        },
        Command::GradCheck(a) => {
            let worst = grad_check(&a)?;
            println!("max relative error {worst:.3e}");
            Ok(())
        }
        Command::BenchDecoder(a) => bench(&a),
        Command::GenreShift(a) => genre_cmd(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("altag: {e}");
            ExitCode::FAILURE
        }
    }
}

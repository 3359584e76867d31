//! Finite-difference checks shared by the gradient tests and the acceptance run.

use altag::corpus::{build_vocabulary, format_batch, synthesize_corpus, FormattedBatch, Sentence, TemplateSpec};
use altag::nnkernel::gradcheck::{check_gradients, GradCheckReport};
use altag::nnkernel::{Gradients, Mode, NodeId, ParamSet, Tape, Tensor};
use altag::tagger::{gradient_check, CharEncoder, Decoder, TaggerConfig, TaggerModel, WordEncoder};
use altag::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-4;
pub const EPS: f64 = 1e-5;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Fixed pseudo-random projection turning any output into a scalar.
fn project(tape: &mut Tape<'_>, out: NodeId) -> Result<NodeId> {
    let n = tape.value(out).numel();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let w = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    tape.weighted_sum(out, w)
}

/// Builds a graph over the leaves (one parameter each, in order) and checks
/// every leaf gradient.
pub fn check<F>(leaves: Vec<Tensor>, build: F) -> GradCheckReport
where
    F: Fn(&mut Tape<'_>, &[NodeId]) -> Result<NodeId>,
{
    let mut params = ParamSet::new();
    let ids: Vec<_> = leaves
        .into_iter()
        .enumerate()
        .map(|(i, t)| params.add(&format!("p{i}"), t, true).unwrap())
        .collect();
    let run = |p: &ParamSet| -> Result<(f64, Gradients)> {
        let mut tape = Tape::new(p);
        let nodes: Vec<NodeId> = ids.iter().map(|&id| tape.param(id)).collect();
        let out = build(&mut tape, &nodes)?;
        let scalar = if tape.value(out).numel() == 1 { out } else { project(&mut tape, out)? };
        Ok((tape.value(scalar).item()?, tape.backward(scalar)?))
    };
    let (_, grads) = run(&params).unwrap();
    check_gradients(&mut params, &grads, |p| Ok(run(p)?.0), EPS, None).unwrap()
}

pub type Reports = Vec<(String, GradCheckReport)>;

/// Every primitive on `trials` random shape draws.
pub fn primitive_reports(seed: u64, trials: usize) -> Reports {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for trial in 0..trials {
        let t = rng.gen_range(1..5);
        let d = rng.gen_range(1..4);
        let o = rng.gen_range(1..4);
        let w = [1, 3, 5][rng.gen_range(0..3)];
        let mut push = |op: &str, r: GradCheckReport| out.push((format!("trial {trial} {op}"), r));

        let x = rand_tensor(&mut rng, &[t, d]);
        let leaves = vec![x.clone(), rand_tensor(&mut rng, &[w, d, o]), rand_tensor(&mut rng, &[o])];
        push("conv1d", check(leaves, |tp, n| tp.conv1d(n[0], n[1], n[2])));

        let leaves = vec![x.clone(), rand_tensor(&mut rng, &[d, o]), rand_tensor(&mut rng, &[o])];
        push("linear matrix", check(leaves, |tp, n| tp.linear(n[0], n[1], n[2])));
        let leaves = vec![rand_tensor(&mut rng, &[d]), rand_tensor(&mut rng, &[d, o]), rand_tensor(&mut rng, &[o])];
        push("linear vector", check(leaves, |tp, n| tp.linear(n[0], n[1], n[2])));

        let u = o;
        let leaves = vec![
            rand_tensor(&mut rng, &[d]),
            rand_tensor(&mut rng, &[u]),
            rand_tensor(&mut rng, &[u]),
            rand_tensor(&mut rng, &[d, 4 * u]),
            rand_tensor(&mut rng, &[u, 4 * u]),
            rand_tensor(&mut rng, &[4 * u]),
        ];
        push(
            "lstm",
            check(leaves, |tp, n| {
                let (h, c) = tp.lstm(n[0], n[1], n[2], n[3], n[4], n[5])?;
                tp.concat(vec![h, c])
            }),
        );

        push("relu", check(vec![x.clone()], |tp, n| tp.relu(n[0])));
        let seed = rng.gen::<u64>();
        push(
            "dropout",
            check(vec![x.clone()], move |tp, n| {
                tp.dropout(n[0], 0.4, Mode::Train, &mut ChaCha8Rng::seed_from_u64(seed))
            }),
        );
        push("max_pool", check(vec![x.clone()], |tp, n| tp.max_pool(n[0])));

        let y = rand_tensor(&mut rng, &[t, d]);
        push("add", check(vec![x.clone(), y.clone()], |tp, n| tp.add(n[0], n[1])));
        push("mul", check(vec![x.clone(), y.clone()], |tp, n| tp.mul(n[0], n[1])));
        push("scale", check(vec![x.clone()], |tp, n| tp.scale(n[0], -2.5)));
        push("sum", check(vec![x.clone(), y], |tp, n| tp.sum(vec![n[0], n[1]])));
        let leaves = vec![x.clone(), rand_tensor(&mut rng, &[t, o])];
        push("concat", check(leaves, |tp, n| tp.concat(vec![n[0], n[1]])));
        let leaves = vec![rand_tensor(&mut rng, &[d]), rand_tensor(&mut rng, &[d])];
        push("stack", check(leaves, |tp, n| tp.stack(vec![n[0], n[1], n[0]])));

        let r = rng.gen_range(0..t);
        push("row", check(vec![x.clone()], move |tp, n| tp.row(n[0], r)));
        let start = rng.gen_range(0..d);
        let len = rng.gen_range(1..=d - start);
        let v = rand_tensor(&mut rng, &[d]);
        push("slice", check(vec![v], move |tp, n| tp.slice(n[0], start, len)));
        let rows: Vec<usize> = (0..t + 1).map(|_| rng.gen_range(0..t)).collect();
        push("gather", check(vec![x.clone()], move |tp, n| tp.gather(n[0], rows.clone())));

        let target = rng.gen_range(0..o);
        let logits = rand_tensor(&mut rng, &[o]);
        push("nll", check(vec![logits], move |tp, n| tp.nll(n[0], target)));

        let tags = rng.gen_range(1..5);
        let gold: Vec<usize> = (0..t).map(|_| rng.gen_range(0..tags)).collect();
        let leaves = vec![rand_tensor(&mut rng, &[t, tags]), rand_tensor(&mut rng, &[tags, tags])];
        push("crf_nll", check(leaves, move |tp, n| tp.crf_nll(n[0], n[1], gold.clone())));
    }
    out
}

/// Two-layer char and word CNNs so the residual path is exercised.
fn small_config(decoder: Decoder) -> TaggerConfig {
    TaggerConfig {
        char_emb_dim: 4,
        char_encoder: CharEncoder::Cnn { layers: 2, filters: 5, width: 3 },
        word_encoder: WordEncoder::Cnn { layers: 2, filters: 6, width: 3 },
        decoder,
        emb_dim: 5,
        dropout_p: 0.3,
        word_drop_p: 0.3,
        ..TaggerConfig::tiny()
    }
}

fn small_model(decoder: Decoder, seed: u64) -> (TaggerModel, FormattedBatch) {
    let corpus = synthesize_corpus(seed, 2, &TemplateSpec::desk()).unwrap();
    let vocab = build_vocabulary(&corpus, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = TaggerModel::new(small_config(decoder), vocab, None, &mut rng).unwrap();
    // Zero-initialised biases put pre-activations exactly on ReLU kinks;
    // move every parameter to a generic point.
    let ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();
    for id in ids {
        for v in model.params.get_mut(id).tensor.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    let sents: Vec<&Sentence> = corpus.sentences.iter().collect();
    let batch = format_batch(&sents, &model.vocab).unwrap();
    (model, batch)
}

/// Whole-model loss checks in train and eval mode for each seed.
pub fn full_loss_reports(decoder: Decoder, seeds: std::ops::Range<u64>) -> Reports {
    let mut out = Vec::new();
    for seed in seeds {
        let (mut model, batch) = small_model(decoder, seed);
        for mode in [Mode::Train, Mode::Eval] {
            let r = gradient_check(&mut model, &batch, mode, seed, EPS, Some(16)).unwrap();
            out.push((format!("{decoder:?} seed {seed} {mode:?}"), r));
        }
    }
    out
}

/// Name and report of the first failing check, if any.
pub fn first_failure(reports: &Reports) -> Option<&(String, GradCheckReport)> {
    reports.iter().find(|(_, r)| r.checked == 0 || !r.passes(TOL))
}

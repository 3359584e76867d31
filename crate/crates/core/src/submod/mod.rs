//! Representativeness-based selection: sentence embeddings, similarity
//! kernels, a coverage-style utility and a two-pass streaming maximizer under
//! a knapsack (word budget) constraint, with an exhaustive oracle for small
//! instances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::active::{fill_budget, mnlp_value, rank, score_pool, SelectionResult, Strategy};
use crate::corpus::Sentence;
use crate::nnkernel::Mode;
use crate::tagger::{encode_sentence, predict, TaggerModel};
use crate::{Error, Result};

/// Largest candidate set accepted by [`brute_force_opt`].
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kernel {
    L1,
    L2,
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EmbeddingKind {
    AvgWordEmb,
    AvgEncoder,
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(Kernel::L1),
            "L2" => Ok(Kernel::L2),
            "COSINE" => Ok(Kernel::Cosine),
            _ => Err(Error::Param(format!("unknown kernel {s:?}"))),
        }
    }
}

impl FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AVG_WORD_EMB" => Ok(EmbeddingKind::AvgWordEmb),
            "AVG_ENCODER" => Ok(EmbeddingKind::AvgEncoder),
            _ => Err(Error::Param(format!("unknown embedding kind {s:?}"))),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::L1 => "L1",
            Kernel::L2 => "L2",
            Kernel::Cosine => "COSINE",
        })
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingKind::AvgWordEmb => "AVG_WORD_EMB",
            EmbeddingKind::AvgEncoder => "AVG_ENCODER",
        })
    }
}

/// Mean word embedding, or mean encoder output, over the real positions.
pub fn embed_sentence(sentence: &Sentence, model: &TaggerModel, kind: EmbeddingKind) -> Result<Vec<f64>> {
    let n = sentence.len() as f64;
    match kind {
        EmbeddingKind::AvgWordEmb => {
            let table = &model.params.get(model.params.id("word.emb").expect("model has word.emb")).tensor;
            let mut out = vec![0.0; table.cols()];
            for w in &sentence.tokens {
                for (o, v) in out.iter_mut().zip(table.row(model.vocab.word_id(w))) {
                    *o += v;
                }
            }
            Ok(out.into_iter().map(|v| v / n).collect())
        }
        EmbeddingKind::AvgEncoder => {
            let mut rng = rand::rngs::mock::StepRng::new(0, 0);
            let enc = encode_sentence(model, sentence, Mode::Eval, &mut rng)?;
            let mut out = vec![0.0; enc.enc.cols()];
            for i in 1..=sentence.len() {
                for (o, v) in out.iter_mut().zip(enc.enc.row(i)) {
                    *o += v;
                }
            }
            Ok(out.into_iter().map(|v| v / n).collect())
        }
    }
}

/// A selection problem over embedded sentences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmodInstance {
    /// Elements that may be selected, streamed in ascending id order.
    pub candidate_ids: BTreeSet<usize>,
    pub labeled_ids: BTreeSet<usize>,
    /// Domain of the utility's outer sum; contains every candidate.
    pub unlabeled_ids: BTreeSet<usize>,
    pub embeddings: BTreeMap<usize, Vec<f64>>,
    pub kernel: Kernel,
    /// Per-element weights of the outer sum; `None` means all ones.
    pub weights: Option<BTreeMap<usize, f64>>,
    pub costs: BTreeMap<usize, usize>,
    pub budget: usize,
}

fn distance(kernel: Kernel, a: &[f64], b: &[f64]) -> f64 {
    match kernel {
        Kernel::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        _ => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl SubmodInstance {
    pub fn validate(&self) -> Result<()> {
        if !self.candidate_ids.is_subset(&self.unlabeled_ids) {
            return Err(Error::Contract("candidates must be unlabeled".into()));
        }
        if !self.labeled_ids.is_disjoint(&self.unlabeled_ids) {
            return Err(Error::Contract("labeled and unlabeled ids overlap".into()));
        }
        for id in self.unlabeled_ids.iter().chain(&self.labeled_ids) {
            if !self.embeddings.contains_key(id) {
                return Err(Error::Contract(format!("no embedding for id {id}")));
            }
        }
        for id in &self.candidate_ids {
            match self.costs.get(id) {
                Some(&c) if c >= 1 => {}
                _ => return Err(Error::Contract(format!("candidate {id} needs a cost of at least 1"))),
            }
        }
        if let Some(w) = &self.weights {
            if self.unlabeled_ids.iter().any(|i| !(w.get(i).copied().unwrap_or(-1.0) >= 0.0)) {
                return Err(Error::Contract("weights must be present and non-negative".into()));
            }
        }
        Ok(())
    }

    fn scope(&self) -> Vec<usize> {
        let all: BTreeSet<usize> = self.unlabeled_ids.union(&self.labeled_ids).copied().collect();
        all.into_iter().collect()
    }

    /// Distance cap `d`: the largest pairwise distance over unlabeled ∪ labeled.
    pub fn distance_cap(&self) -> f64 {
        let ids = self.scope();
        let mut d: f64 = 0.0;
        for (a, i) in ids.iter().enumerate() {
            for j in &ids[a + 1..] {
                d = d.max(distance(self.kernel, &self.embeddings[i], &self.embeddings[j]));
            }
        }
        d
    }

    /// Similarity accessor `w(i, j)`.
    pub fn similarity(&self) -> Result<Similarity<'_>> {
        if self.kernel == Kernel::Cosine {
            for id in self.scope() {
                if norm(&self.embeddings[&id]) == 0.0 {
                    return Err(Error::DegenerateVector(id));
                }
            }
        }
        let cap = if self.kernel == Kernel::Cosine { 0.0 } else { self.distance_cap() };
        Ok(Similarity { inst: self, cap })
    }

    /// Dense form used by the utility and the maximizers.
    pub fn prepare(&self) -> Result<DenseInstance> {
        self.validate()?;
        let sim = self.similarity()?;
        let sum_ids: Vec<usize> = self.unlabeled_ids.iter().copied().collect();
        let cand_ids: Vec<usize> = self.candidate_ids.iter().copied().collect();
        let mut w = Vec::with_capacity(sum_ids.len() * cand_ids.len());
        let mut base = Vec::with_capacity(sum_ids.len());
        let mut us = Vec::with_capacity(sum_ids.len());
        for &i in &sum_ids {
            for &c in &cand_ids {
                w.push(sim.get(i, c));
            }
            base.push(self.labeled_ids.iter().map(|&l| sim.get(i, l)).fold(0.0, f64::max));
            us.push(self.weights.as_ref().map_or(1.0, |m| m[&i]));
        }
        Ok(DenseInstance {
            sum_ids,
            costs: cand_ids.iter().map(|c| self.costs[c]).collect(),
            cand_ids,
            us,
            base,
            w,
            budget: self.budget,
        })
    }
}

pub struct Similarity<'a> {
    inst: &'a SubmodInstance,
    cap: f64,
}

impl Similarity<'_> {
    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.inst.embeddings[&i], &self.inst.embeddings[&j]);
        match self.inst.kernel {
            Kernel::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                (1.0 + dot / (norm(a) * norm(b))).max(0.0)
            }
            k => self.cap - distance(k, a, b),
        }
    }
}

/// Precomputed similarities between the sum domain and the candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseInstance {
    pub sum_ids: Vec<usize>,
    pub cand_ids: Vec<usize>,
    pub us: Vec<f64>,
    /// `max_{j ∈ labeled} w(i, j)` per sum element (0 with no labeled set).
    pub base: Vec<f64>,
    /// Row-major `[sum × cand]`.
    pub w: Vec<f64>,
    pub costs: Vec<usize>,
    pub budget: usize,
}

impl DenseInstance {
    fn w(&self, i: usize, c: usize) -> f64 {
        self.w[i * self.cand_ids.len() + c]
    }

    fn index_of(&self, id: usize) -> Result<usize> {
        self.cand_ids
            .binary_search(&id)
            .map_err(|_| Error::Contract(format!("{id} is not a candidate")))
    }

    /// Coverage `max(base, max_{s∈S} w)` per sum element for candidate indices `set`.
    fn cover(&self, set: &[usize]) -> Vec<f64> {
        (0..self.sum_ids.len())
            .map(|i| set.iter().map(|&c| self.w(i, c)).fold(self.base[i], f64::max))
            .collect()
    }

    fn value_of_cover(&self, cover: &[f64]) -> f64 {
        cover
            .iter()
            .zip(&self.base)
            .zip(&self.us)
            .map(|((c, b), u)| u * (c - b))
            .sum()
    }

    fn gain(&self, cover: &[f64], c: usize) -> f64 {
        (0..self.sum_ids.len())
            .map(|i| self.us[i] * (self.w(i, c) - cover[i]).max(0.0))
            .sum()
    }

    /// Utility of a set of candidate ids.
    pub fn utility(&self, set: &BTreeSet<usize>) -> Result<f64> {
        let idx = set.iter().map(|&id| self.index_of(id)).collect::<Result<Vec<_>>>()?;
        Ok(self.value_of_cover(&self.cover(&idx)))
    }

    /// Marginal gain of adding `e` to `set`.
    pub fn marginal_gain(&self, e: usize, set: &BTreeSet<usize>) -> Result<f64> {
        let idx = set.iter().map(|&id| self.index_of(id)).collect::<Result<Vec<_>>>()?;
        Ok(self.gain(&self.cover(&idx), self.index_of(e)?))
    }

    pub fn cost(&self, set: &BTreeSet<usize>) -> Result<usize> {
        set.iter().map(|&id| Ok(self.costs[self.index_of(id)?])).sum()
    }

    /// `δ = max cost / K` over the candidates.
    pub fn delta(&self) -> f64 {
        if self.budget == 0 {
            return f64::INFINITY;
        }
        self.costs.iter().copied().max().unwrap_or(0) as f64 / self.budget as f64
    }

    /// Threshold grid `{(1+ε)^i} ∩ [m, K·m]` together with `m`.
    pub fn thresholds(&self, eps: f64) -> Result<(f64, Vec<f64>)> {
        if !(eps > 0.0) {
            return Err(Error::Param(format!("epsilon must be positive, got {eps}")));
        }
        let cover = self.cover(&[]);
        let m = (0..self.cand_ids.len())
            .filter(|&c| self.costs[c] <= self.budget)
            .map(|c| self.gain(&cover, c) / self.costs[c] as f64)
            .fold(0.0, f64::max);
        Ok((m, threshold_grid(m, self.budget, eps)))
    }

    /// Two-pass streaming maximization over candidates in ascending id order.
    pub fn stream_max(&self, eps: f64) -> Result<StreamResult> {
        let (m, grid) = self.thresholds(eps)?;
        let k = self.budget as f64;
        let mut best: Option<(f64, Vec<usize>, usize)> = None;
        for &v in &grid {
            let mut cover = self.base.clone();
            let mut set = Vec::new();
            let mut cost = 0usize;
            let mut value = 0.0;
            for c in 0..self.cand_ids.len() {
                let kc = self.costs[c];
                if cost + kc > self.budget {
                    continue;
                }
                let g = self.gain(&cover, c);
                let need = kc as f64 * (v / 2.0 - value) / (k - cost as f64);
                if g >= need {
                    for (i, cv) in cover.iter_mut().enumerate() {
                        *cv = cv.max(self.w(i, c));
                    }
                    value = self.value_of_cover(&cover);
                    set.push(c);
                    cost += kc;
                }
            }
            if best.as_ref().is_none_or(|b| value > b.0) {
                best = Some((value, set, cost));
            }
        }
        let (value, set, cost) = best.unwrap_or((0.0, Vec::new(), 0));
        Ok(StreamResult {
            selected: set.into_iter().map(|c| self.cand_ids[c]).collect(),
            value,
            cost,
            m,
            thresholds: grid.len(),
        })
    }

    /// Exhaustive optimum over feasible subsets; first optimum in mask order.
    pub fn brute_force(&self) -> Result<(BTreeSet<usize>, f64)> {
        let n = self.cand_ids.len();
        if n > BRUTE_FORCE_LIMIT {
            return Err(Error::Size(format!("{n} candidates exceed the exhaustive limit of {BRUTE_FORCE_LIMIT}")));
        }
        let mut best = (0usize, 0.0);
        let mut set = Vec::with_capacity(n);
        for mask in 1usize..(1 << n) {
            set.clear();
            set.extend((0..n).filter(|b| mask >> b & 1 == 1));
            if set.iter().map(|&c| self.costs[c]).sum::<usize>() > self.budget {
                continue;
            }
            let v = self.value_of_cover(&self.cover(&set));
            if v > best.1 {
                best = (mask, v);
            }
        }
        let chosen = (0..n).filter(|b| best.0 >> b & 1 == 1).map(|c| self.cand_ids[c]).collect();
        Ok((chosen, best.1))
    }

    /// `i,j,w` triples for every (sum element, candidate) pair, after a
    /// header of `#`-prefixed budget, cost, weight and base lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#budget={}", self.budget)?;
        for (id, c) in self.cand_ids.iter().zip(&self.costs) {
            writeln!(w, "#cost={id}:{c}")?;
        }
        for ((id, u), b) in self.sum_ids.iter().zip(&self.us).zip(&self.base) {
            writeln!(w, "#sum={id}:{u:?}:{b:?}")?;
        }
        writeln!(w, "i,j,w")?;
        for (a, i) in self.sum_ids.iter().enumerate() {
            for (c, j) in self.cand_ids.iter().enumerate() {
                writeln!(w, "{i},{j},{:?}", self.w(a, c))?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Format { line, msg: msg.to_string() };
        let mut budget = None;
        let mut costs = BTreeMap::new();
        let mut sums = BTreeMap::new();
        let mut triples = BTreeMap::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let ln = n + 1;
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest.split_once('=').ok_or_else(|| bad(ln, "header without '='"))?;
                let parts: Vec<&str> = v.split(':').collect();
                match (k, parts.as_slice()) {
                    ("budget", [b]) => budget = Some(b.parse().map_err(|_| bad(ln, "bad budget"))?),
                    ("cost", [id, c]) => {
                        let id: usize = id.parse().map_err(|_| bad(ln, "bad id"))?;
                        costs.insert(id, c.parse::<usize>().map_err(|_| bad(ln, "bad cost"))?);
                    }
                    ("sum", [id, u, b]) => {
                        let id: usize = id.parse().map_err(|_| bad(ln, "bad id"))?;
                        let u: f64 = u.parse().map_err(|_| bad(ln, "bad weight"))?;
                        let b: f64 = b.parse().map_err(|_| bad(ln, "bad base"))?;
                        sums.insert(id, (u, b));
                    }
                    _ => return Err(bad(ln, "unknown header")),
                }
            } else if line != "i,j,w" && !line.is_empty() {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 3 {
                    return Err(bad(ln, "expected i,j,w"));
                }
                let i: usize = f[0].parse().map_err(|_| bad(ln, "bad i"))?;
                let j: usize = f[1].parse().map_err(|_| bad(ln, "bad j"))?;
                let w: f64 = f[2].parse().map_err(|_| bad(ln, "bad w"))?;
                triples.insert((i, j), w);
            }
        }
        let budget = budget.ok_or_else(|| bad(0, "missing budget"))?;
        let cand_ids: Vec<usize> = costs.keys().copied().collect();
        let sum_ids: Vec<usize> = sums.keys().copied().collect();
        let mut w = Vec::with_capacity(sum_ids.len() * cand_ids.len());
        for i in &sum_ids {
            for j in &cand_ids {
                w.push(*triples.get(&(*i, *j)).ok_or_else(|| bad(0, &format!("missing w({i},{j})")))?);
            }
        }
        Ok(DenseInstance {
            us: sums.values().map(|v| v.0).collect(),
            base: sums.values().map(|v| v.1).collect(),
            costs: costs.into_values().collect(),
            sum_ids,
            cand_ids,
            w,
            budget,
        })
    }
}

/// `{(1+ε)^i : m/(1+ε) < (1+ε)^i ≤ K·m}`, empty when `m ≤ 0`.
///
/// The lower end is opened by one step below `m` so that the grid is never
/// empty (e.g. `K = 1`) and always holds a power within a factor `1+ε` below
/// the optimum, which lies in `[m, K·m]`.
pub fn threshold_grid(m: f64, budget: usize, eps: f64) -> Vec<f64> {
    if !(m > 0.0) || budget == 0 {
        return Vec::new();
    }
    let base = 1.0 + eps;
    let lo = m / base;
    let hi = budget as f64 * m;
    // small slack so exact powers at the ends are not lost to rounding
    let tol = 1e-12;
    let mut i = (lo.ln() / base.ln() - tol).floor() as i64;
    let mut out = Vec::new();
    loop {
        let v = base.powi(i as i32);
        if v > hi * (1.0 + tol) {
            break;
        }
        if v > lo * (1.0 + tol) {
            out.push(v);
        }
        i += 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamResult {
    /// Selected ids in stream order.
    pub selected: Vec<usize>,
    pub value: f64,
    pub cost: usize,
    pub m: f64,
    pub thresholds: usize,
}

pub fn utility(instance: &SubmodInstance, set: &BTreeSet<usize>) -> Result<f64> {
    instance.prepare()?.utility(set)
}

pub fn stream_submod_max(instance: &SubmodInstance, eps: f64) -> Result<StreamResult> {
    instance.prepare()?.stream_max(eps)
}

pub fn brute_force_opt(instance: &SubmodInstance) -> Result<(BTreeSet<usize>, f64)> {
    if instance.candidate_ids.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::Size(format!(
            "{} candidates exceed the exhaustive limit of {BRUTE_FORCE_LIMIT}",
            instance.candidate_ids.len()
        )));
    }
    instance.prepare()?.brute_force()
}

/// Outcome of comparing the streaming result with the exhaustive optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeCheck {
    pub value: f64,
    pub opt: f64,
    pub delta: f64,
    /// `(1−ε)(1−δ)/2 · OPT`.
    pub bound: f64,
    pub cost: usize,
    pub budget: usize,
}

impl GuaranteeCheck {
    pub fn holds(&self) -> bool {
        self.value >= self.bound - 1e-9 * self.opt.abs().max(1.0) && self.cost <= self.budget
    }
}

/// Runs the streaming maximizer and the exhaustive oracle on one instance.
pub fn check_guarantee(instance: &SubmodInstance, eps: f64) -> Result<GuaranteeCheck> {
    instance.prepare()?.check_guarantee(eps)
}

impl DenseInstance {
    /// Runs the streaming maximizer and the exhaustive oracle.
    pub fn check_guarantee(&self, eps: f64) -> Result<GuaranteeCheck> {
        let res = self.stream_max(eps)?;
        let (_, opt) = self.brute_force()?;
        let delta = self.delta();
        Ok(GuaranteeCheck {
            value: res.value,
            opt,
            delta,
            bound: (1.0 - eps) * (1.0 - delta).max(0.0) / 2.0 * opt,
            cost: res.cost,
            budget: self.budget,
        })
    }
}

/// A random instance with `1..=max_pool` candidates, a few extra unlabeled
/// and labeled points, a random kernel, costs in `1..=5` and an optional
/// weighting. Coordinates are drawn from `[-1, 1]` (never all zero).
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, max_pool: usize) -> SubmodInstance {
    let n_cand = rng.gen_range(1..=max_pool.max(1));
    let n_extra = rng.gen_range(0..=2);
    let n_lab = rng.gen_range(0..=3);
    let dim = rng.gen_range(1..=4);
    let kernel = [Kernel::L1, Kernel::L2, Kernel::Cosine][rng.gen_range(0..3)];
    let mut embeddings = BTreeMap::new();
    for id in 0..n_cand + n_extra + n_lab {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        embeddings.insert(id, v);
    }
    let candidate_ids: BTreeSet<usize> = (0..n_cand).collect();
    let unlabeled_ids: BTreeSet<usize> = (0..n_cand + n_extra).collect();
    let labeled_ids: BTreeSet<usize> = (n_cand + n_extra..n_cand + n_extra + n_lab).collect();
    let costs: BTreeMap<usize, usize> = candidate_ids.iter().map(|&i| (i, rng.gen_range(1..=5))).collect();
    let total: usize = costs.values().sum();
    let budget = rng.gen_range(1..=total.max(1));
    let weights = rng
        .gen_bool(0.5)
        .then(|| unlabeled_ids.iter().map(|&i| (i, rng.gen_range(0.0..1.0))).collect());
    SubmodInstance {
        candidate_ids,
        labeled_ids,
        unlabeled_ids,
        embeddings,
        kernel,
        weights,
        costs,
        budget,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmodParams {
    /// Candidate budget multiplier.
    pub t: usize,
    pub eps: f64,
    pub base: Strategy,
    pub kind: EmbeddingKind,
    pub kernel: Kernel,
    pub weighted: bool,
}

impl Default for SubmodParams {
    fn default() -> Self {
        SubmodParams {
            t: 4,
            eps: 0.1,
            base: Strategy::Mnlp,
            kind: EmbeddingKind::AvgWordEmb,
            kernel: Kernel::Cosine,
            weighted: true,
        }
    }
}

/// Ranks the pool by the base strategy, keeps the top sentences within
/// `t·K` words, and picks a representative subset within `K` words.
/// The utility sums over that restricted candidate set.
pub fn submod_select<R: Rng + ?Sized>(
    model: &TaggerModel,
    pool: &[&Sentence],
    labeled: &[&Sentence],
    budget: usize,
    params: &SubmodParams,
    bald_m: usize,
    rng: &mut R,
) -> Result<SelectionResult> {
    if params.t < 1 {
        return Err(Error::Param("submod multiplier t must be at least 1".into()));
    }
    let labeled_ids: BTreeSet<usize> = labeled.iter().map(|s| s.id).collect();
    let mut pool: Vec<&Sentence> = pool.iter().copied().filter(|s| !labeled_ids.contains(&s.id)).collect();
    pool.sort_by_key(|s| s.id);
    pool.dedup_by_key(|s| s.id);
    let top = if params.base == Strategy::Rand {
        pool.shuffle(rng);
        fill_budget(pool.iter().map(|s| (s.id, s.len())), params.t * budget)
    } else {
        let seed = rng.gen::<u64>();
        let scores = rank(score_pool(model, &pool, params.base, bald_m, seed)?);
        fill_budget(scores.iter().map(|s| (s.sentence_id, s.length)), params.t * budget)
    };
    let by_id: BTreeMap<usize, &Sentence> = pool.iter().map(|s| (s.id, *s)).collect();
    let cands: Vec<&Sentence> = top.chosen.iter().map(|id| by_id[id]).collect();

    let mut embeddings = BTreeMap::new();
    for s in cands.iter().chain(labeled) {
        embeddings.insert(s.id, embed_sentence(s, model, params.kind)?);
    }
    let weights = if params.weighted {
        let mut w = BTreeMap::new();
        for s in &cands {
            w.insert(s.id, 1.0 - mnlp_value(&predict(model, s)?).exp());
        }
        Some(w)
    } else {
        None
    };
    let candidate_ids: BTreeSet<usize> = cands.iter().map(|s| s.id).collect();
    let inst = SubmodInstance {
        unlabeled_ids: candidate_ids.clone(),
        candidate_ids,
        labeled_ids,
        embeddings,
        kernel: params.kernel,
        weights,
        costs: cands.iter().map(|s| (s.id, s.len())).collect(),
        budget,
    };
    let res = stream_submod_max(&inst, params.eps)?;
    Ok(SelectionResult {
        chosen: res.selected,
        words_used: res.cost,
        budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_instance() -> SubmodInstance {
        let ids: BTreeSet<usize> = [1, 2, 3].into();
        SubmodInstance {
            candidate_ids: ids.clone(),
            labeled_ids: BTreeSet::new(),
            unlabeled_ids: ids,
            embeddings: [(1, vec![0.0]), (2, vec![1.0]), (3, vec![3.0])].into(),
            kernel: Kernel::L1,
            weights: None,
            costs: [(1, 1), (2, 1), (3, 1)].into(),
            budget: 3,
        }
    }

    #[test]
    fn line_similarities() {
        let inst = line_instance();
        let sim = inst.similarity().unwrap();
        assert_eq!(sim.cap(), 3.0);
        assert_eq!(sim.get(1, 2), 2.0);
        assert_eq!(sim.get(1, 3), 0.0);
        assert_eq!(sim.get(2, 3), 1.0);
        assert_eq!(sim.get(2, 2), 3.0);
    }

    #[test]
    fn line_utility() {
        let inst = line_instance();
        assert_eq!(utility(&inst, &BTreeSet::new()).unwrap(), 0.0);
        assert_eq!(utility(&inst, &[1].into()).unwrap(), 5.0);
    }

    #[test]
    fn grid_definition() {
        assert_eq!(threshold_grid(1.0, 4, 1.0), [1.0, 2.0, 4.0]);
        assert!(threshold_grid(0.0, 4, 0.5).is_empty());
        // a single-point range still gets the power just below it
        assert_eq!(threshold_grid(3.0, 1, 1.0), [2.0]);
        for (m, k, eps) in [(0.37, 1, 0.1), (5.2, 3, 0.1), (1.0, 7, 0.5), (0.01, 40, 0.05)] {
            let grid = threshold_grid(m, k, eps);
            let mut x = m;
            while x <= k as f64 * m {
                assert!(grid.iter().any(|&v| v <= x * (1.0 + 1e-12) && v * (1.0 + eps) > x), "{m} {k} {eps} {x}");
                x *= 1.013;
            }
        }
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        let mut inst = line_instance();
        inst.kernel = Kernel::Cosine;
        assert!(matches!(inst.similarity(), Err(Error::DegenerateVector(1))));
    }

    #[test]
    fn csv_round_trip() {
        let d = line_instance().prepare().unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(DenseInstance::read_csv(buf.as_slice()).unwrap(), d);
    }
}

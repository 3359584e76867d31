//! Recording of primitive applications and the reverse pass.

use rand::Rng;

use super::crf;
use super::ops::{self, LstmCache, Mode};
use super::{Gradients, ParamId, ParamSet, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Param(ParamId),
    Input,
    /// Rows of a `[V × D]` table.
    Gather { table: NodeId, rows: Vec<usize> },
    Conv1d { x: NodeId, k: NodeId, b: NodeId },
    Linear { x: NodeId, w: NodeId, b: NodeId },
    /// Output is `h ‖ c`.
    Lstm { x: NodeId, h: NodeId, c: NodeId, w: NodeId, u: NodeId, b: NodeId },
    Relu(NodeId),
    Dropout { x: NodeId, mask: Vec<f64> },
    MaxPool(NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Sum of every element of every input.
    Sum(Vec<NodeId>),
    WeightedSum { x: NodeId, weights: Vec<f64> },
    /// Concatenation along the last axis.
    Concat(Vec<NodeId>),
    /// Vectors stacked into a matrix.
    Stack(Vec<NodeId>),
    Row { x: NodeId, index: usize },
    Slice { x: NodeId, start: usize, len: usize },
    /// `-log softmax(logits)[target]`.
    Nll { logits: NodeId, target: usize },
    CrfNll { emissions: NodeId, trans: NodeId, gold: Vec<usize> },
}

#[derive(Clone, Debug)]
enum Aux {
    None,
    Argmax(Vec<usize>),
    Lstm(LstmCache),
    LogProbs(Vec<f64>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    aux: Aux,
}

/// Ordered record of primitive applications. Parameter values are borrowed
/// from the [`ParamSet`], never copied.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match &self.nodes[id.0].op {
            Op::Param(p) => &self.params.get(*p).tensor,
            _ => &self.nodes[id.0].value,
        }
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let (value, aux) = self.eval(&op)?;
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(Error::Contract(format!("non-finite output from {}", op_name(&op))));
        }
        self.nodes.push(Node { op, value, aux });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: Tensor::default(),
            aux: Aux::None,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Input,
            value,
            aux: Aux::None,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn gather(&mut self, table: NodeId, rows: Vec<usize>) -> Result<NodeId> {
        self.push(Op::Gather { table, rows })
    }

    pub fn conv1d(&mut self, x: NodeId, k: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Conv1d { x, k, b })
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Linear { x, w, b })
    }

    /// One LSTM step; returns `(h, c)` nodes.
    pub fn lstm(&mut self, x: NodeId, h: NodeId, c: NodeId, w: NodeId, u: NodeId, b: NodeId) -> Result<(NodeId, NodeId)> {
        let hc = self.push(Op::Lstm { x, h, c, w, u, b })?;
        let hid = self.value(hc).numel() / 2;
        Ok((self.slice(hc, 0, hid)?, self.slice(hc, hid, hid)?))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(x))
    }

    /// Inverted dropout; returns `x` itself when inactive.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: NodeId, p: f64, mode: Mode, rng: &mut R) -> Result<NodeId> {
        ops::check_dropout_p(p)?;
        if !mode.dropout_active() || p == 0.0 {
            return Ok(x);
        }
        let mask = ops::dropout_mask(self.value(x).numel(), p, rng);
        self.push(Op::Dropout { x, mask })
    }

    pub fn max_pool(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::MaxPool(x))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> Result<NodeId> {
        self.push(Op::Scale(x, s))
    }

    pub fn sum(&mut self, xs: Vec<NodeId>) -> Result<NodeId> {
        self.push(Op::Sum(xs))
    }

    pub fn weighted_sum(&mut self, x: NodeId, weights: Vec<f64>) -> Result<NodeId> {
        self.push(Op::WeightedSum { x, weights })
    }

    pub fn concat(&mut self, parts: Vec<NodeId>) -> Result<NodeId> {
        self.push(Op::Concat(parts))
    }

    pub fn stack(&mut self, rows: Vec<NodeId>) -> Result<NodeId> {
        self.push(Op::Stack(rows))
    }

    pub fn row(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        self.push(Op::Row { x, index })
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.push(Op::Slice { x, start, len })
    }

    pub fn nll(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        self.push(Op::Nll { logits, target })
    }

    /// Log-probabilities computed by an [`Tape::nll`] node.
    pub fn log_probs(&self, nll: NodeId) -> Option<&[f64]> {
        match &self.nodes[nll.0].aux {
            Aux::LogProbs(lp) => Some(lp),
            _ => None,
        }
    }

    pub fn crf_nll(&mut self, emissions: NodeId, trans: NodeId, gold: Vec<usize>) -> Result<NodeId> {
        self.push(Op::CrfNll { emissions, trans, gold })
    }

    fn eval(&self, op: &Op) -> Result<(Tensor, Aux)> {
        let v = |id: &NodeId| self.value(*id);
        let plain = |t: Tensor| Ok((t, Aux::None));
        match op {
            Op::Param(_) | Op::Input => Err(Error::Contract("leaf nodes are not evaluated".into())),
            Op::Gather { table, rows } => {
                let t = v(table);
                let d = t.cols();
                let mut out = Vec::with_capacity(rows.len() * d);
                for &r in rows {
                    if r >= t.rows() {
                        return Err(Error::Shape(format!("gather row {r} of a {}-row table", t.rows())));
                    }
                    out.extend_from_slice(t.row(r));
                }
                plain(Tensor::from_parts(vec![rows.len(), d], out))
            }
            Op::Conv1d { x, k, b } => plain(ops::conv1d_same(v(x), v(k), v(b))?),
            Op::Linear { x, w, b } => plain(ops::linear(v(x), v(w), v(b))?),
            Op::Lstm { x, h, c, w, u, b } => {
                let (h, c, cache) = ops::lstm_step(v(x), v(h), v(c), v(w), v(u), v(b))?;
                let mut hc = h.into_data();
                hc.extend_from_slice(c.data());
                Ok((Tensor::vector(hc), Aux::Lstm(cache)))
            }
            Op::Relu(x) => {
                let x = v(x);
                plain(Tensor::from_parts(
                    x.shape().to_vec(),
                    x.data().iter().map(|&a| a.max(0.0)).collect(),
                ))
            }
            Op::Dropout { x, mask } => {
                let x = v(x);
                plain(Tensor::from_parts(
                    x.shape().to_vec(),
                    x.data().iter().zip(mask).map(|(a, m)| a * m).collect(),
                ))
            }
            Op::MaxPool(x) => {
                let (out, arg) = ops::max_pool_time(v(x))?;
                Ok((out, Aux::Argmax(arg)))
            }
            Op::Add(a, b) | Op::Mul(a, b) => {
                let (a, b) = (v(a), v(b));
                if a.shape() != b.shape() {
                    return Err(Error::Shape(format!("elementwise op on {:?} and {:?}", a.shape(), b.shape())));
                }
                let f: fn(f64, f64) -> f64 = if matches!(op, Op::Add(..)) { |x, y| x + y } else { |x, y| x * y };
                plain(Tensor::from_parts(
                    a.shape().to_vec(),
                    a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect(),
                ))
            }
            Op::Scale(x, s) => {
                let x = v(x);
                plain(Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|a| a * s).collect()))
            }
            Op::Sum(xs) => plain(Tensor::scalar(xs.iter().map(|x| v(x).data().iter().sum::<f64>()).sum())),
            Op::WeightedSum { x, weights } => {
                let x = v(x);
                if x.numel() != weights.len() {
                    return Err(Error::Shape(format!("{} weights for {} values", weights.len(), x.numel())));
                }
                plain(Tensor::scalar(x.data().iter().zip(weights).map(|(a, w)| a * w).sum()))
            }
            Op::Concat(parts) => {
                let rows = parts.first().map_or(0, |p| v(p).rows());
                if parts.iter().any(|p| v(p).rows() != rows) {
                    let shapes: Vec<_> = parts.iter().map(|p| v(p).shape().to_vec()).collect();
                    return Err(Error::Shape(format!("concat of leading axes {shapes:?}")));
                }
                let cols: usize = parts.iter().map(|p| v(p).cols()).sum();
                let mut out = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for p in parts {
                        out.extend_from_slice(v(p).row(r));
                    }
                }
                let vector = parts.iter().all(|p| v(p).shape().len() <= 1);
                let shape = if vector { vec![cols] } else { vec![rows, cols] };
                plain(Tensor::from_parts(shape, out))
            }
            Op::Stack(rows) => {
                let d = rows.first().map_or(0, |r| v(r).numel());
                if rows.iter().any(|r| v(r).numel() != d) {
                    return Err(Error::Shape("stack of vectors with different lengths".into()));
                }
                let mut out = Vec::with_capacity(rows.len() * d);
                for r in rows {
                    out.extend_from_slice(v(r).data());
                }
                plain(Tensor::from_parts(vec![rows.len(), d], out))
            }
            Op::Row { x, index } => {
                let x = v(x);
                if *index >= x.rows() {
                    return Err(Error::Shape(format!("row {index} of shape {:?}", x.shape())));
                }
                plain(Tensor::vector(x.row(*index).to_vec()))
            }
            Op::Slice { x, start, len } => {
                let x = v(x);
                if start + len > x.numel() {
                    return Err(Error::Shape(format!("slice {start}..{} of {} values", start + len, x.numel())));
                }
                plain(Tensor::vector(x.data()[*start..start + len].to_vec()))
            }
            Op::Nll { logits, target } => {
                let l = v(logits);
                if *target >= l.numel() {
                    return Err(Error::Shape(format!("target {target} of {} logits", l.numel())));
                }
                let lp = ops::log_softmax(l.data());
                Ok((Tensor::scalar(-lp[*target]), Aux::LogProbs(lp)))
            }
            Op::CrfNll { emissions, trans, gold } => {
                let e = v(emissions);
                let a = v(trans);
                if gold.len() != e.rows() || gold.iter().any(|&g| g >= e.cols()) {
                    return Err(Error::Shape("crf gold tags do not match emissions".into()));
                }
                let z = crf::log_partition(e, a)?;
                plain(Tensor::scalar(z - crf::sequence_score(e, a, gold)))
            }
        }
    }

    /// Re-evaluates every recorded primitive from its recorded inputs and
    /// reports whether all outputs are bit-identical.
    pub fn replay(&self) -> Result<bool> {
        for node in &self.nodes {
            if matches!(node.op, Op::Param(_) | Op::Input) {
                continue;
            }
            let (value, _) = self.eval(&node.op)?;
            let same = value.shape() == node.value.shape()
                && value
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Reverse pass from a scalar node. Every trainable parameter gets a
    /// gradient, zero when it does not influence `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::zeros(self.params);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let v = |id: &NodeId| self.value(*id);
            match &node.op {
                Op::Param(p) => {
                    if let Some(t) = out.get_mut(*p) {
                        t.add_assign(&g);
                    }
                }
                Op::Input => {}
                Op::Gather { table, rows } => {
                    let d = v(table).cols();
                    let n = v(table).numel();
                    let gt = grads[table.0].get_or_insert_with(|| vec![0.0; n]);
                    for (r, &row) in rows.iter().enumerate() {
                        for (a, b) in gt[row * d..(row + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                            *a += b;
                        }
                    }
                }
                Op::Conv1d { x, k, b } => {
                    let gout = Tensor::from_parts(node.value.shape().to_vec(), g);
                    let (gx, gk, gb) = ops::conv1d_same_backward(v(x), v(k), &gout);
                    acc(&mut grads, *x, gx.data());
                    acc(&mut grads, *k, gk.data());
                    acc(&mut grads, *b, gb.data());
                }
                Op::Linear { x, w, b } => {
                    let gout = Tensor::from_parts(node.value.shape().to_vec(), g);
                    let (gx, gw, gb) = ops::linear_backward(v(x), v(w), &gout);
                    acc(&mut grads, *x, gx.data());
                    acc(&mut grads, *w, gw.data());
                    acc(&mut grads, *b, gb.data());
                }
                Op::Lstm { x, h, c, w, u, b } => {
                    let Aux::Lstm(cache) = &node.aux else { unreachable!() };
                    let hid = g.len() / 2;
                    let [gx, gh, gc, gw, gu, gb] =
                        ops::lstm_step_backward(v(x), v(h), v(c), v(w), v(u), cache, &g[..hid], &g[hid..]);
                    acc(&mut grads, *x, gx.data());
                    acc(&mut grads, *h, gh.data());
                    acc(&mut grads, *c, gc.data());
                    acc(&mut grads, *w, gw.data());
                    acc(&mut grads, *u, gu.data());
                    acc(&mut grads, *b, gb.data());
                }
                Op::Relu(x) => {
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                        .collect();
                    acc(&mut grads, *x, &gx);
                }
                Op::Dropout { x, mask } => {
                    let gx: Vec<f64> = g.iter().zip(mask).map(|(g, m)| g * m).collect();
                    acc(&mut grads, *x, &gx);
                }
                Op::MaxPool(x) => {
                    let Aux::Argmax(arg) = &node.aux else { unreachable!() };
                    let ch = arg.len();
                    let mut gx = vec![0.0; v(x).numel()];
                    for (c, &t) in arg.iter().enumerate() {
                        gx[t * ch + c] = g[c];
                    }
                    acc(&mut grads, *x, &gx);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, &g);
                    acc(&mut grads, *b, &g);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> = g.iter().zip(v(b).data()).map(|(g, y)| g * y).collect();
                    let gb: Vec<f64> = g.iter().zip(v(a).data()).map(|(g, y)| g * y).collect();
                    acc(&mut grads, *a, &ga);
                    acc(&mut grads, *b, &gb);
                }
                Op::Scale(x, s) => {
                    let gx: Vec<f64> = g.iter().map(|g| g * s).collect();
                    acc(&mut grads, *x, &gx);
                }
                Op::Sum(xs) => {
                    for x in xs {
                        let gx = vec![g[0]; v(x).numel()];
                        acc(&mut grads, *x, &gx);
                    }
                }
                Op::WeightedSum { x, weights } => {
                    let gx: Vec<f64> = weights.iter().map(|w| w * g[0]).collect();
                    acc(&mut grads, *x, &gx);
                }
                Op::Concat(parts) => {
                    let rows = node.value.rows();
                    let cols = node.value.cols();
                    let mut offset = 0;
                    for p in parts {
                        let pc = v(p).cols();
                        let mut gp = Vec::with_capacity(rows * pc);
                        for r in 0..rows {
                            gp.extend_from_slice(&g[r * cols + offset..r * cols + offset + pc]);
                        }
                        acc(&mut grads, *p, &gp);
                        offset += pc;
                    }
                }
                Op::Stack(rows) => {
                    let d = node.value.cols();
                    for (r, x) in rows.iter().enumerate() {
                        acc(&mut grads, *x, &g[r * d..(r + 1) * d]);
                    }
                }
                Op::Row { x, index } => {
                    let d = g.len();
                    let n = v(x).numel();
                    let gx = grads[x.0].get_or_insert_with(|| vec![0.0; n]);
                    for (a, b) in gx[index * d..(index + 1) * d].iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                Op::Slice { x, start, len } => {
                    let n = v(x).numel();
                    let gx = grads[x.0].get_or_insert_with(|| vec![0.0; n]);
                    for (a, b) in gx[*start..start + len].iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                Op::Nll { logits, target } => {
                    let Aux::LogProbs(lp) = &node.aux else { unreachable!() };
                    let mut gl: Vec<f64> = lp.iter().map(|l| l.exp() * g[0]).collect();
                    gl[*target] -= g[0];
                    acc(&mut grads, *logits, &gl);
                }
                Op::CrfNll { emissions, trans, gold } => {
                    let (_, ge, ga) = crf::nll_with_grad(v(emissions), v(trans), gold)?;
                    let ge: Vec<f64> = ge.data().iter().map(|x| x * g[0]).collect();
                    let ga: Vec<f64> = ga.data().iter().map(|x| x * g[0]).collect();
                    acc(&mut grads, *emissions, &ge);
                    acc(&mut grads, *trans, &ga);
                }
            }
        }
        Ok(out)
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, g: &[f64]) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Param(_) => "param",
        Op::Input => "input",
        Op::Gather { .. } => "gather",
        Op::Conv1d { .. } => "conv1d",
        Op::Linear { .. } => "linear",
        Op::Lstm { .. } => "lstm",
        Op::Relu(_) => "relu",
        Op::Dropout { .. } => "dropout",
        Op::MaxPool(_) => "max_pool",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Sum(_) => "sum",
        Op::WeightedSum { .. } => "weighted_sum",
        Op::Concat(_) => "concat",
        Op::Stack(_) => "stack",
        Op::Row { .. } => "row",
        Op::Slice { .. } => "slice",
        Op::Nll { .. } => "nll",
        Op::CrfNll { .. } => "crf_nll",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut ps = ParamSet::new();
        let w = ps.add("w", Tensor::vector(vec![3.0]), true).unwrap();
        let mut tape = Tape::new(&ps);
        let wn = tape.param(w);
        let sq = tape.mul(wn, wn).unwrap();
        let loss = tape.sum(vec![sq]).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[6.0]);
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut ps = ParamSet::new();
        let w = ps.add("w", Tensor::vector(vec![3.0, 1.0]), true).unwrap();
        let frozen = ps.add("f", Tensor::vector(vec![1.0]), false).unwrap();
        let mut tape = Tape::new(&ps);
        let c = tape.input(Tensor::scalar(4.0));
        let loss = tape.scale(c, 2.0).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[0.0, 0.0]);
        assert!(g.get(frozen).is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let ps = ParamSet::new();
        let mut tape = Tape::new(&ps);
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn max_pool_tie_routes_to_first() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::matrix(2, 2, vec![2.0, 0.0, 2.0, 0.0]).unwrap(), true).unwrap();
        let mut tape = Tape::new(&ps);
        let xn = tape.param(x);
        let m = tape.max_pool(xn).unwrap();
        let loss = tape.sum(vec![m]).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 0.0, 0.0]);
    }
}

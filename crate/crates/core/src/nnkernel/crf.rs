//! Linear-chain CRF kernels over an emission matrix `[n × T]` and a
//! transition matrix `A [T × T]` (`A[prev][next]`). There are no start or
//! stop transitions: the score of `t_1..t_n` is
//! `Σ_i e[i][t_i] + Σ_{i>1} A[t_{i-1}][t_i]`.

use super::ops::{argmax, log_sum_exp};
use super::Tensor;
use crate::{Error, Result};

fn check(emissions: &Tensor, trans: &Tensor) -> Result<(usize, usize)> {
    let (n, t) = (emissions.rows(), emissions.cols());
    if emissions.shape().len() != 2 || trans.shape() != [t, t] {
        return Err(Error::Shape(format!(
            "crf: emissions {:?}, transitions {:?}",
            emissions.shape(),
            trans.shape()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyInput("crf over zero positions".into()));
    }
    Ok((n, t))
}

pub fn sequence_score(emissions: &Tensor, trans: &Tensor, tags: &[usize]) -> f64 {
    let t = emissions.cols();
    let mut s = 0.0;
    for (i, &tag) in tags.iter().enumerate() {
        s += emissions.row(i)[tag];
        if i > 0 {
            s += trans.data()[tags[i - 1] * t + tag];
        }
    }
    s
}

/// Forward variables `alpha[i][k]` in log space.
fn forward(emissions: &Tensor, trans: &Tensor, n: usize, t: usize) -> Vec<Vec<f64>> {
    let a = trans.data();
    let mut alpha = Vec::with_capacity(n);
    alpha.push(emissions.row(0).to_vec());
    let mut buf = vec![0.0; t];
    for i in 1..n {
        let prev: &Vec<f64> = &alpha[i - 1];
        let e = emissions.row(i);
        let row = (0..t)
            .map(|k| {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = prev[j] + a[j * t + k];
                }
                log_sum_exp(&buf) + e[k]
            })
            .collect();
        alpha.push(row);
    }
    alpha
}

fn backward(emissions: &Tensor, trans: &Tensor, n: usize, t: usize) -> Vec<Vec<f64>> {
    let a = trans.data();
    let mut beta = vec![vec![0.0; t]; n];
    let mut buf = vec![0.0; t];
    for i in (0..n - 1).rev() {
        let e = emissions.row(i + 1);
        for j in 0..t {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = a[j * t + k] + e[k] + beta[i + 1][k];
            }
            beta[i][j] = log_sum_exp(&buf);
        }
    }
    beta
}

/// `log Z` by the forward algorithm.
pub fn log_partition(emissions: &Tensor, trans: &Tensor) -> Result<f64> {
    let (n, t) = check(emissions, trans)?;
    let alpha = forward(emissions, trans, n, t);
    Ok(log_sum_exp(&alpha[n - 1]))
}

/// Highest-scoring tag sequence and its (unnormalized) score.
/// Ties go to the lowest tag id at each back-pointer and at the last position.
pub fn viterbi(emissions: &Tensor, trans: &Tensor) -> Result<(Vec<usize>, f64)> {
    let (n, t) = check(emissions, trans)?;
    let a = trans.data();
    let mut delta = emissions.row(0).to_vec();
    let mut back = vec![vec![0usize; t]; n];
    let mut next = vec![0.0; t];
    let mut cand = vec![0.0; t];
    for i in 1..n {
        let e = emissions.row(i);
        for k in 0..t {
            for j in 0..t {
                cand[j] = delta[j] + a[j * t + k];
            }
            let j = argmax(&cand);
            back[i][k] = j;
            next[k] = cand[j] + e[k];
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut best = argmax(&delta);
    let score = delta[best];
    let mut tags = vec![0; n];
    for i in (0..n).rev() {
        tags[i] = best;
        best = back[i][best];
    }
    Ok((tags, score))
}

/// Chain-rule factors `log P(t_i | t_<i)` of a tag sequence under the CRF.
/// They sum to `score(tags) − log Z`.
pub fn conditional_log_probs(emissions: &Tensor, trans: &Tensor, tags: &[usize]) -> Result<Vec<f64>> {
    let (n, t) = check(emissions, trans)?;
    if tags.len() != n || tags.iter().any(|&g| g >= t) {
        return Err(Error::Shape(format!("crf: {} tags for {n} positions over {t} tags", tags.len())));
    }
    let a = trans.data();
    let beta = backward(emissions, trans, n, t);
    let mut first: Vec<f64> = emissions.row(0).to_vec();
    first.iter_mut().zip(&beta[0]).for_each(|(e, b)| *e += b);
    let log_z = log_sum_exp(&first);
    let mut out = Vec::with_capacity(n);
    out.push(first[tags[0]] - log_z);
    for i in 1..n {
        let (p, k) = (tags[i - 1], tags[i]);
        out.push(a[p * t + k] + emissions.row(i)[k] + beta[i][k] - beta[i - 1][p]);
    }
    Ok(out)
}

/// Negative log-likelihood `log Z − score(gold)` and its gradients with
/// respect to emissions and transitions.
pub fn nll_with_grad(emissions: &Tensor, trans: &Tensor, gold: &[usize]) -> Result<(f64, Tensor, Tensor)> {
    let (n, t) = check(emissions, trans)?;
    if gold.len() != n || gold.iter().any(|&g| g >= t) {
        return Err(Error::Shape(format!("crf: {} gold tags for {n} positions over {t} tags", gold.len())));
    }
    let a = trans.data();
    let alpha = forward(emissions, trans, n, t);
    let beta = backward(emissions, trans, n, t);
    let log_z = log_sum_exp(&alpha[n - 1]);
    let nll = log_z - sequence_score(emissions, trans, gold);

    let mut ge = vec![0.0; n * t];
    for i in 0..n {
        for k in 0..t {
            ge[i * t + k] = (alpha[i][k] + beta[i][k] - log_z).exp();
        }
        ge[i * t + gold[i]] -= 1.0;
    }
    let mut ga = vec![0.0; t * t];
    for i in 1..n {
        let e = emissions.row(i);
        for j in 0..t {
            for k in 0..t {
                ga[j * t + k] += (alpha[i - 1][j] + a[j * t + k] + e[k] + beta[i][k] - log_z).exp();
            }
        }
        ga[gold[i - 1] * t + gold[i]] -= 1.0;
    }
    Ok((
        nll,
        Tensor::from_parts(vec![n, t], ge),
        Tensor::from_parts(vec![t, t], ga),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_two_by_two() {
        let e = Tensor::zeros(&[2, 2]);
        let a = Tensor::zeros(&[2, 2]);
        assert!((log_partition(&e, &a).unwrap() - 4f64.ln()).abs() < 1e-12);
        let (tags, _) = viterbi(&e, &a).unwrap();
        assert_eq!(tags, [0, 0]);
    }

    #[test]
    fn single_position_is_logsumexp() {
        let e = Tensor::matrix(1, 3, vec![0.2, -1.0, 2.0]).unwrap();
        let a = Tensor::zeros(&[3, 3]);
        let want = (0.2f64.exp() + (-1.0f64).exp() + 2f64.exp()).ln();
        assert!((log_partition(&e, &a).unwrap() - want).abs() < 1e-12);
        assert_eq!(viterbi(&e, &a).unwrap().0, [2]);
    }

    #[test]
    fn shape_errors() {
        assert!(log_partition(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 2])).is_err());
        assert!(log_partition(&Tensor::zeros(&[0, 2]), &Tensor::zeros(&[2, 2])).is_err());
    }
}

//! Forward and backward kernels on plain tensors.
//!
//! Shapes: sequences are `[time × channels]`, convolution kernels are
//! `[width × in × out]`, dense weights are `[in × out]`.

use rand::Rng;

use super::Tensor;
use crate::{Error, Result};

fn shape_err<T>(msg: String) -> Result<T> {
    Err(Error::Shape(msg))
}

/// Same-length 1-D cross-correlation with zero padding of `(width - 1) / 2` per side.
pub fn conv1d_same(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (time, in_ch) = (input.rows(), input.cols());
    let ks = kernels.shape();
    if ks.len() != 3 {
        return shape_err(format!("kernels must be [width × in × out], got {ks:?}"));
    }
    let (width, k_in, out_ch) = (ks[0], ks[1], ks[2]);
    if width % 2 == 0 {
        return shape_err(format!("kernel width axis must be odd, got {width}"));
    }
    if k_in != in_ch || input.shape().len() != 2 {
        return shape_err(format!(
            "input channel axis {in_ch} (shape {:?}) does not match kernel in axis {k_in}",
            input.shape()
        ));
    }
    if bias.numel() != out_ch {
        return shape_err(format!("bias axis {} does not match kernel out axis {out_ch}", bias.numel()));
    }
    let half = (width / 2) as isize;
    let x = input.data();
    let k = kernels.data();
    let mut out = Vec::with_capacity(time * out_ch);
    for _ in 0..time {
        out.extend_from_slice(bias.data());
    }
    for t in 0..time {
        let o_row = &mut out[t * out_ch..(t + 1) * out_ch];
        for d in 0..width {
            let src = t as isize + d as isize - half;
            if src < 0 || src >= time as isize {
                continue;
            }
            let x_row = &x[src as usize * in_ch..(src as usize + 1) * in_ch];
            for (c, &xv) in x_row.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let k_row = &k[(d * in_ch + c) * out_ch..(d * in_ch + c + 1) * out_ch];
                for (o, kv) in o_row.iter_mut().zip(k_row) {
                    *o += xv * kv;
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![time, out_ch], out))
}

/// Gradients of [`conv1d_same`] w.r.t. input, kernels and bias.
pub fn conv1d_same_backward(input: &Tensor, kernels: &Tensor, gout: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (time, in_ch) = (input.rows(), input.cols());
    let ks = kernels.shape();
    let (width, out_ch) = (ks[0], ks[2]);
    let half = (width / 2) as isize;
    let x = input.data();
    let k = kernels.data();
    let g = gout.data();
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; k.len()];
    let mut gb = vec![0.0; out_ch];
    for t in 0..time {
        let g_row = &g[t * out_ch..(t + 1) * out_ch];
        for (b, gv) in gb.iter_mut().zip(g_row) {
            *b += gv;
        }
        for d in 0..width {
            let src = t as isize + d as isize - half;
            if src < 0 || src >= time as isize {
                continue;
            }
            let src = src as usize;
            for c in 0..in_ch {
                let base = (d * in_ch + c) * out_ch;
                let k_row = &k[base..base + out_ch];
                let xv = x[src * in_ch + c];
                let mut acc = 0.0;
                let gk_row = &mut gk[base..base + out_ch];
                for o in 0..out_ch {
                    acc += g_row[o] * k_row[o];
                    gk_row[o] += g_row[o] * xv;
                }
                gx[src * in_ch + c] += acc;
            }
        }
    }
    (
        Tensor::from_parts(input.shape().to_vec(), gx),
        Tensor::from_parts(ks.to_vec(), gk),
        Tensor::from_parts(vec![out_ch], gb),
    )
}

/// `x · w + b` for `x` of shape `[in]` or `[rows × in]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let ws = w.shape();
    if ws.len() != 2 || ws[0] != x.cols() || b.numel() != ws[1] {
        return shape_err(format!(
            "linear: input {:?}, weight {ws:?}, bias {:?}",
            x.shape(),
            b.shape()
        ));
    }
    let n_out = ws[1];
    let rows = x.rows();
    let mut out = Vec::with_capacity(rows * n_out);
    for r in 0..rows {
        let start = out.len();
        out.extend_from_slice(b.data());
        let o_row = &mut out[start..start + n_out];
        for (i, &xv) in x.row(r).iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (o, wv) in o_row.iter_mut().zip(&w.data()[i * n_out..(i + 1) * n_out]) {
                *o += xv * wv;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    match shape.last_mut() {
        Some(last) => *last = n_out,
        None => shape.push(n_out),
    }
    Ok(Tensor::from_parts(shape, out))
}

pub fn linear_backward(x: &Tensor, w: &Tensor, gout: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
    let mut gx = vec![0.0; x.numel()];
    let mut gw = vec![0.0; w.numel()];
    let mut gb = vec![0.0; n_out];
    for r in 0..x.rows() {
        let g_row = gout.row(r);
        for (b, gv) in gb.iter_mut().zip(g_row) {
            *b += gv;
        }
        let x_row = x.row(r);
        for i in 0..n_in {
            let w_row = &w.data()[i * n_out..(i + 1) * n_out];
            let gw_row = &mut gw[i * n_out..(i + 1) * n_out];
            let xv = x_row[i];
            let mut acc = 0.0;
            for o in 0..n_out {
                acc += g_row[o] * w_row[o];
                gw_row[o] += xv * g_row[o];
            }
            gx[r * n_in + i] = acc;
        }
    }
    (
        Tensor::from_parts(x.shape().to_vec(), gx),
        Tensor::from_parts(w.shape().to_vec(), gw),
        Tensor::from_parts(vec![n_out], gb),
    )
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Activations saved by [`lstm_step`] for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCache {
    /// `[i | f | g | o]` after their nonlinearities.
    pub gates: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One LSTM cell step. Weights: `w [in × 4H]`, `u [H × 4H]`, `b [4H]`, gate
/// order input, forget, candidate, output. Returns `(h, c)`.
pub fn lstm_step(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    w: &Tensor,
    u: &Tensor,
    b: &Tensor,
) -> Result<(Tensor, Tensor, LstmCache)> {
    let hid = h_prev.numel();
    if c_prev.numel() != hid
        || w.shape() != [x.numel(), 4 * hid]
        || u.shape() != [hid, 4 * hid]
        || b.numel() != 4 * hid
    {
        return shape_err(format!(
            "lstm: x {:?}, h {:?}, c {:?}, w {:?}, u {:?}, b {:?}",
            x.shape(),
            h_prev.shape(),
            c_prev.shape(),
            w.shape(),
            u.shape(),
            b.shape()
        ));
    }
    let n = 4 * hid;
    let mut z = b.data().to_vec();
    for (i, &xv) in x.data().iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (zv, wv) in z.iter_mut().zip(&w.data()[i * n..(i + 1) * n]) {
            *zv += xv * wv;
        }
    }
    for (j, &hv) in h_prev.data().iter().enumerate() {
        if hv == 0.0 {
            continue;
        }
        for (zv, uv) in z.iter_mut().zip(&u.data()[j * n..(j + 1) * n]) {
            *zv += hv * uv;
        }
    }
    for (k, zv) in z.iter_mut().enumerate() {
        *zv = if (2 * hid..3 * hid).contains(&k) { zv.tanh() } else { sigmoid(*zv) };
    }
    let mut c = vec![0.0; hid];
    let mut h = vec![0.0; hid];
    let mut tanh_c = vec![0.0; hid];
    for k in 0..hid {
        let (ig, fg, gg, og) = (z[k], z[hid + k], z[2 * hid + k], z[3 * hid + k]);
        c[k] = fg * c_prev.data()[k] + ig * gg;
        tanh_c[k] = c[k].tanh();
        h[k] = og * tanh_c[k];
    }
    Ok((
        Tensor::vector(h),
        Tensor::vector(c),
        LstmCache { gates: z, tanh_c },
    ))
}

/// Gradients of [`lstm_step`] w.r.t. `(x, h_prev, c_prev, w, u, b)` given
/// upstream gradients on `h` and `c`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step_backward(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    w: &Tensor,
    u: &Tensor,
    cache: &LstmCache,
    gh: &[f64],
    gc: &[f64],
) -> [Tensor; 6] {
    let hid = h_prev.numel();
    let n = 4 * hid;
    let z = &cache.gates;
    // gradient on pre-activations
    let mut dz = vec![0.0; n];
    let mut gc_prev = vec![0.0; hid];
    for k in 0..hid {
        let (ig, fg, gg, og) = (z[k], z[hid + k], z[2 * hid + k], z[3 * hid + k]);
        let tc = cache.tanh_c[k];
        let dc = gc[k] + gh[k] * og * (1.0 - tc * tc);
        let d_o = gh[k] * tc;
        let d_i = dc * gg;
        let d_f = dc * c_prev.data()[k];
        let d_g = dc * ig;
        gc_prev[k] = dc * fg;
        dz[k] = d_i * ig * (1.0 - ig);
        dz[hid + k] = d_f * fg * (1.0 - fg);
        dz[2 * hid + k] = d_g * (1.0 - gg * gg);
        dz[3 * hid + k] = d_o * og * (1.0 - og);
    }
    let outer = |v: &[f64], m: &Tensor| {
        let mut gm = vec![0.0; m.numel()];
        let mut gv = vec![0.0; v.len()];
        for (i, &vi) in v.iter().enumerate() {
            let m_row = &m.data()[i * n..(i + 1) * n];
            let g_row = &mut gm[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for k in 0..n {
                acc += dz[k] * m_row[k];
                g_row[k] += vi * dz[k];
            }
            gv[i] = acc;
        }
        (gv, gm)
    };
    let (gx, gw) = outer(x.data(), w);
    let (gh_prev, gu) = outer(h_prev.data(), u);
    [
        Tensor::from_parts(x.shape().to_vec(), gx),
        Tensor::from_parts(h_prev.shape().to_vec(), gh_prev),
        Tensor::from_parts(c_prev.shape().to_vec(), gc_prev),
        Tensor::from_parts(w.shape().to_vec(), gw),
        Tensor::from_parts(u.shape().to_vec(), gu),
        Tensor::from_parts(vec![n], dz),
    ]
}

/// Per-channel maximum over time; ties go to the first time index.
pub fn max_pool_time(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (time, ch) = (input.rows(), input.cols());
    if input.numel() == 0 || input.shape().len() != 2 {
        return Err(Error::EmptyInput(format!("max_pool_time on shape {:?}", input.shape())));
    }
    let mut best = input.row(0).to_vec();
    let mut arg = vec![0; ch];
    for t in 1..time {
        for (c, &v) in input.row(t).iter().enumerate() {
            if v > best[c] {
                best[c] = v;
                arg[c] = t;
            }
        }
    }
    Ok((Tensor::vector(best), arg))
}

/// Train or inference behaviour of stochastic layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout and word-drop active.
    Train,
    /// Deterministic.
    Eval,
    /// Dropout active, word-drop off: Monte Carlo dropout passes.
    Stochastic,
}

impl Mode {
    pub fn dropout_active(self) -> bool {
        matches!(self, Mode::Train | Mode::Stochastic)
    }
}

/// Inverted-dropout multipliers: `0` with probability `p`, else `1 / (1 - p)`.
pub fn dropout_mask<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect()
}

pub fn check_dropout_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Param(format!("dropout probability must be in [0, 1), got {p}")));
    }
    Ok(())
}

/// Inverted dropout on a plain tensor. Identity in eval mode or when `p = 0`.
pub fn dropout<R: Rng + ?Sized>(input: &Tensor, p: f64, mode: Mode, rng: &mut R) -> Result<Tensor> {
    check_dropout_p(p)?;
    if !mode.dropout_active() || p == 0.0 {
        return Ok(input.clone());
    }
    let mask = dropout_mask(input.numel(), p, rng);
    let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok(Tensor::from_parts(input.shape().to_vec(), data))
}

/// Numerically stable log-softmax.
pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    #[test]
    fn conv_difference_kernel() {
        let k = Tensor::new(vec![3, 1, 1], vec![1.0, 0.0, -1.0]).unwrap();
        let out = conv1d_same(&col(&[1.0, 2.0, 3.0]), &k, &Tensor::vector(vec![0.0])).unwrap();
        // y_t = x_{t-1} - x_{t+1}, zeros outside
        assert_eq!(out.data(), &[-2.0, -2.0, 2.0]);
    }

    #[test]
    fn conv_identity_and_bias() {
        let k = Tensor::new(vec![3, 1, 1], vec![0.0, 1.0, 0.0]).unwrap();
        let x = col(&[0.5, -1.0, 4.0, 2.0]);
        assert_eq!(conv1d_same(&x, &k, &Tensor::vector(vec![0.0])).unwrap().data(), x.data());
        let out = conv1d_same(&col(&[0.0; 4]), &k, &Tensor::vector(vec![1.5])).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn conv_shape_errors() {
        let k = Tensor::zeros(&[3, 2, 1]);
        let err = conv1d_same(&col(&[1.0]), &k, &Tensor::zeros(&[1])).unwrap_err();
        assert!(err.to_string().contains("channel"), "{err}");
        let even = Tensor::zeros(&[2, 1, 1]);
        assert!(conv1d_same(&col(&[1.0]), &even, &Tensor::zeros(&[1])).is_err());
    }

    fn zero_lstm(n_in: usize, hid: usize) -> (Tensor, Tensor, Tensor) {
        (
            Tensor::zeros(&[n_in, 4 * hid]),
            Tensor::zeros(&[hid, 4 * hid]),
            Tensor::zeros(&[4 * hid]),
        )
    }

    #[test]
    fn lstm_zero_params() {
        let (w, u, b) = zero_lstm(3, 2);
        let x = Tensor::vector(vec![0.3, -0.2, 0.9]);
        let (h, c, _) = lstm_step(&x, &Tensor::zeros(&[2]), &Tensor::zeros(&[2]), &w, &u, &b).unwrap();
        assert_eq!(h.data(), &[0.0, 0.0]);
        assert_eq!(c.data(), &[0.0, 0.0]);

        let v = [1.2, -3.0];
        let (h, c, _) = lstm_step(&x, &Tensor::zeros(&[2]), &Tensor::vector(v.to_vec()), &w, &u, &b).unwrap();
        for k in 0..2 {
            assert!((c.data()[k] - 0.5 * v[k]).abs() < 1e-15);
            assert!((h.data()[k] - 0.5 * (0.5 * v[k]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn max_pool_cases() {
        let x = Tensor::new(vec![2, 2], vec![1.0, 4.0, 3.0, 2.0]).unwrap();
        let (m, arg) = max_pool_time(&x).unwrap();
        assert_eq!(m.data(), &[3.0, 4.0]);
        assert_eq!(arg, [1, 0]);
        let single = Tensor::new(vec![1, 3], vec![5.0, -1.0, 2.0]).unwrap();
        assert_eq!(max_pool_time(&single).unwrap().0.data(), single.data());
        let tie = Tensor::new(vec![2, 2], vec![2.0, 0.0, 2.0, 0.0]).unwrap();
        assert_eq!(max_pool_time(&tie).unwrap().1, [0, 0]);
        assert!(matches!(max_pool_time(&Tensor::zeros(&[0, 2])), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.7, Mode::Eval, &mut rng).unwrap(), x);
        assert!(matches!(dropout(&x, 1.0, Mode::Train, &mut rng), Err(Error::Param(_))));
    }

    #[test]
    fn dropout_is_unbiased() {
        // Monte Carlo: E[dropout(x)] = x; 10,000 draws of a unit at p = 0.5 has
        // relative standard error 1 / sqrt(10,000) = 1%, so 5% is a 5 sigma bound.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::vector(vec![2.5]);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| dropout(&x, 0.5, Mode::Train, &mut rng).unwrap().data()[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 2.5).abs() / 2.5 < 0.05, "mean {mean}");
    }

    #[test]
    fn log_softmax_normalizes() {
        let lp = log_softmax(&[1000.0, 999.0, -5.0]);
        let s: f64 = lp.iter().map(|x| x.exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}

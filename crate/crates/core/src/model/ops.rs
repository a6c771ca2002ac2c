//! Forward and backward passes of the network's building blocks.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use super::params::{view1, view1_mut, view2, view2_mut, LinearIdx, NormIdx};

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn linear(p: &[f64], idx: &LinearIdx, x: &ArrayView2<f64>) -> Array2<f64> {
    let w = view2(p, idx.w, idx.fan_in, idx.fan_out);
    let b = view1(p, idx.b, idx.fan_out);
    let mut y = x.dot(&w);
    y += &b;
    y
}

/// Accumulates weight/bias gradients and returns the input gradient.
pub(crate) fn linear_backward(
    p: &[f64],
    g: &mut [f64],
    idx: &LinearIdx,
    x: &ArrayView2<f64>,
    dy: &ArrayView2<f64>,
) -> Array2<f64> {
    {
        let mut dw = view2_mut(g, idx.w, idx.fan_in, idx.fan_out);
        general_mat_mul(1.0, &x.t(), dy, 1.0, &mut dw);
    }
    {
        let mut db = view1_mut(g, idx.b, idx.fan_out);
        db += &dy.sum_axis(Axis(0));
    }
    dy.dot(&view2(p, idx.w, idx.fan_in, idx.fan_out).t())
}

/// Like [`linear_backward`] without the input gradient.
pub(crate) fn linear_backward_params(g: &mut [f64], idx: &LinearIdx, x: &ArrayView2<f64>, dy: &ArrayView2<f64>) {
    let mut dw = view2_mut(g, idx.w, idx.fan_in, idx.fan_out);
    general_mat_mul(1.0, &x.t(), dy, 1.0, &mut dw);
    let mut db = view1_mut(g, idx.b, idx.fan_out);
    db += &dy.sum_axis(Axis(0));
}

pub(crate) struct NormCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub(crate) fn layer_norm(p: &[f64], idx: &NormIdx, x: &ArrayView2<f64>) -> (Array2<f64>, NormCache) {
    let d = idx.dim as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = centered * inv_std.view().insert_axis(Axis(1));
    let gamma = view1(p, idx.gamma, idx.dim);
    let beta = view1(p, idx.beta, idx.dim);
    let y = &xhat * &gamma + beta;
    (y, NormCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward(
    p: &[f64],
    g: &mut [f64],
    idx: &NormIdx,
    cache: &NormCache,
    dy: &ArrayView2<f64>,
) -> Array2<f64> {
    {
        let mut dgamma = view1_mut(g, idx.gamma, idx.dim);
        dgamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    }
    {
        let mut dbeta = view1_mut(g, idx.beta, idx.dim);
        dbeta += &dy.sum_axis(Axis(0));
    }
    let gamma = view1(p, idx.gamma, idx.dim);
    let dxhat = dy * &gamma;
    let d = idx.dim as f64;
    let mean_dxhat = dxhat.sum_axis(Axis(1)) / d;
    let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat;
    Zip::from(dx.rows_mut())
        .and(cache.xhat.rows())
        .and(&mean_dxhat)
        .and(&mean_dxhat_xhat)
        .and(&cache.inv_std)
        .for_each(|mut row, xh, &m1, &m2, &s| {
            Zip::from(&mut row)
                .and(&xh)
                .for_each(|v, &xv| *v = s * (*v - m1 - xv * m2));
        });
    dx
}

#[inline]
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub(crate) fn gelu_backward(pre: &Array2<f64>, dy: &ArrayView2<f64>) -> Array2<f64> {
    let mut dx = dy.to_owned();
    Zip::from(&mut dx).and(pre).for_each(|d, &x| *d *= gelu_grad(x));
    dx
}

pub(crate) fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
}

/// Multi-head scaled dot-product attention. Returns the concatenated head
/// outputs and the attention weights of every head.
pub(crate) fn attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    n_heads: usize,
) -> (Array2<f64>, Vec<Array2<f64>>) {
    let (t, d) = q.dim();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Array2::zeros((t, d));
    let mut weights = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        scores *= scale;
        softmax_rows(&mut scores);
        out.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        weights.push(scores);
    }
    (out, weights)
}

/// Gradients of [`attention`] with respect to `q`, `k`, `v`.
pub(crate) fn attention_backward(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    weights: &[Array2<f64>],
    dout: &ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let (t, d) = q.dim();
    let n_heads = weights.len();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::zeros((t, d));
    let mut dk = Array2::zeros((t, d));
    let mut dv = Array2::zeros((t, d));
    for (h, a) in weights.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let do_h = dout.slice(cols);
        dv.slice_mut(cols).assign(&a.t().dot(&do_h));
        let da = do_h.dot(&v.slice(cols).t());
        let row_dot = (&da * a).sum_axis(Axis(1));
        let mut ds = da - row_dot.view().insert_axis(Axis(1));
        ds *= a;
        ds *= scale;
        dq.slice_mut(cols).assign(&ds.dot(&k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&q.slice(cols)));
    }
    (dq, dk, dv)
}

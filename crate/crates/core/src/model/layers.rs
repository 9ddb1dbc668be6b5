//! Layer primitives with their backward passes, over packed row-major activations.

use super::params::{AttnIdx, Gradients, LnIdx, ParameterStore};
use super::scalar::{gemm, Float, View};
use crate::concepts::SeededRng;

const LN_EPS: f64 = 1e-5;

/// Rows `offset..offset + len` of a packed activation matrix belonging to one example.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Seg {
    pub offset: usize,
    pub len: usize,
}

pub(crate) fn segments(lengths: impl IntoIterator<Item = usize>) -> Vec<Seg> {
    let mut offset = 0;
    lengths
        .into_iter()
        .map(|len| {
            let s = Seg { offset, len };
            offset += len;
            s
        })
        .collect()
}

/// `y = x w` for `x: n x din`, `w: din x dout`.
pub(crate) fn linear<T: Float>(x: &[T], w: &[T], n: usize, din: usize, dout: usize) -> Vec<T> {
    let mut y = vec![T::zero(); n * dout];
    gemm(View::new(x, n, din), View::new(w, din, dout), &mut y, dout, T::one(), T::zero());
    y
}

/// Accumulates `x^T dy` into `dw` and returns `dy w^T`.
pub(crate) fn linear_backward<T: Float>(
    x: &[T],
    w: &[T],
    dy: &[T],
    n: usize,
    din: usize,
    dout: usize,
    dw: &mut [T],
) -> Vec<T> {
    gemm(View::new(x, n, din).t(), View::new(dy, n, dout), dw, dout, T::one(), T::one());
    let mut dx = vec![T::zero(); n * din];
    gemm(View::new(dy, n, dout), View::new(w, din, dout).t(), &mut dx, din, T::one(), T::zero());
    dx
}

pub(crate) struct LnCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
    pub y: Vec<T>,
}

pub(crate) fn layer_norm<T: Float>(x: &[T], g: &[T], b: &[T], d: usize) -> LnCache<T> {
    let n = x.len() / d;
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); n];
    let inv_d = T::one() / T::of(d as f64);
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let rs = T::one() / (var + T::of(LN_EPS)).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat[r * d + j] = h;
            y[r * d + j] = g[j] * h + b[j];
        }
    }
    LnCache { xhat, rstd, y }
}

pub(crate) fn layer_norm_params<T: Float>(p: &ParameterStore<T>, idx: LnIdx, x: &[T]) -> LnCache<T> {
    let d = p.config().d_model;
    layer_norm(x, p.data(idx.g), p.data(idx.b), d)
}

/// Returns `dx` and accumulates gain and bias gradients.
pub(crate) fn layer_norm_backward<T: Float>(
    p: &ParameterStore<T>,
    idx: LnIdx,
    cache: &LnCache<T>,
    dy: &[T],
    grads: &mut Gradients<T>,
) -> Vec<T> {
    let d = p.config().d_model;
    let g = p.data(idx.g);
    let n = dy.len() / d;
    {
        let dg = grads.get_mut(idx.g);
        for r in 0..n {
            for j in 0..d {
                dg[j] += dy[r * d + j] * cache.xhat[r * d + j];
            }
        }
    }
    {
        let db = grads.get_mut(idx.b);
        for r in 0..n {
            for j in 0..d {
                db[j] += dy[r * d + j];
            }
        }
    }
    let inv_d = T::one() / T::of(d as f64);
    let mut dx = vec![T::zero(); dy.len()];
    for r in 0..n {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let dxhat: Vec<T> = (0..d).map(|j| dy[r * d + j] * g[j]).collect();
        let m1 = dxhat.iter().copied().sum::<T>() * inv_d;
        let m2 = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() * inv_d;
        for j in 0..d {
            dx[r * d + j] = cache.rstd[r] * (dxhat[j] - m1 - xh[j] * m2);
        }
    }
    dx
}

const GELU_C: f64 = 0.044_715;

fn gelu_k<T: Float>() -> T {
    T::of((2.0 / std::f64::consts::PI).sqrt())
}

/// Tanh approximation of GELU.
pub(crate) fn gelu<T: Float>(x: T) -> T {
    let half = T::of(0.5);
    let u = gelu_k::<T>() * (x + T::of(GELU_C) * x * x * x);
    half * x * (T::one() + u.tanh())
}

pub(crate) fn gelu_grad<T: Float>(x: T) -> T {
    let half = T::of(0.5);
    let k = gelu_k::<T>();
    let t = (k * (x + T::of(GELU_C) * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + T::of(3.0 * GELU_C) * x * x)
}

/// Inverted-dropout multipliers, or `None` when dropout is inactive.
pub(crate) fn dropout_mask<T: Float>(n: usize, rate: f64, rng: Option<&mut SeededRng>) -> Option<Vec<T>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - rate));
    Some(
        (0..n)
            .map(|_| if rng.unit() < rate { T::zero() } else { keep })
            .collect(),
    )
}

pub(crate) fn apply_mask<T: Float>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(a, &b)| *a *= b);
    }
}

/// In-place softmax of each row; with `causal`, row `i` only covers columns `0..=i`.
pub(crate) fn softmax_rows<T: Float>(s: &mut [T], rows: usize, cols: usize, causal: bool) {
    for i in 0..rows {
        let row = &mut s[i * cols..(i + 1) * cols];
        let live = if causal { (i + 1).min(cols) } else { cols };
        let max = row[..live].iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in &mut row[..live] {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in &mut row[..live] {
            *v = *v / sum;
        }
        for v in &mut row[live..] {
            *v = T::zero();
        }
    }
}

pub(crate) struct AttnCache<T> {
    pub q: Vec<T>,
    pub k: Vec<T>,
    pub v: Vec<T>,
    /// Attention weights, one `len_q x len_k` block per (example, head).
    pub probs: Vec<T>,
    /// Concatenated head outputs before the output projection.
    pub ctx: Vec<T>,
}

/// Multi-head attention of `xq` rows over `xkv` rows, example by example.
pub(crate) fn attention<T: Float>(
    p: &ParameterStore<T>,
    idx: AttnIdx,
    xq: &[T],
    q_segs: &[Seg],
    xkv: &[T],
    kv_segs: &[Seg],
    causal: bool,
) -> (Vec<T>, AttnCache<T>) {
    let cfg = p.config();
    let (d, heads, dh) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
    let nq = xq.len() / d;
    let nk = xkv.len() / d;
    let q = linear(xq, p.data(idx.wq), nq, d, d);
    let k = linear(xkv, p.data(idx.wk), nk, d, d);
    let v = linear(xkv, p.data(idx.wv), nk, d, d);
    let scale = T::one() / T::of(dh as f64).sqrt();
    let total: usize = q_segs.iter().zip(kv_segs).map(|(a, b)| a.len * b.len).sum::<usize>() * heads;
    let mut probs = vec![T::zero(); total];
    let mut ctx = vec![T::zero(); nq * d];
    let mut off = 0;
    for (qs, ks) in q_segs.iter().zip(kv_segs) {
        let (lq, lk) = (qs.len, ks.len);
        for h in 0..heads {
            let block = &mut probs[off..off + lq * lk];
            let qv = View::block(&q[qs.offset * d + h * dh..], lq, dh, d);
            let kv = View::block(&k[ks.offset * d + h * dh..], lk, dh, d);
            gemm(qv, kv.t(), block, lk, scale, T::zero());
            softmax_rows(block, lq, lk, causal);
            let vv = View::block(&v[ks.offset * d + h * dh..], lk, dh, d);
            gemm(
                View::new(block, lq, lk),
                vv,
                &mut ctx[qs.offset * d + h * dh..],
                d,
                T::one(),
                T::zero(),
            );
            off += lq * lk;
        }
    }
    let out = linear(&ctx, p.data(idx.wo), nq, d, d);
    (out, AttnCache { q, k, v, probs, ctx })
}

/// Returns gradients with respect to the query-side and key/value-side inputs.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward<T: Float>(
    p: &ParameterStore<T>,
    idx: AttnIdx,
    cache: &AttnCache<T>,
    xq: &[T],
    q_segs: &[Seg],
    xkv: &[T],
    kv_segs: &[Seg],
    dout: &[T],
    grads: &mut Gradients<T>,
) -> (Vec<T>, Vec<T>) {
    let cfg = p.config();
    let (d, heads, dh) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
    let nq = xq.len() / d;
    let nk = xkv.len() / d;
    let dctx = linear_backward(&cache.ctx, p.data(idx.wo), dout, nq, d, d, grads.get_mut(idx.wo));
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut dq = vec![T::zero(); nq * d];
    let mut dk = vec![T::zero(); nk * d];
    let mut dv = vec![T::zero(); nk * d];
    let mut off = 0;
    let mut ds = Vec::new();
    for (qs, ks) in q_segs.iter().zip(kv_segs) {
        let (lq, lk) = (qs.len, ks.len);
        for h in 0..heads {
            let pb = &cache.probs[off..off + lq * lk];
            let dctx_b = View::block(&dctx[qs.offset * d + h * dh..], lq, dh, d);
            let v_b = View::block(&cache.v[ks.offset * d + h * dh..], lk, dh, d);
            // dV += P^T dctx
            gemm(
                View::new(pb, lq, lk).t(),
                dctx_b,
                &mut dv[ks.offset * d + h * dh..],
                d,
                T::one(),
                T::one(),
            );
            // dP = dctx V^T, then through the softmax.
            ds.clear();
            ds.resize(lq * lk, T::zero());
            gemm(dctx_b, v_b.t(), &mut ds, lk, T::one(), T::zero());
            for i in 0..lq {
                let prow = &pb[i * lk..(i + 1) * lk];
                let drow = &mut ds[i * lk..(i + 1) * lk];
                let dot = prow.iter().zip(drow.iter()).map(|(&a, &b)| a * b).sum::<T>();
                for (dd, &pp) in drow.iter_mut().zip(prow) {
                    *dd = pp * (*dd - dot) * scale;
                }
            }
            let q_b = View::block(&cache.q[qs.offset * d + h * dh..], lq, dh, d);
            let k_b = View::block(&cache.k[ks.offset * d + h * dh..], lk, dh, d);
            gemm(
                View::new(&ds, lq, lk),
                k_b,
                &mut dq[qs.offset * d + h * dh..],
                d,
                T::one(),
                T::one(),
            );
            gemm(
                View::new(&ds, lq, lk).t(),
                q_b,
                &mut dk[ks.offset * d + h * dh..],
                d,
                T::one(),
                T::one(),
            );
            off += lq * lk;
        }
    }
    let dxq = linear_backward(xq, p.data(idx.wq), &dq, nq, d, d, grads.get_mut(idx.wq));
    let mut dxkv = linear_backward(xkv, p.data(idx.wk), &dk, nk, d, d, grads.get_mut(idx.wk));
    let dxv = linear_backward(xkv, p.data(idx.wv), &dv, nk, d, d, grads.get_mut(idx.wv));
    add_into(&mut dxkv, &dxv);
    (dxq, dxkv)
}

pub(crate) fn add_into<T: Float>(a: &mut [T], b: &[T]) {
    a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_normalise_and_respect_causality() {
        let mut s: Vec<f64> = (0..12).map(|x| (x as f64 * 0.7).sin() * 3.0).collect();
        softmax_rows(&mut s, 3, 4, true);
        for i in 0..3 {
            let row = &s[i * 4..(i + 1) * 4];
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!(row[i + 1..].iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.3, 1.9] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn layer_norm_rows_are_standardised() {
        let x: Vec<f64> = (0..8).map(|v| v as f64 * v as f64).collect();
        let c = layer_norm(&x, &[1.0; 4], &[0.0; 4], 4);
        for r in 0..2 {
            let row = &c.y[r * 4..(r + 1) * 4];
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn segments_are_contiguous() {
        assert_eq!(
            segments([2, 3, 1]),
            vec![
                Seg { offset: 0, len: 2 },
                Seg { offset: 2, len: 3 },
                Seg { offset: 5, len: 1 }
            ]
        );
    }
}

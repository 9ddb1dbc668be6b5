use super::layers::{gelu, layer_norm_params, linear};
use super::params::{AttnIdx, ParameterStore};
use super::scalar::{gemm, Float, View};
use super::transformer::encoder_states;
use super::{check_ids, ModelError};
use crate::corpus::EOS_ID;
use rayon::prelude::*;

/// `ceil(1.2 * len)`.
pub fn default_max_len(len: usize) -> usize {
    (len * 6).div_ceil(5)
}

/// Single-query attention over `len` cached key/value rows.
fn attend_one<T: Float>(p: &ParameterStore<T>, idx: AttnIdx, q: &[T], k: &[T], v: &[T], len: usize) -> Vec<T> {
    let cfg = p.config();
    let (d, heads, dh) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut ctx = vec![T::zero(); d];
    let mut s = vec![T::zero(); len];
    for h in 0..heads {
        let qh = View::block(&q[h * dh..], 1, dh, d);
        let kh = View::block(&k[h * dh..], len, dh, d);
        gemm(qh, kh.t(), &mut s, len, scale, T::zero());
        let max = s.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for x in &mut s {
            *x = (*x - max).exp();
            sum += *x;
        }
        s.iter_mut().for_each(|x| *x = *x / sum);
        let vh = View::block(&v[h * dh..], len, dh, d);
        gemm(View::new(&s, 1, len), vh, &mut ctx[h * dh..], d, T::one(), T::zero());
    }
    linear(&ctx, p.data(idx.wo), 1, d, d)
}

fn argmax<T: Float>(row: &[T]) -> u32 {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best as u32
}

/// Greedy decoding with cached keys and values. Stops at EOS (not emitted)
/// or after `max_len` tokens, which is capped at `max_seq_len - 1` so the
/// decoder input never exceeds the model's positions.
pub fn decode_greedy<T: Float>(p: &ParameterStore<T>, src: &[u32], max_len: usize) -> Result<Vec<u32>, ModelError> {
    let cfg = p.config();
    if max_len == 0 {
        return Ok(Vec::new());
    }
    if src.is_empty() {
        return Err(ModelError::EmptySequence("source"));
    }
    if src.len() > cfg.max_seq_len {
        return Err(ModelError::SequenceTooLong {
            len: src.len(),
            max: cfg.max_seq_len,
        });
    }
    check_ids(src, cfg.vocab_size)?;
    let (d, v) = (cfg.d_model, cfg.vocab_size);
    let steps = max_len.min(cfg.max_seq_len.saturating_sub(1));
    let layout = &p.layout;
    let enc = encoder_states(p, src);
    let ls = src.len();
    let cross_kv: Vec<(Vec<T>, Vec<T>)> = layout
        .dec
        .iter()
        .map(|li| {
            (
                linear(&enc, p.data(li.cross.wk), ls, d, d),
                linear(&enc, p.data(li.cross.wv), ls, d, d),
            )
        })
        .collect();
    let mut self_k: Vec<Vec<T>> = vec![Vec::new(); layout.dec.len()];
    let mut self_v: Vec<Vec<T>> = vec![Vec::new(); layout.dec.len()];
    let e = p.data(layout.embed);
    let pos = p.data(layout.dec_pos);
    let out = p.data(layout.out);
    let mut logits = vec![T::zero(); v];
    let mut emitted = Vec::new();
    let mut tok = crate::corpus::BOS_ID as usize;
    for t in 0..steps {
        let mut x: Vec<T> = (0..d).map(|j| e[tok * d + j] + pos[t * d + j]).collect();
        for (l, li) in layout.dec.iter().enumerate() {
            let a = layer_norm_params(p, li.ln1, &x).y;
            let q = linear(&a, p.data(li.self_attn.wq), 1, d, d);
            self_k[l].extend(linear(&a, p.data(li.self_attn.wk), 1, d, d));
            self_v[l].extend(linear(&a, p.data(li.self_attn.wv), 1, d, d));
            let o = attend_one(p, li.self_attn, &q, &self_k[l], &self_v[l], t + 1);
            x.iter_mut().zip(&o).for_each(|(a, &b)| *a += b);
            let c = layer_norm_params(p, li.ln2, &x).y;
            let q = linear(&c, p.data(li.cross.wq), 1, d, d);
            let o = attend_one(p, li.cross, &q, &cross_kv[l].0, &cross_kv[l].1, ls);
            x.iter_mut().zip(&o).for_each(|(a, &b)| *a += b);
            let f = layer_norm_params(p, li.ln3, &x).y;
            let hidden: Vec<T> = linear(&f, p.data(li.ffn.w1), 1, d, cfg.d_ffn)
                .into_iter()
                .map(gelu)
                .collect();
            let o = linear(&hidden, p.data(li.ffn.w2), 1, cfg.d_ffn, d);
            x.iter_mut().zip(&o).for_each(|(a, &b)| *a += b);
        }
        let y = layer_norm_params(p, layout.dec_ln, &x).y;
        gemm(View::new(&y, 1, d), View::new(out, v, d).t(), &mut logits, v, T::one(), T::zero());
        let next = argmax(&logits);
        if next == EOS_ID {
            break;
        }
        emitted.push(next);
        tok = next as usize;
    }
    Ok(emitted)
}

/// Decodes every source in parallel; `max_lens[i]` bounds output `i`.
pub fn decode_batch<T: Float>(
    p: &ParameterStore<T>,
    srcs: &[Vec<u32>],
    max_lens: &[usize],
) -> Result<Vec<Vec<u32>>, ModelError> {
    assert_eq!(srcs.len(), max_lens.len(), "one max_len per source");
    srcs.par_iter()
        .zip(max_lens.par_iter())
        .map(|(s, &m)| decode_greedy(p, s, m))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward_logits, ModelConfig};

    fn cfg() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 2,
            d_ffn: 32,
            max_seq_len: 12,
            vocab_size: 20,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn max_len_zero_is_empty() {
        let p = ParameterStore::<f32>::init(&cfg(), 0).unwrap();
        assert!(decode_greedy(&p, &[4, 5], 0).unwrap().is_empty());
        assert_eq!(default_max_len(5), 6);
        assert_eq!(default_max_len(10), 12);
        assert_eq!(default_max_len(0), 0);
    }

    #[test]
    fn each_step_matches_full_forward_argmax() {
        let mut p = ParameterStore::<f64>::init(&cfg(), 3).unwrap();
        // Larger weights give non-trivial, EOS-free outputs.
        let mut rng = crate::concepts::SeededRng::new(1);
        for t in p.tensors_mut() {
            if t.shape.len() > 1 {
                t.data.iter_mut().for_each(|x| *x = 0.5 * rng.normal());
            }
        }
        for src in [vec![4u32, 9, 13], vec![7, 7, 8, 19, 5]] {
            let out = decode_greedy(&p, &src, 8).unwrap();
            let mut dec_in = vec![crate::corpus::BOS_ID];
            for &tok in &out {
                let logits = forward_logits(&p, &src, &dec_in).unwrap();
                let last = &logits[(dec_in.len() - 1) * 20..];
                assert_eq!(argmax(last), tok);
                dec_in.push(tok);
            }
            if out.len() < 8 {
                let logits = forward_logits(&p, &src, &dec_in).unwrap();
                assert_eq!(argmax(&logits[(dec_in.len() - 1) * 20..]), EOS_ID);
            }
        }
    }

    #[test]
    fn batch_matches_sequential() {
        let p = ParameterStore::<f32>::init(&cfg(), 9).unwrap();
        let srcs = vec![vec![4, 5, 6], vec![7], vec![19, 18, 17, 16]];
        let lens = vec![3, 5, 11];
        let batch = decode_batch(&p, &srcs, &lens).unwrap();
        for ((s, &m), b) in srcs.iter().zip(&lens).zip(&batch) {
            assert_eq!(&decode_greedy(&p, s, m).unwrap(), b);
            assert!(b.len() <= m);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
    }
}

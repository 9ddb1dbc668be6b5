use super::layers::{
    add_into, apply_mask, attention, attention_backward, dropout_mask, gelu, gelu_grad, layer_norm_backward,
    layer_norm_params, linear, linear_backward, segments, AttnCache, LnCache, Seg,
};
use super::params::{FfnIdx, Gradients, ParameterStore};
use super::scalar::{gemm, Float, View};
use super::{ModelError, Seq2Seq};
use crate::concepts::SeededRng;

struct FfnCache<T> {
    pre: Vec<T>,
    act: Vec<T>,
}

fn ffn<T: Float>(p: &ParameterStore<T>, idx: FfnIdx, x: &[T]) -> (Vec<T>, FfnCache<T>) {
    let cfg = p.config();
    let (d, f) = (cfg.d_model, cfg.d_ffn);
    let n = x.len() / d;
    let pre = linear(x, p.data(idx.w1), n, d, f);
    let act: Vec<T> = pre.iter().map(|&v| gelu(v)).collect();
    let out = linear(&act, p.data(idx.w2), n, f, d);
    (out, FfnCache { pre, act })
}

fn ffn_backward<T: Float>(
    p: &ParameterStore<T>,
    idx: FfnIdx,
    cache: &FfnCache<T>,
    x: &[T],
    dout: &[T],
    grads: &mut Gradients<T>,
) -> Vec<T> {
    let cfg = p.config();
    let (d, f) = (cfg.d_model, cfg.d_ffn);
    let n = x.len() / d;
    let mut dact = linear_backward(&cache.act, p.data(idx.w2), dout, n, f, d, grads.get_mut(idx.w2));
    dact.iter_mut().zip(&cache.pre).for_each(|(g, &z)| *g *= gelu_grad(z));
    linear_backward(x, p.data(idx.w1), &dact, n, d, f, grads.get_mut(idx.w1))
}

struct EncLayerCache<T> {
    ln1: LnCache<T>,
    attn: AttnCache<T>,
    drop1: Option<Vec<T>>,
    ln2: LnCache<T>,
    ffn: FfnCache<T>,
    drop2: Option<Vec<T>>,
}

struct DecLayerCache<T> {
    ln1: LnCache<T>,
    self_attn: AttnCache<T>,
    drop1: Option<Vec<T>>,
    ln2: LnCache<T>,
    cross: AttnCache<T>,
    drop2: Option<Vec<T>>,
    ln3: LnCache<T>,
    ffn: FfnCache<T>,
    drop3: Option<Vec<T>>,
}

/// Activations of one forward pass, consumed by [`backward`].
pub struct ForwardTrace<T> {
    version: u64,
    src_segs: Vec<Seg>,
    tgt_segs: Vec<Seg>,
    src_tokens: Vec<u32>,
    tgt_tokens: Vec<u32>,
    enc_drop: Option<Vec<T>>,
    enc: Vec<EncLayerCache<T>>,
    enc_ln: LnCache<T>,
    dec_drop: Option<Vec<T>>,
    dec: Vec<DecLayerCache<T>>,
    dec_ln: LnCache<T>,
    /// Softmax over the vocabulary for every decoder row.
    probs: Vec<T>,
    gold: Vec<u32>,
    counted: Vec<bool>,
    count: usize,
    nll: Vec<T>,
}

impl<T: Float> ForwardTrace<T> {
    /// Mean negative log-likelihood over counted positions (0 when none count).
    pub fn loss(&self) -> T {
        if self.count == 0 {
            return T::zero();
        }
        let total: T = self
            .nll
            .iter()
            .zip(&self.counted)
            .filter(|(_, &c)| c)
            .map(|(&l, _)| l)
            .sum();
        total / T::of(self.count as f64)
    }

    pub fn counted_positions(&self) -> usize {
        self.count
    }

    /// Per-example log-likelihood of counted gold tokens, in batch order.
    pub fn example_scores(&self) -> Vec<SequenceScore> {
        per_example(&self.tgt_segs, &self.nll, &self.counted)
    }
}

fn per_example<T: Float>(segs: &[Seg], nll: &[T], counted: &[bool]) -> Vec<SequenceScore> {
    segs.iter()
        .map(|s| {
            let rows = s.offset..s.offset + s.len;
            SequenceScore {
                log_likelihood: -nll[rows.clone()].iter().map(|x| x.as_f64()).sum::<f64>(),
                tokens: counted[rows].iter().filter(|&&c| c).count(),
            }
        })
        .collect()
}

fn embed<T: Float>(p: &ParameterStore<T>, tokens: &[u32], segs: &[Seg], pos_idx: usize) -> Vec<T> {
    let d = p.config().d_model;
    let e = p.data(p.layout.embed);
    let pos = p.data(pos_idx);
    let mut x = vec![T::zero(); tokens.len() * d];
    for s in segs {
        for i in 0..s.len {
            let r = s.offset + i;
            let tok = tokens[r] as usize;
            for j in 0..d {
                x[r * d + j] = e[tok * d + j] + pos[i * d + j];
            }
        }
    }
    x
}

fn embed_backward<T: Float>(
    p: &ParameterStore<T>,
    tokens: &[u32],
    segs: &[Seg],
    pos_idx: usize,
    dx: &[T],
    grads: &mut Gradients<T>,
) {
    let d = p.config().d_model;
    {
        let de = grads.get_mut(p.layout.embed);
        for (r, &tok) in tokens.iter().enumerate() {
            let tok = tok as usize;
            for j in 0..d {
                de[tok * d + j] += dx[r * d + j];
            }
        }
    }
    let dpos = grads.get_mut(pos_idx);
    for s in segs {
        for i in 0..s.len {
            let r = s.offset + i;
            for j in 0..d {
                dpos[i * d + j] += dx[r * d + j];
            }
        }
    }
}

type Encoded<T> = (Option<Vec<T>>, Vec<EncLayerCache<T>>, LnCache<T>);

fn encode<T: Float>(
    p: &ParameterStore<T>,
    src_tokens: &[u32],
    src_segs: &[Seg],
    mut rng: Option<&mut SeededRng>,
) -> Encoded<T> {
    let rate = p.config().dropout_rate;
    let layout = &p.layout;
    let mut x = embed(p, src_tokens, src_segs, layout.enc_pos);
    let enc_drop = dropout_mask(x.len(), rate, rng.as_deref_mut());
    apply_mask(&mut x, &enc_drop);
    let mut enc = Vec::with_capacity(layout.enc.len());
    for li in &layout.enc {
        let ln1 = layer_norm_params(p, li.ln1, &x);
        let (mut a, attn) = attention(p, li.attn, &ln1.y, src_segs, &ln1.y, src_segs, false);
        let drop1 = dropout_mask(a.len(), rate, rng.as_deref_mut());
        apply_mask(&mut a, &drop1);
        add_into(&mut x, &a);
        let ln2 = layer_norm_params(p, li.ln2, &x);
        let (mut f, ffn_c) = ffn(p, li.ffn, &ln2.y);
        let drop2 = dropout_mask(f.len(), rate, rng.as_deref_mut());
        apply_mask(&mut f, &drop2);
        add_into(&mut x, &f);
        enc.push(EncLayerCache {
            ln1,
            attn,
            drop1,
            ln2,
            ffn: ffn_c,
            drop2,
        });
    }
    let enc_ln = layer_norm_params(p, layout.enc_ln, &x);
    (enc_drop, enc, enc_ln)
}

/// Final encoder states (`src.len() x d_model`) without dropout.
pub(crate) fn encoder_states<T: Float>(p: &ParameterStore<T>, src: &[u32]) -> Vec<T> {
    encode(p, src, &segments([src.len()]), None).2.y
}

fn run<T: Float>(
    p: &ParameterStore<T>,
    batch: &[Seq2Seq],
    mut rng: Option<&mut SeededRng>,
) -> Result<(ForwardTrace<T>, Vec<T>), ModelError> {
    let cfg = p.config();
    for ex in batch {
        ex.validate(cfg)?;
    }
    let (d, v) = (cfg.d_model, cfg.vocab_size);
    let rate = cfg.dropout_rate;
    let layout = &p.layout;
    let src_segs = segments(batch.iter().map(|e| e.src.len()));
    let tgt_segs = segments(batch.iter().map(|e| e.dec_in.len()));
    let src_tokens: Vec<u32> = batch.iter().flat_map(|e| e.src.iter().copied()).collect();
    let tgt_tokens: Vec<u32> = batch.iter().flat_map(|e| e.dec_in.iter().copied()).collect();
    let gold: Vec<u32> = batch.iter().flat_map(|e| e.gold.iter().copied()).collect();
    let counted: Vec<bool> = batch.iter().flat_map(|e| e.counted.iter().copied()).collect();

    let (enc_drop, enc, enc_ln) = encode(p, &src_tokens, &src_segs, rng.as_deref_mut());

    let mut y = embed(p, &tgt_tokens, &tgt_segs, layout.dec_pos);
    let dec_drop = dropout_mask(y.len(), rate, rng.as_deref_mut());
    apply_mask(&mut y, &dec_drop);
    let mut dec = Vec::with_capacity(layout.dec.len());
    for li in &layout.dec {
        let ln1 = layer_norm_params(p, li.ln1, &y);
        let (mut a, self_attn) = attention(p, li.self_attn, &ln1.y, &tgt_segs, &ln1.y, &tgt_segs, true);
        let drop1 = dropout_mask(a.len(), rate, rng.as_deref_mut());
        apply_mask(&mut a, &drop1);
        add_into(&mut y, &a);
        let ln2 = layer_norm_params(p, li.ln2, &y);
        let (mut c, cross) = attention(p, li.cross, &ln2.y, &tgt_segs, &enc_ln.y, &src_segs, false);
        let drop2 = dropout_mask(c.len(), rate, rng.as_deref_mut());
        apply_mask(&mut c, &drop2);
        add_into(&mut y, &c);
        let ln3 = layer_norm_params(p, li.ln3, &y);
        let (mut f, ffn_c) = ffn(p, li.ffn, &ln3.y);
        let drop3 = dropout_mask(f.len(), rate, rng.as_deref_mut());
        apply_mask(&mut f, &drop3);
        add_into(&mut y, &f);
        dec.push(DecLayerCache {
            ln1,
            self_attn,
            drop1,
            ln2,
            cross,
            drop2,
            ln3,
            ffn: ffn_c,
            drop3,
        });
    }
    let dec_ln = layer_norm_params(p, layout.dec_ln, &y);
    let nt = tgt_tokens.len();
    let mut logits = vec![T::zero(); nt * v];
    gemm(
        View::new(&dec_ln.y, nt, d),
        View::new(p.data(layout.out), v, d).t(),
        &mut logits,
        v,
        T::one(),
        T::zero(),
    );
    let count = counted.iter().filter(|&&c| c).count();
    let trace = ForwardTrace {
        version: p.version(),
        src_segs,
        tgt_segs,
        src_tokens,
        tgt_tokens,
        enc_drop,
        enc,
        enc_ln,
        dec_drop,
        dec,
        dec_ln,
        probs: Vec::new(),
        gold,
        counted,
        count,
        nll: Vec::new(),
    };
    Ok((trace, logits))
}

/// Converts logits to probabilities in place and returns per-row `-log p(gold)`
/// (zero for rows that are not counted).
fn softmax_nll<T: Float>(logits: &mut [T], gold: &[u32], counted: &[bool], v: usize) -> Vec<T> {
    let mut nll = vec![T::zero(); gold.len()];
    for (r, row) in logits.chunks_mut(v).enumerate() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        if counted[r] {
            nll[r] = lse - row[gold[r] as usize];
        }
        for z in row.iter_mut() {
            *z = (*z - lse).exp();
        }
    }
    nll
}

/// Teacher-forced cross-entropy, averaged over counted gold positions of the
/// whole batch. Passing an rng enables dropout.
pub fn forward_loss<T: Float>(
    p: &ParameterStore<T>,
    batch: &[Seq2Seq],
    rng: Option<&mut SeededRng>,
) -> Result<(T, ForwardTrace<T>), ModelError> {
    let (mut trace, mut logits) = run(p, batch, rng)?;
    trace.nll = softmax_nll(&mut logits, &trace.gold, &trace.counted, p.config().vocab_size);
    trace.probs = logits;
    Ok((trace.loss(), trace))
}

/// Raw decoder logits (`dec_in.len() x vocab_size`, row-major) without dropout.
pub fn forward_logits<T: Float>(p: &ParameterStore<T>, src: &[u32], dec_in: &[u32]) -> Result<Vec<T>, ModelError> {
    let n = dec_in.len();
    let ex = Seq2Seq::raw(src.to_vec(), dec_in.to_vec(), vec![0; n], vec![false; n]);
    Ok(run(p, std::slice::from_ref(&ex), None)?.1)
}

/// Per-example log-likelihood of the counted gold tokens.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceScore {
    pub log_likelihood: f64,
    pub tokens: usize,
}

impl SequenceScore {
    pub fn normalized(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.log_likelihood / self.tokens as f64
        }
    }
}

/// Scores every example without dropout.
pub fn score<T: Float>(p: &ParameterStore<T>, batch: &[Seq2Seq]) -> Result<Vec<SequenceScore>, ModelError> {
    let (trace, mut logits) = run(p, batch, None)?;
    let nll = softmax_nll(&mut logits, &trace.gold, &trace.counted, p.config().vocab_size);
    Ok(per_example(&trace.tgt_segs, &nll, &trace.counted))
}

/// Accumulates `scale * d(loss)/d(params)` into `grads`.
pub fn backward<T: Float>(
    p: &ParameterStore<T>,
    trace: ForwardTrace<T>,
    scale: T,
    grads: &mut Gradients<T>,
) -> Result<(), ModelError> {
    if trace.version != p.version() {
        return Err(ModelError::StaleTrace);
    }
    if trace.count == 0 || scale == T::zero() {
        return Ok(());
    }
    let cfg = p.config();
    let (d, v) = (cfg.d_model, cfg.vocab_size);
    let layout = &p.layout;
    let nt = trace.tgt_tokens.len();
    let mut dlogits = trace.probs;
    let w = scale / T::of(trace.count as f64);
    for (r, row) in dlogits.chunks_mut(v).enumerate() {
        if trace.counted[r] {
            row[trace.gold[r] as usize] -= T::one();
            row.iter_mut().for_each(|z| *z *= w);
        } else {
            row.iter_mut().for_each(|z| *z = T::zero());
        }
    }
    gemm(
        View::new(&dlogits, nt, v).t(),
        View::new(&trace.dec_ln.y, nt, d),
        grads.get_mut(layout.out),
        d,
        T::one(),
        T::one(),
    );
    let mut dy_final = vec![T::zero(); nt * d];
    gemm(
        View::new(&dlogits, nt, v),
        View::new(p.data(layout.out), v, d),
        &mut dy_final,
        d,
        T::one(),
        T::zero(),
    );
    drop(dlogits);

    let mut dy = layer_norm_backward(p, layout.dec_ln, &trace.dec_ln, &dy_final, grads);
    let mut denc = vec![T::zero(); trace.enc_ln.y.len()];
    for (li, c) in layout.dec.iter().zip(&trace.dec).rev() {
        let mut df = dy.clone();
        apply_mask(&mut df, &c.drop3);
        let dln3 = ffn_backward(p, li.ffn, &c.ffn, &c.ln3.y, &df, grads);
        add_into(&mut dy, &layer_norm_backward(p, li.ln3, &c.ln3, &dln3, grads));

        let mut dc = dy.clone();
        apply_mask(&mut dc, &c.drop2);
        let (dq, dkv) = attention_backward(
            p,
            li.cross,
            &c.cross,
            &c.ln2.y,
            &trace.tgt_segs,
            &trace.enc_ln.y,
            &trace.src_segs,
            &dc,
            grads,
        );
        add_into(&mut denc, &dkv);
        add_into(&mut dy, &layer_norm_backward(p, li.ln2, &c.ln2, &dq, grads));

        let mut da = dy.clone();
        apply_mask(&mut da, &c.drop1);
        let (mut dq, dkv) = attention_backward(
            p,
            li.self_attn,
            &c.self_attn,
            &c.ln1.y,
            &trace.tgt_segs,
            &c.ln1.y,
            &trace.tgt_segs,
            &da,
            grads,
        );
        add_into(&mut dq, &dkv);
        add_into(&mut dy, &layer_norm_backward(p, li.ln1, &c.ln1, &dq, grads));
    }
    apply_mask(&mut dy, &trace.dec_drop);
    embed_backward(p, &trace.tgt_tokens, &trace.tgt_segs, layout.dec_pos, &dy, grads);

    let mut dx = layer_norm_backward(p, layout.enc_ln, &trace.enc_ln, &denc, grads);
    for (li, c) in layout.enc.iter().zip(&trace.enc).rev() {
        let mut df = dx.clone();
        apply_mask(&mut df, &c.drop2);
        let dln2 = ffn_backward(p, li.ffn, &c.ffn, &c.ln2.y, &df, grads);
        add_into(&mut dx, &layer_norm_backward(p, li.ln2, &c.ln2, &dln2, grads));

        let mut da = dx.clone();
        apply_mask(&mut da, &c.drop1);
        let (mut dq, dkv) = attention_backward(
            p,
            li.attn,
            &c.attn,
            &c.ln1.y,
            &trace.src_segs,
            &c.ln1.y,
            &trace.src_segs,
            &da,
            grads,
        );
        add_into(&mut dq, &dkv);
        add_into(&mut dx, &layer_norm_backward(p, li.ln1, &c.ln1, &dq, grads));
    }
    apply_mask(&mut dx, &trace.enc_drop);
    embed_backward(p, &trace.src_tokens, &trace.src_segs, layout.enc_pos, &dx, grads);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny(vocab: usize) -> ModelConfig {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            d_ffn: 16,
            max_seq_len: 10,
            vocab_size: vocab,
            dropout_rate: 0.0,
        }
    }

    /// Random store with larger weights than the default init, so every
    /// sublayer contributes visibly to the loss.
    fn rough(cfg: &ModelConfig, seed: u64) -> ParameterStore<f64> {
        let mut p = ParameterStore::<f64>::init(cfg, seed).unwrap();
        let mut rng = SeededRng::new(seed ^ 0xabc);
        for t in p.tensors_mut() {
            for x in &mut t.data {
                *x = if t.shape.len() == 1 { *x + 0.3 * rng.normal() } else { 0.4 * rng.normal() };
            }
        }
        p
    }

    fn batch() -> Vec<Seq2Seq> {
        vec![
            Seq2Seq::new(vec![4, 7, 9, 5], &[6, 8, 10]),
            Seq2Seq::new(vec![5, 11], &[9, 9, 4, 7, 3]),
            Seq2Seq::new(vec![8, 8, 6, 4, 10, 11], &[12]),
        ]
    }

    #[test]
    fn two_token_softmax_oracle() {
        let cfg = ModelConfig {
            d_model: 2,
            n_heads: 1,
            n_enc_layers: 1,
            n_dec_layers: 1,
            d_ffn: 2,
            max_seq_len: 4,
            vocab_size: 2,
            dropout_rate: 0.0,
        };
        let mut p = ParameterStore::<f64>::zeros(&cfg).unwrap();
        let l = p.layout.clone();
        // Zero final gain makes the last hidden state equal to the bias [1, 0],
        // so the logits are the first embedding column: [2, 0].
        p.tensors_mut()[l.embed].data = vec![2.0, 0.0, 0.0, 0.0];
        p.tensors_mut()[l.dec_ln.b].data = vec![1.0, 0.0];
        let ex = Seq2Seq::raw(vec![1], vec![1], vec![0], vec![true]);
        let (loss, _) = forward_loss(&p, &[ex], None).unwrap();
        let oracle = -(2.0f64.exp() / (2.0f64.exp() + 1.0)).ln();
        assert!((loss - oracle).abs() < 1e-9);
        assert!((loss - 0.1269).abs() < 1e-4);
    }

    #[test]
    fn fresh_model_loss_is_near_uniform() {
        let cfg = ModelConfig {
            vocab_size: 300,
            ..ModelConfig::default()
        };
        let p = ParameterStore::<f32>::init(&cfg, 1).unwrap();
        let (loss, _) = forward_loss(&p, &batch(), None).unwrap();
        let ln_v = (300f32).ln();
        assert!((loss - ln_v).abs() / ln_v < 0.05, "{loss} vs {ln_v}");
    }

    #[test]
    fn input_validation() {
        let p = ParameterStore::<f32>::init(&tiny(13), 0).unwrap();
        let bad = Seq2Seq::new(vec![4, 13], &[5]);
        assert!(matches!(
            forward_loss(&p, &[bad], None),
            Err(ModelError::TokenOutOfRange { id: 13, .. })
        ));
        let long = Seq2Seq::new(vec![4; 11], &[5]);
        assert!(matches!(
            forward_loss(&p, &[long], None),
            Err(ModelError::SequenceTooLong { len: 11, max: 10 })
        ));
        let long_tgt = Seq2Seq::new(vec![4], &[5; 10]);
        assert!(matches!(
            forward_loss(&p, &[long_tgt], None),
            Err(ModelError::SequenceTooLong { len: 11, .. })
        ));
    }

    #[test]
    fn fully_masked_batch_has_zero_loss_and_gradient() {
        let p = rough(&tiny(13), 3);
        let ex = Seq2Seq::raw(vec![4, 5], vec![1, 6], vec![6, 2], vec![false, false]);
        let (loss, trace) = forward_loss(&p, &[ex], None).unwrap();
        assert_eq!(loss, 0.0);
        let mut g = p.zeros_like();
        backward(&p, trace, 1.0, &mut g).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn stale_trace_is_rejected() {
        let mut p = rough(&tiny(13), 3);
        let (_, trace) = forward_loss(&p, &batch(), None).unwrap();
        let v = p.get_flat(0, 0);
        p.set_flat(0, 0, v);
        let mut g = p.zeros_like();
        assert!(matches!(backward(&p, trace, 1.0, &mut g), Err(ModelError::StaleTrace)));
    }

    fn loss_of(p: &ParameterStore<f64>, b: &[Seq2Seq]) -> f64 {
        forward_loss(p, b, None).unwrap().0
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = rough(&tiny(13), 7);
        let b = batch();
        let (_, trace) = forward_loss(&p, &b, None).unwrap();
        let mut g = p.zeros_like();
        backward(&p, trace, 1.0, &mut g).unwrap();
        let h = 1e-5;
        let mut q = p.clone();
        for (ti, t) in p.tensors().iter().enumerate() {
            for k in [0, t.numel() / 2, t.numel() - 1] {
                let x = p.get_flat(ti, k);
                q.set_flat(ti, k, x + h);
                let up = loss_of(&q, &b);
                q.set_flat(ti, k, x - h);
                let down = loss_of(&q, &b);
                q.set_flat(ti, k, x);
                let fd = (up - down) / (2.0 * h);
                let an = g.tensors[ti][k];
                let denom = an.abs().max(fd.abs()).max(1e-7);
                assert!((an - fd).abs() / denom < 1e-5, "{}[{k}]: {an} vs {fd}", t.name);
            }
        }
    }

    #[test]
    fn gradients_with_dropout_match_finite_differences() {
        let cfg = ModelConfig {
            dropout_rate: 0.25,
            ..tiny(13)
        };
        let p = rough(&cfg, 8);
        let b = batch();
        let run = |q: &ParameterStore<f64>| forward_loss(q, &b, Some(&mut SeededRng::new(42))).unwrap();
        let (_, trace) = run(&p);
        let mut g = p.zeros_like();
        backward(&p, trace, 1.0, &mut g).unwrap();
        let h = 1e-5;
        let mut q = p.clone();
        for (ti, t) in p.tensors().iter().enumerate() {
            let k = t.numel() / 3;
            let x = p.get_flat(ti, k);
            q.set_flat(ti, k, x + h);
            let up = run(&q).0;
            q.set_flat(ti, k, x - h);
            let down = run(&q).0;
            q.set_flat(ti, k, x);
            let fd = (up - down) / (2.0 * h);
            let an = g.tensors[ti][k];
            assert!((an - fd).abs() / an.abs().max(fd.abs()).max(1e-7) < 1e-5, "{}: {an} vs {fd}", t.name);
        }
    }

    #[test]
    fn overfits_one_pair() {
        let cfg = ModelConfig {
            vocab_size: 20,
            d_model: 32,
            n_heads: 4,
            d_ffn: 64,
            max_seq_len: 12,
            ..ModelConfig::default()
        };
        let mut p = ParameterStore::<f32>::init(&cfg, 4).unwrap();
        let ex = Seq2Seq::new(vec![5, 9, 11, 6], &[11, 6, 9, 5, 7]);
        let mut rng = SeededRng::new(0);
        let mut loss = f32::MAX;
        for _ in 0..500 {
            let (l, trace) = forward_loss(&p, std::slice::from_ref(&ex), Some(&mut rng)).unwrap();
            loss = l;
            let mut g = p.zeros_like();
            backward(&p, trace, 1.0, &mut g).unwrap();
            for (t, gt) in p.tensors_mut().iter_mut().zip(&g.tensors) {
                t.data.iter_mut().zip(gt).for_each(|(x, d)| *x -= 0.05 * d);
            }
        }
        let (eval, _) = forward_loss(&p, std::slice::from_ref(&ex), None).unwrap();
        assert!(eval < 0.01, "train {loss} eval {eval}");
        assert_eq!(crate::model::decode_greedy(&p, &ex.src, 8).unwrap(), vec![11, 6, 9, 5, 7]);
    }

    #[test]
    fn tied_gradient_is_sum_of_untied_contributions() {
        let p = rough(&tiny(13), 11);
        let u = p.untied();
        let b = batch();
        let (lt, tt) = forward_loss(&p, &b, None).unwrap();
        let (lu, tu) = forward_loss(&u, &b, None).unwrap();
        assert_eq!(lt, lu);
        let mut gt = p.zeros_like();
        backward(&p, tt, 1.0, &mut gt).unwrap();
        let mut gu = u.zeros_like();
        backward(&u, tu, 1.0, &mut gu).unwrap();
        let (e, o) = (u.layout.embed, u.layout.out);
        assert!(!gu.tensors[e].iter().all(|&x| x == 0.0));
        assert!(!gu.tensors[o].iter().all(|&x| x == 0.0));
        for (k, &tied) in gt.tensors[p.layout.embed].iter().enumerate() {
            let sum = gu.tensors[e][k] + gu.tensors[o][k];
            assert!((tied - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn decoder_is_causal() {
        let p = rough(&tiny(13), 5);
        let src = [4, 7, 9];
        let a = forward_logits(&p, &src, &[1, 5, 6, 7, 8]).unwrap();
        let b = forward_logits(&p, &src, &[1, 5, 6, 12, 3]).unwrap();
        let v = 13;
        assert_eq!(a[..3 * v], b[..3 * v]);
        assert_ne!(a[3 * v..], b[3 * v..]);
    }

    #[test]
    fn batch_order_does_not_change_mean_loss() {
        let p = rough(&tiny(13), 5);
        let mut b = batch();
        let l1 = loss_of(&p, &b);
        b.rotate_left(1);
        let l2 = loss_of(&p, &b);
        assert!((l1 - l2).abs() < 1e-12);
        let pf = p.cast::<f32>();
        let (m1, _) = forward_loss(&pf, &b, None).unwrap();
        b.reverse();
        let (m2, _) = forward_loss(&pf, &b, None).unwrap();
        assert!((m1 - m2).abs() < 1e-6);
    }

    #[test]
    fn dropout_off_is_deterministic_and_on_depends_on_rng() {
        let cfg = ModelConfig {
            dropout_rate: 0.3,
            ..tiny(13)
        };
        let p = rough(&cfg, 2);
        assert_eq!(loss_of(&p, &batch()), loss_of(&p, &batch()));
        let with = |seed| forward_loss(&p, &batch(), Some(&mut SeededRng::new(seed))).unwrap().0;
        assert_eq!(with(1), with(1));
        assert_ne!(with(1), with(2));
    }

    #[test]
    fn scores_match_loss() {
        let p = rough(&tiny(13), 9);
        let b = batch();
        let s = score(&p, &b).unwrap();
        let total: f64 = s.iter().map(|x| -x.log_likelihood).sum();
        let n: usize = s.iter().map(|x| x.tokens).sum();
        assert!((total / n as f64 - loss_of(&p, &b)).abs() < 1e-12);
        assert_eq!(s[0].tokens, 4);
    }
}

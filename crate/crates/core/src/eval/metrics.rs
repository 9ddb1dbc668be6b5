use std::collections::HashMap;

/// 1.0 when the sequences are identical, else 0.0.
pub fn exact_match<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> f64 {
    let same = hyp.len() == reference.len() && hyp.iter().zip(reference).all(|(a, b)| a.as_ref() == b.as_ref());
    if same {
        1.0
    } else {
        0.0
    }
}

fn counts<S: AsRef<str>>(tokens: &[S]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_ref()).or_insert(0) += 1;
    }
    m
}

/// F1 over token multisets. Two empty sequences score 1.0.
pub fn token_f1<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> f64 {
    if hyp.is_empty() && reference.is_empty() {
        return 1.0;
    }
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let h = counts(hyp);
    let r = counts(reference);
    let overlap: usize = h.iter().map(|(t, &c)| c.min(*r.get(t).unwrap_or(&0))).sum();
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / hyp.len() as f64;
    let rc = overlap as f64 / reference.len() as f64;
    2.0 * p * rc / (p + rc)
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    m
}

/// Smoothing for orders with no clipped matches.
pub const BLEU_EPSILON: f64 = 1e-9;

/// Sentence BLEU-4 against one or more references.
///
/// Each order's matches are clipped by the maximum count in any reference. An
/// order with no hypothesis n-grams (hypothesis shorter than n) is left out of
/// the geometric mean; an order with zero matches uses `BLEU_EPSILON` matches.
/// The brevity penalty uses the reference length closest to the hypothesis,
/// the shorter one on ties. An empty hypothesis scores 0.
pub fn bleu4<S: AsRef<str>>(hyp: &[S], refs: &[Vec<S>]) -> f64 {
    if hyp.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 1..=4 {
        let h = ngrams(hyp, n);
        let total: usize = h.values().sum();
        if total == 0 {
            continue;
        }
        let ref_grams: Vec<_> = refs.iter().map(|r| ngrams(r, n)).collect();
        let matched: usize = h
            .iter()
            .map(|(g, &c)| {
                let max_ref = ref_grams.iter().map(|m| *m.get(g).unwrap_or(&0)).max().unwrap_or(0);
                c.min(max_ref)
            })
            .sum();
        let m = if matched == 0 { BLEU_EPSILON } else { matched as f64 };
        log_sum += (m / total as f64).ln();
        orders += 1;
    }
    let c = hyp.len() as f64;
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| ((len as i64 - hyp.len() as i64).abs(), len))
        .unwrap_or(0) as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / orders as f64).exp()
}

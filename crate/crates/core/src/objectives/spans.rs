use super::{meta_for, Objective, Skip, TrainingExample};
use crate::concepts::{slot_categories, ConceptSet, SeededRng};
use crate::corpus::{sentinel, TaggedSentence, NUM_SENTINELS};

/// Replaces each masked span with a sentinel; target lists sentinel then span.
fn mask_spans(tokens: &[String], spans: &[(usize, usize)]) -> (Vec<String>, Vec<String>) {
    let mut source = Vec::new();
    let mut target = Vec::new();
    let mut cursor = 0;
    for (k, &(start, end)) in spans.iter().enumerate() {
        source.extend_from_slice(&tokens[cursor..start]);
        source.push(sentinel(k));
        target.push(sentinel(k));
        target.extend_from_slice(&tokens[start..end]);
        cursor = end;
    }
    source.extend_from_slice(&tokens[cursor..]);
    (source, target)
}

/// Concept span masking: every concept is masked; adjacent concepts of the same
/// category share one sentinel.
pub fn make_ssm(s: &TaggedSentence, c: &ConceptSet, rng: &mut SeededRng) -> Result<TrainingExample, Skip> {
    if c.is_empty() {
        return Err(Skip::NoConcepts);
    }
    let cats = slot_categories(s, c);
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for (i, cat) in cats.iter().enumerate() {
        let Some(cat) = cat else { continue };
        match spans.last_mut() {
            Some((_, end)) if *end == i && cats[i - 1] == Some(*cat) => *end = i + 1,
            _ => spans.push((i, i + 1)),
        }
    }
    if spans.len() > NUM_SENTINELS {
        return Err(Skip::TooShort);
    }
    let (body, target) = mask_spans(&s.tokens, &spans);
    Ok(TrainingExample::new(Objective::Ssm, body, target, meta_for(s, rng)))
}

/// Random split of `total` into `parts` positive lengths.
fn positive_composition(total: usize, parts: usize, rng: &mut SeededRng) -> Vec<usize> {
    debug_assert!(parts >= 1 && parts <= total);
    // Choose parts-1 distinct cut points from 1..total.
    let mut pool: Vec<usize> = (1..total).collect();
    for i in 0..parts - 1 {
        let j = i + rng.below(pool.len() - i);
        pool.swap(i, j);
    }
    let mut cuts: Vec<usize> = pool[..parts - 1].to_vec();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(total)) {
        out.push(c - prev);
        prev = c;
    }
    out
}

/// Random split of `total` into `parts` non-negative lengths.
fn nonnegative_composition(total: usize, parts: usize, rng: &mut SeededRng) -> Vec<usize> {
    positive_composition(total + parts, parts, rng)
        .into_iter()
        .map(|x| x - 1)
        .collect()
}

/// Random-span infilling with sentinel-delimited targets.
///
/// The masked-token count is `rate * n` with stochastic rounding (at least one
/// token once `rate > 0`); the span count is the masked count over
/// `mean_span`, rounded.
pub fn make_infill(
    s: &TaggedSentence,
    rng: &mut SeededRng,
    corrupt_rate: f64,
    mean_span: f64,
) -> Result<TrainingExample, Skip> {
    let n = s.len();
    if n < 2 {
        return Err(Skip::TooShort);
    }
    if corrupt_rate <= 0.0 {
        return Err(Skip::NothingMasked);
    }
    let meta = meta_for(s, rng);
    let expected = corrupt_rate.min(1.0) * n as f64;
    let mut noise = expected.floor() as usize;
    if rng.unit() < expected - expected.floor() {
        noise += 1;
    }
    let noise = noise.clamp(1, n);
    let clean = n - noise;
    let wanted = (noise as f64 / mean_span.max(1.0)).round().max(1.0) as usize;
    // Interior clean gaps need at least one token each.
    let spans = wanted.min(noise).min(clean + 1).min(NUM_SENTINELS);
    let noise_lengths = positive_composition(noise, spans, rng);
    let mut clean_lengths = nonnegative_composition(clean - (spans - 1), spans + 1, rng);
    for gap in clean_lengths.iter_mut().take(spans).skip(1) {
        *gap += 1;
    }
    let mut intervals = Vec::with_capacity(spans);
    let mut cursor = 0;
    for k in 0..spans {
        cursor += clean_lengths[k];
        intervals.push((cursor, cursor + noise_lengths[k]));
        cursor += noise_lengths[k];
    }
    debug_assert_eq!(cursor + clean_lengths[spans], n);
    let (body, target) = mask_spans(&s.tokens, &intervals);
    Ok(TrainingExample::new(Objective::Infill, body, target, meta))
}

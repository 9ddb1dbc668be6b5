//! Generation metrics, discriminator accuracy and the concept-order probe.

mod metrics;
mod world;

pub use metrics::{bleu4, exact_match, token_f1, BLEU_EPSILON};
pub use world::{build_synthetic_world, build_synthetic_world_with, Split, SyntheticWorld, Triple, WorldError};

use crate::concepts::{concept_permute, extract_concepts, ConceptClasses, SeededRng};
use crate::corpus::{TaggedSentence, Vocabulary};
use crate::model::{decode_greedy, default_max_len, score, Float, ModelError, ParameterStore, Seq2Seq};
use crate::objectives::{Objective, TrainingExample};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Averages of the generation metrics over a set of examples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationScores {
    pub n: usize,
    pub exact_match: f64,
    pub token_f1: f64,
    pub bleu4: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorScores {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Examples not in generative-QA layout.
    pub skipped: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeScores {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Sentences whose concepts admit no non-identity permutation.
    pub skipped: usize,
}

/// Metrics of one evaluation run. Absent metrics were not requested.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub exact_match: Option<f64>,
    pub token_f1: Option<f64>,
    pub bleu4: Option<f64>,
    pub discriminator_accuracy: Option<f64>,
    pub cor_correction_accuracy: Option<f64>,
    /// Breakdowns keyed by objective name or world split.
    pub generation: BTreeMap<String, GenerationScores>,
    pub discriminator: Option<DiscriminatorScores>,
    pub probe: BTreeMap<String, ProbeScores>,
}

fn fraction(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Decodes each source (at most `ceil(1.2 * |target|)` tokens) and scores the
/// output against the target.
pub fn eval_generation<T: Float>(
    params: &ParameterStore<T>,
    examples: &[TrainingExample],
    vocab: &Vocabulary,
) -> Result<GenerationScores, ModelError> {
    let outputs: Vec<Vec<String>> = examples
        .par_iter()
        .map(|ex| {
            let src = vocab.encode(&ex.source);
            decode_greedy(params, &src, default_max_len(ex.target.len())).map(|ids| vocab.decode(&ids))
        })
        .collect::<Result<_, _>>()?;
    let n = examples.len();
    let mut s = GenerationScores {
        n,
        ..GenerationScores::default()
    };
    for (ex, out) in examples.iter().zip(&outputs) {
        s.exact_match += exact_match(out, &ex.target);
        s.token_f1 += token_f1(out, &ex.target);
        s.bleu4 += bleu4(out, std::slice::from_ref(&ex.target));
    }
    if n > 0 {
        s.exact_match /= n as f64;
        s.token_f1 /= n as f64;
        s.bleu4 /= n as f64;
    }
    Ok(s)
}

/// Real and distractor candidates of a generative-QA example.
fn real_and_distractor(ex: &TrainingExample) -> Option<(Vec<String>, Vec<String>)> {
    if ex.objective != Objective::ContGenqa {
        return None;
    }
    let (a, b) = ex.candidates()?;
    if a == ex.target {
        Some((a, b))
    } else if b == ex.target {
        Some((b, a))
    } else {
        None
    }
}

fn source_for(first: &[String], second: &[String]) -> Vec<String> {
    let mut s = vec![Objective::ContGenqa.prefix().to_string()];
    s.extend_from_slice(first);
    s.push(crate::corpus::SEP.to_string());
    s.extend_from_slice(second);
    s
}

/// Discriminator accuracy by likelihood comparison.
///
/// Each candidate's score is its length-normalised log-likelihood as the
/// target, summed over both presentation orders of the pair, so the result
/// does not depend on which order the example was stored in. The real
/// sentence must score strictly higher to count as correct.
pub fn eval_discriminator<T: Float>(
    params: &ParameterStore<T>,
    examples: &[TrainingExample],
    vocab: &Vocabulary,
) -> Result<DiscriminatorScores, ModelError> {
    let pairs: Vec<_> = examples.iter().filter_map(real_and_distractor).collect();
    let skipped = examples.len() - pairs.len();
    let verdicts: Vec<bool> = pairs
        .par_iter()
        .map(|(real, fake)| {
            let ab = vocab.encode(&source_for(real, fake));
            let ba = vocab.encode(&source_for(fake, real));
            let (r, f) = (vocab.encode(real), vocab.encode(fake));
            let batch = vec![
                Seq2Seq::new(ab.clone(), &r),
                Seq2Seq::new(ba.clone(), &r),
                Seq2Seq::new(ab, &f),
                Seq2Seq::new(ba, &f),
            ];
            let s = score(params, &batch)?;
            let real_score = s[0].normalized() + s[1].normalized();
            let fake_score = s[2].normalized() + s[3].normalized();
            Ok(real_score > fake_score)
        })
        .collect::<Result<_, ModelError>>()?;
    let correct = verdicts.iter().filter(|&&v| v).count();
    Ok(DiscriminatorScores {
        n: pairs.len(),
        correct,
        accuracy: fraction(correct, pairs.len()),
        skipped,
    })
}

/// Concept-order recovery on sentences: permute concepts, decode greedily
/// from the order-recovery prefix and count exact reconstructions.
pub fn eval_cor_probe<T: Float>(
    params: &ParameterStore<T>,
    sentences: &[TaggedSentence],
    vocab: &Vocabulary,
    seed: u64,
) -> Result<ProbeScores, ModelError> {
    let results: Vec<Option<bool>> = sentences
        .par_iter()
        .map(|s| {
            let concepts = extract_concepts(s, ConceptClasses::Both);
            let mut rng = SeededRng::for_sentence(seed, s.source_id(), s.index()).child("probe");
            let Ok(permuted) = concept_permute(s, &concepts, &mut rng) else {
                return Ok(None);
            };
            let mut src = vec![Objective::Cor.prefix().to_string()];
            src.extend(permuted.tokens);
            let ids = decode_greedy(params, &vocab.encode(&src), default_max_len(s.len()))?;
            Ok(Some(ids == vocab.encode(&s.tokens)))
        })
        .collect::<Result<_, ModelError>>()?;
    let n = results.iter().flatten().count();
    let correct = results.iter().flatten().filter(|&&c| c).count();
    Ok(ProbeScores {
        n,
        correct,
        accuracy: fraction(correct, n),
        skipped: results.len() - n,
    })
}

/// Order-recovery probe on one split of a synthetic world.
pub fn eval_world_probe<T: Float>(
    params: &ParameterStore<T>,
    world: &SyntheticWorld,
    split: Split,
    vocab: &Vocabulary,
) -> Result<ProbeScores, ModelError> {
    eval_cor_probe(params, &world.sentences(split), vocab, world.seed)
}

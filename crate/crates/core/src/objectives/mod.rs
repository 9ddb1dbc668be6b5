//! Training-example builders for every corruption objective.
//!
//! Each builder turns one tagged sentence into a `(prefix ++ source, target)`
//! pair or reports why the sentence cannot serve that objective.

mod jsonl;
mod spans;

pub use jsonl::{read_jsonl, write_jsonl, JsonlRead};
pub use spans::{make_infill, make_ssm};

use crate::concepts::{
    concept_permute, extract_concepts, permute, ConceptClasses, ConceptSet, Lemmatizer, SeededRng,
};
use crate::corpus::{is_sentinel, TaggedSentence, SEP};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "C2S")]
    C2s,
    #[serde(rename = "COR")]
    Cor,
    #[serde(rename = "CONT_GENQA")]
    ContGenqa,
    #[serde(rename = "CONT_MC")]
    ContMc,
    #[serde(rename = "CONT_TF")]
    ContTf,
    #[serde(rename = "SSM")]
    Ssm,
    #[serde(rename = "INFILL")]
    Infill,
}

impl Objective {
    pub const ALL: [Objective; 7] = [
        Objective::C2s,
        Objective::Cor,
        Objective::ContGenqa,
        Objective::ContMc,
        Objective::ContTf,
        Objective::Ssm,
        Objective::Infill,
    ];

    /// The reserved prefix token; one distinct token per objective.
    pub fn prefix(self) -> &'static str {
        match self {
            Objective::C2s => "<c2s>",
            Objective::Cor => "<cor>",
            Objective::ContGenqa => "<cont>",
            Objective::ContMc => "<mc>",
            Objective::ContTf => "<tf>",
            Objective::Ssm => "<ssm>",
            Objective::Infill => "<infill>",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.prefix() == prefix)
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::C2s => "C2S",
            Objective::Cor => "COR",
            Objective::ContGenqa => "CONT_GENQA",
            Objective::ContMc => "CONT_MC",
            Objective::ContTf => "CONT_TF",
            Objective::Ssm => "SSM",
            Objective::Infill => "INFILL",
        }
    }

    pub fn is_contrastive(self) -> bool {
        matches!(self, Objective::ContGenqa | Objective::ContMc | Objective::ContTf)
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Layout of contrastive examples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContFormat {
    #[default]
    Genqa,
    Mc,
    Tf,
}

impl ContFormat {
    pub fn objective(self) -> Objective {
        match self {
            ContFormat::Genqa => Objective::ContGenqa,
            ContFormat::Mc => Objective::ContMc,
            ContFormat::Tf => Objective::ContTf,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "genqa" => Some(Self::Genqa),
            "mc" => Some(Self::Mc),
            "tf" => Some(Self::Tf),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistractorOrigin {
    Shuffle,
    Generator,
    None,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub source_id: String,
    pub index: u64,
    pub seed: u64,
    pub distractor_origin: DistractorOrigin,
    /// 1 or 2: where the real sentence sits in a two-candidate source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_position: Option<u8>,
}

impl ExampleMeta {
    pub fn new(source_id: &str, index: u64, seed: u64) -> Self {
        Self {
            source_id: source_id.to_string(),
            index,
            seed,
            distractor_origin: DistractorOrigin::None,
            real_position: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub objective: Objective,
    pub prefix: String,
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub meta: ExampleMeta,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum InvalidExample {
    #[error("prefix {prefix:?} does not match objective {objective}")]
    PrefixMismatch { objective: Objective, prefix: String },
    #[error("source does not begin with the prefix token")]
    SourceWithoutPrefix,
    #[error("empty target")]
    EmptyTarget,
    #[error("contrastive source is missing its separator")]
    MissingSeparator,
}

impl TrainingExample {
    pub fn new(objective: Objective, body: Vec<String>, target: Vec<String>, meta: ExampleMeta) -> Self {
        let mut source = Vec::with_capacity(body.len() + 1);
        source.push(objective.prefix().to_string());
        source.extend(body);
        Self {
            objective,
            prefix: objective.prefix().to_string(),
            source,
            target,
            meta,
        }
    }

    /// Source tokens after the prefix.
    pub fn body(&self) -> &[String] {
        &self.source[1.min(self.source.len())..]
    }

    pub fn validate(&self) -> Result<(), InvalidExample> {
        if self.prefix != self.objective.prefix() {
            return Err(InvalidExample::PrefixMismatch {
                objective: self.objective,
                prefix: self.prefix.clone(),
            });
        }
        if self.source.first() != Some(&self.prefix) {
            return Err(InvalidExample::SourceWithoutPrefix);
        }
        if self.target.is_empty() {
            return Err(InvalidExample::EmptyTarget);
        }
        if matches!(self.objective, Objective::ContGenqa | Objective::ContMc)
            && !self.source.iter().any(|t| t == SEP)
        {
            return Err(InvalidExample::MissingSeparator);
        }
        Ok(())
    }

    /// The two candidates of a GENQA/MC source, in presentation order.
    pub fn candidates(&self) -> Option<(Vec<String>, Vec<String>)> {
        let body = self.body();
        let sep = body.iter().position(|t| t == SEP)?;
        let strip = |xs: &[String], marker: &str| -> Vec<String> {
            match xs.first() {
                Some(m) if self.objective == Objective::ContMc && m == marker => xs[1..].to_vec(),
                _ => xs.to_vec(),
            }
        };
        Some((strip(&body[..sep], "1:"), strip(&body[sep + 1..], "2:")))
    }
}

/// Why a sentence produced no example for an objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum Skip {
    #[error("too few concepts")]
    TooFewConcepts,
    #[error("concepts cannot be permuted")]
    NotPermutable,
    #[error("distractor equals the real sentence")]
    IdenticalPair,
    #[error("no concepts")]
    NoConcepts,
    #[error("nothing masked")]
    NothingMasked,
    #[error("sentence too short")]
    TooShort,
}

impl Skip {
    pub fn key(self) -> &'static str {
        match self {
            Skip::TooFewConcepts => "too_few_concepts",
            Skip::NotPermutable => "not_permutable",
            Skip::IdenticalPair => "identical_pair",
            Skip::NoConcepts => "no_concepts",
            Skip::NothingMasked => "nothing_masked",
            Skip::TooShort => "too_short",
        }
    }
}

/// A sentence-shaped alternative to the real sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Distractor {
    pub tokens: Vec<String>,
    pub origin: DistractorOrigin,
}

fn meta_for(s: &TaggedSentence, rng: &SeededRng) -> ExampleMeta {
    ExampleMeta::new(s.source_id(), s.index(), rng.seed())
}

/// Concept-to-sentence: shuffled (deduplicated, optionally lemmatized) concepts in,
/// full sentence out.
pub fn make_c2s(
    s: &TaggedSentence,
    c: &ConceptSet,
    rng: &mut SeededRng,
    lemmatizer: Option<&Lemmatizer>,
    min_concepts: usize,
) -> Result<TrainingExample, Skip> {
    let concepts = c.dedup_tokens(lemmatizer);
    if concepts.len() < min_concepts.max(2) {
        return Err(Skip::TooFewConcepts);
    }
    let meta = meta_for(s, rng);
    let body = permute(&concepts, rng, false);
    Ok(TrainingExample::new(Objective::C2s, body, s.tokens.clone(), meta))
}

/// Concept-order recovery: the concept-permuted sentence in, original out.
pub fn make_cor(s: &TaggedSentence, c: &ConceptSet, rng: &mut SeededRng) -> Result<TrainingExample, Skip> {
    let meta = meta_for(s, rng);
    let permuted = concept_permute(s, c, rng).map_err(|_| Skip::NotPermutable)?;
    Ok(TrainingExample::new(Objective::Cor, permuted.tokens, s.tokens.clone(), meta))
}

/// Builds a contrastive example from the real tokens and a distractor.
pub fn contrastive_from_tokens(
    real: &[String],
    d: &Distractor,
    rng: &mut SeededRng,
    format: ContFormat,
    mut meta: ExampleMeta,
) -> Result<TrainingExample, Skip> {
    if d.tokens == real {
        return Err(Skip::IdenticalPair);
    }
    meta.distractor_origin = d.origin;
    let real_first = rng.coin();
    let (first, second) = if real_first {
        (real, d.tokens.as_slice())
    } else {
        (d.tokens.as_slice(), real)
    };
    let position = if real_first { 1 } else { 2 };
    let ex = match format {
        ContFormat::Genqa => {
            meta.real_position = Some(position);
            let mut body = first.to_vec();
            body.push(SEP.to_string());
            body.extend_from_slice(second);
            TrainingExample::new(Objective::ContGenqa, body, real.to_vec(), meta)
        }
        ContFormat::Mc => {
            meta.real_position = Some(position);
            let mut body = vec!["1:".to_string()];
            body.extend_from_slice(first);
            body.push(SEP.to_string());
            body.push("2:".to_string());
            body.extend_from_slice(second);
            TrainingExample::new(Objective::ContMc, body, vec![position.to_string()], meta)
        }
        ContFormat::Tf => {
            // Reuse the coin: real sentence shown iff it would have come first.
            let (shown, label) = if real_first { (real, "true") } else { (d.tokens.as_slice(), "false") };
            TrainingExample::new(Objective::ContTf, shown.to_vec(), vec![label.to_string()], meta)
        }
    };
    Ok(ex)
}

/// Contrastive example for a tagged sentence.
pub fn make_contrastive(
    s: &TaggedSentence,
    d: &Distractor,
    rng: &mut SeededRng,
    format: ContFormat,
) -> Result<TrainingExample, Skip> {
    let meta = meta_for(s, rng);
    contrastive_from_tokens(&s.tokens, d, rng, format, meta)
}

/// Objectives selectable for corpus corruption.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    C2s,
    Cor,
    Cont,
    Ssm,
    Infill,
}

impl ObjectiveKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "c2s" => Some(Self::C2s),
            "cor" => Some(Self::Cor),
            "cont" => Some(Self::Cont),
            "ssm" => Some(Self::Ssm),
            "infill" => Some(Self::Infill),
            _ => None,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::C2s => "c2s",
            Self::Cor => "cor",
            Self::Cont => "cont",
            Self::Ssm => "ssm",
            Self::Infill => "infill",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptConfig {
    pub objectives: Vec<ObjectiveKind>,
    pub concept_classes: ConceptClasses,
    pub cont_format: ContFormat,
    pub min_concepts: usize,
    pub lemmatize: bool,
    pub infill_rate: f64,
    pub infill_mean_span: f64,
}

impl Default for CorruptConfig {
    fn default() -> Self {
        Self {
            objectives: vec![ObjectiveKind::C2s, ObjectiveKind::Cor, ObjectiveKind::Cont],
            concept_classes: ConceptClasses::Both,
            cont_format: ContFormat::Genqa,
            min_concepts: 2,
            lemmatize: true,
            infill_rate: 0.15,
            infill_mean_span: 3.0,
        }
    }
}

/// Builds every configured example for one sentence, in objective order.
///
/// Randomness comes from streams derived from `(global_seed, source_id, index)`
/// and the objective name, so each objective is independent of which others run.
pub fn corrupt_sentence(
    s: &TaggedSentence,
    cfg: &CorruptConfig,
    global_seed: u64,
    lemmatizer: &Lemmatizer,
) -> Vec<Result<TrainingExample, (Objective, Skip)>> {
    let base = SeededRng::for_sentence(global_seed, s.source_id(), s.index());
    let concepts = extract_concepts(s, cfg.concept_classes);
    let lemmatizer = cfg.lemmatize.then_some(lemmatizer);
    let mut kinds = cfg.objectives.clone();
    kinds.sort();
    kinds.dedup();
    kinds
        .into_iter()
        .map(|kind| {
            let mut rng = base.child(kind.label());
            match kind {
                ObjectiveKind::C2s => make_c2s(s, &concepts, &mut rng, lemmatizer, cfg.min_concepts)
                    .map_err(|e| (Objective::C2s, e)),
                ObjectiveKind::Cor => make_cor(s, &concepts, &mut rng).map_err(|e| (Objective::Cor, e)),
                ObjectiveKind::Cont => {
                    let objective = cfg.cont_format.objective();
                    let mut drng = base.child("cont.distractor");
                    let permuted =
                        concept_permute(s, &concepts, &mut drng).map_err(|_| (objective, Skip::NotPermutable))?;
                    let d = Distractor {
                        tokens: permuted.tokens,
                        origin: DistractorOrigin::Shuffle,
                    };
                    make_contrastive(s, &d, &mut rng, cfg.cont_format).map_err(|e| (objective, e))
                }
                ObjectiveKind::Ssm => make_ssm(s, &concepts, &mut rng).map_err(|e| (Objective::Ssm, e)),
                ObjectiveKind::Infill => make_infill(s, &mut rng, cfg.infill_rate, cfg.infill_mean_span)
                    .map_err(|e| (Objective::Infill, e)),
            }
        })
        .collect()
}

/// Examples for a corpus plus per-objective skip counts (`"C2S:too_few_concepts"` keys).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corrupted {
    pub examples: Vec<TrainingExample>,
    pub skipped: BTreeMap<String, u64>,
}

/// Corrupts every sentence on `workers` threads. Output is sorted by
/// `(source_id, index)` and then objective, so it does not depend on `workers`.
pub fn corrupt_corpus(
    sentences: &[TaggedSentence],
    cfg: &CorruptConfig,
    global_seed: u64,
    lemmatizer: &Lemmatizer,
    workers: usize,
) -> Result<Corrupted, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let per_sentence: Vec<_> = pool.install(|| {
        sentences
            .par_iter()
            .map(|s| corrupt_sentence(s, cfg, global_seed, lemmatizer))
            .collect()
    });
    let mut out = Corrupted::default();
    for results in per_sentence {
        for r in results {
            match r {
                Ok(ex) => out.examples.push(ex),
                Err((objective, skip)) => {
                    *out.skipped.entry(format!("{objective}:{}", skip.key())).or_default() += 1;
                }
            }
        }
    }
    out.examples.sort_by(|a, b| {
        (&a.meta.source_id, a.meta.index, a.objective).cmp(&(&b.meta.source_id, b.meta.index, b.objective))
    });
    Ok(out)
}

/// Counts sentinel tokens in a source.
pub fn sentinel_count(tokens: &[String]) -> usize {
    tokens.iter().filter(|t| is_sentinel(t)).count()
}

use crate::corpus::Vocabulary;
use crate::model::{ModelConfig, Seq2Seq};
use crate::objectives::{contrastive_from_tokens, ContFormat, Distractor, DistractorOrigin, Objective, TrainingExample};
use crate::concepts::SeededRng;
use std::collections::BTreeMap;

/// The C2S and COR examples of one sentence, for the joint stage.
#[derive(Clone, Debug, PartialEq)]
pub struct JointGroup {
    pub c2s: usize,
    pub cor: usize,
    pub gold: Vec<String>,
    pub gold_ids: Vec<u32>,
    /// Concept-shuffled sentence used when a generated distractor is unusable.
    pub shuffle: Vec<String>,
}

/// Encoded training examples indexed by objective.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub model: ModelConfig,
    pub examples: Vec<TrainingExample>,
    pub encoded: Vec<Seq2Seq>,
    pub by_objective: BTreeMap<Objective, Vec<usize>>,
    pub groups: Vec<JointGroup>,
    /// Examples left out because they do not fit the model.
    pub dropped: usize,
}

pub(crate) fn encode_example(ex: &TrainingExample, vocab: &Vocabulary) -> Seq2Seq {
    Seq2Seq::new(vocab.encode(&ex.source), &vocab.encode(&ex.target))
}

impl Dataset {
    /// Encodes `examples`, dropping those that exceed `model.max_seq_len`.
    /// Joint groups additionally require a shuffle-distractor contrastive
    /// example in `cont_format` to fit.
    pub fn new(examples: Vec<TrainingExample>, vocab: &Vocabulary, model: &ModelConfig, cont_format: ContFormat) -> Self {
        let mut kept = Vec::with_capacity(examples.len());
        let mut encoded = Vec::with_capacity(examples.len());
        let mut dropped = 0;
        for ex in examples {
            let seq = encode_example(&ex, vocab);
            if seq.validate(model).is_ok() {
                kept.push(ex);
                encoded.push(seq);
            } else {
                dropped += 1;
            }
        }
        let mut by_objective: BTreeMap<Objective, Vec<usize>> = BTreeMap::new();
        for (i, ex) in kept.iter().enumerate() {
            by_objective.entry(ex.objective).or_default().push(i);
        }
        let mut pairs: BTreeMap<(String, u64), (Option<usize>, Option<usize>)> = BTreeMap::new();
        for (i, ex) in kept.iter().enumerate() {
            let key = (ex.meta.source_id.clone(), ex.meta.index);
            match ex.objective {
                Objective::C2s => pairs.entry(key).or_default().0 = Some(i),
                Objective::Cor => pairs.entry(key).or_default().1 = Some(i),
                _ => {}
            }
        }
        let mut groups = Vec::new();
        for (c2s, cor) in pairs.into_values() {
            let (Some(c2s), Some(cor)) = (c2s, cor) else { continue };
            let gold = kept[c2s].target.clone();
            let shuffle = kept[cor].body().to_vec();
            let probe = contrastive_from_tokens(
                &gold,
                &Distractor {
                    tokens: shuffle.clone(),
                    origin: DistractorOrigin::Shuffle,
                },
                &mut SeededRng::new(0),
                cont_format,
                kept[cor].meta.clone(),
            );
            let fits = probe.is_ok_and(|ex| encode_example(&ex, vocab).validate(model).is_ok());
            if fits {
                groups.push(JointGroup {
                    c2s,
                    cor,
                    gold_ids: vocab.encode(&gold),
                    gold,
                    shuffle,
                });
            }
        }
        Self {
            vocab: vocab.clone(),
            model: model.clone(),
            examples: kept,
            encoded,
            by_objective,
            groups,
            dropped,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, objective: Objective) -> usize {
        self.by_objective.get(&objective).map_or(0, Vec::len)
    }

    /// Examples of one objective, in dataset order.
    pub fn of(&self, objective: Objective) -> impl Iterator<Item = (&TrainingExample, &Seq2Seq)> {
        self.by_objective
            .get(&objective)
            .into_iter()
            .flatten()
            .map(|&i| (&self.examples[i], &self.encoded[i]))
    }

    /// Objectives present in the data.
    pub fn objectives(&self) -> Vec<Objective> {
        self.by_objective.keys().copied().collect()
    }
}

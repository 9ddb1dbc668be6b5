use crate::concepts::{permute, SeededRng};
use crate::corpus::{detokenize, write_tagged_jsonl, LexiconTagger, PosTag, RawSentence, TaggedSentence};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

const PREPOSITIONS: &[&str] = &["on", "in", "with", "near", "under", "over", "from", "to"];
const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v", "z", "br", "gl", "tr"];
const VOWELS: &[&str] = &["a", "e", "o"];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("a world needs at least 2 nouns and 1 verb")]
    TooSmall,
    #[error("requested {requested} triples but the vocabulary supports only {capacity}")]
    OverCapacity { requested: usize, capacity: usize },
    #[error("holdout fraction must lie in [0, 1)")]
    BadHoldout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: usize,
    pub verb: usize,
    pub object: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    HeldOut,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::HeldOut => "held_out",
        }
    }
}

/// A relational corpus with known structure: nouns fall into classes, and each
/// verb links a subject class to a different object class. Every triple is
/// realised by one template, `subject verb preposition the object`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub nouns: Vec<String>,
    pub verbs: Vec<String>,
    pub noun_class: Vec<usize>,
    /// (subject class, object class) per verb.
    pub verb_roles: Vec<(usize, usize)>,
    pub prepositions: Vec<String>,
    pub triples: Vec<Triple>,
    pub train: Vec<usize>,
    pub held_out: Vec<usize>,
}

fn pseudo_words(n: usize, rng: &mut SeededRng, taken: &mut HashSet<String>, lexicon: &LexiconTagger) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = 2 + rng.below(2);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.below(ONSETS.len())]);
            w.push_str(VOWELS[rng.below(VOWELS.len())]);
        }
        if !lexicon.contains(&w) && !lexicon.contains(&format!("{w}s")) && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Builds a world with the default 20% held-out fraction.
pub fn build_synthetic_world(n_nouns: usize, n_verbs: usize, n_triples: usize, seed: u64) -> Result<SyntheticWorld, WorldError> {
    build_synthetic_world_with(n_nouns, n_verbs, n_triples, 0.2, seed)
}

/// Builds a world whose held-out split holds `floor(holdout * n_triples)`
/// triples (fewer if the coverage rule runs out of candidates). Every noun
/// and verb of a held-out triple also occurs in some training triple.
pub fn build_synthetic_world_with(
    n_nouns: usize,
    n_verbs: usize,
    n_triples: usize,
    holdout: f64,
    seed: u64,
) -> Result<SyntheticWorld, WorldError> {
    if n_nouns < 2 || n_verbs < 1 {
        return Err(WorldError::TooSmall);
    }
    if !(0.0..1.0).contains(&holdout) {
        return Err(WorldError::BadHoldout);
    }
    let mut rng = SeededRng::new(seed);
    let lexicon = LexiconTagger::bundled();
    let mut taken = HashSet::new();
    let nouns = pseudo_words(n_nouns, &mut rng, &mut taken, &lexicon);
    let verbs: Vec<String> = pseudo_words(n_verbs, &mut rng, &mut taken, &lexicon)
        .into_iter()
        .map(|w| format!("{w}s"))
        .collect();
    let n_classes = n_nouns.min(4);
    let noun_class: Vec<usize> = (0..n_nouns).map(|i| i % n_classes).collect();
    let verb_roles: Vec<(usize, usize)> = (0..n_verbs)
        .map(|v| {
            if v == 0 {
                return (0, 1);
            }
            let s = rng.below(n_classes);
            let o = (s + 1 + rng.below(n_classes - 1)) % n_classes;
            (s, o)
        })
        .collect();
    let prepositions: Vec<String> = (0..n_verbs)
        .map(|v| PREPOSITIONS[v % PREPOSITIONS.len()].to_string())
        .collect();
    let mut all = Vec::new();
    for (v, &(sc, oc)) in verb_roles.iter().enumerate() {
        for s in (0..n_nouns).filter(|&s| noun_class[s] == sc) {
            for o in (0..n_nouns).filter(|&o| noun_class[o] == oc) {
                all.push(Triple {
                    subject: s,
                    verb: v,
                    object: o,
                });
            }
        }
    }
    if n_triples > all.len() {
        return Err(WorldError::OverCapacity {
            requested: n_triples,
            capacity: all.len(),
        });
    }
    let mut triples = permute(&all, &mut rng, false);
    triples.truncate(n_triples);
    triples.sort();

    let want = (holdout * n_triples as f64).floor() as usize;
    let mut noun_uses: BTreeMap<usize, usize> = BTreeMap::new();
    let mut verb_uses: BTreeMap<usize, usize> = BTreeMap::new();
    for t in &triples {
        *noun_uses.entry(t.subject).or_default() += 1;
        *noun_uses.entry(t.object).or_default() += 1;
        *verb_uses.entry(t.verb).or_default() += 1;
    }
    let order: Vec<usize> = permute(&(0..triples.len()).collect::<Vec<_>>(), &mut rng, false);
    let mut held: BTreeSet<usize> = BTreeSet::new();
    for i in order {
        if held.len() == want {
            break;
        }
        let t = triples[i];
        let subject_ok = noun_uses[&t.subject] > 1;
        let object_ok = noun_uses[&t.object] > 1;
        if subject_ok && object_ok && verb_uses[&t.verb] > 1 {
            *noun_uses.get_mut(&t.subject).unwrap() -= 1;
            *noun_uses.get_mut(&t.object).unwrap() -= 1;
            *verb_uses.get_mut(&t.verb).unwrap() -= 1;
            held.insert(i);
        }
    }
    let train = (0..triples.len()).filter(|i| !held.contains(i)).collect();
    Ok(SyntheticWorld {
        seed,
        nouns,
        verbs,
        noun_class,
        verb_roles,
        prepositions,
        triples,
        train,
        held_out: held.into_iter().collect(),
    })
}

impl SyntheticWorld {
    pub fn tokens(&self, t: &Triple) -> Vec<String> {
        vec![
            self.nouns[t.subject].clone(),
            self.verbs[t.verb].clone(),
            self.prepositions[t.verb].clone(),
            "the".to_string(),
            self.nouns[t.object].clone(),
        ]
    }

    fn indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::HeldOut => &self.held_out,
        }
    }

    pub fn split_triples(&self, split: Split) -> Vec<Triple> {
        self.indices(split).iter().map(|&i| self.triples[i]).collect()
    }

    /// Gold-tagged sentences of one split; source id `world:<split>`, index
    /// = position within the split.
    pub fn sentences(&self, split: Split) -> Vec<TaggedSentence> {
        let source = format!("world:{}", split.name());
        self.indices(split)
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let tokens = self.tokens(&self.triples[i]);
                TaggedSentence {
                    raw: RawSentence::new(&detokenize(&tokens), &source, k as u64),
                    tags: vec![PosTag::Noun, PosTag::Verb, PosTag::Other, PosTag::Other, PosTag::Noun],
                    tokens,
                }
            })
            .collect()
    }

    /// Writes a split as tagged JSONL that corpus ingestion reads as gold input.
    pub fn write_jsonl(&self, split: Split, path: impl AsRef<Path>) -> std::io::Result<usize> {
        write_tagged_jsonl(&self.sentences(split), path)
    }
}

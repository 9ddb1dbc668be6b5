//! Concept extraction and the permutation operators behind every corruption.
//!
//! A concept is a single verb, noun or proper-noun token. Proper nouns join the
//! noun category. Permutations only ever move a concept into another slot of
//! the same category.

mod lemma;
mod permute;
mod rng;

pub use lemma::Lemmatizer;
pub use permute::{concept_permute, permutation, permute, slot_categories, ConceptPermutation, NotPermutable};
pub use rng::{child_seed, mix64, sentence_seed, SeededRng};

use crate::corpus::{PosTag, TaggedSentence};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConceptCategory {
    Verb,
    Noun,
}

impl ConceptCategory {
    /// Category for a tag, if the tag marks a concept.
    pub fn of(tag: PosTag) -> Option<Self> {
        match tag {
            PosTag::Verb => Some(Self::Verb),
            PosTag::Noun | PosTag::Propn => Some(Self::Noun),
            PosTag::Other => None,
        }
    }
}

/// Which concept classes to extract.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptClasses {
    #[default]
    Both,
    #[serde(alias = "nouns")]
    NounsOnly,
    #[serde(alias = "verbs")]
    VerbsOnly,
}

impl ConceptClasses {
    pub fn admits(self, category: ConceptCategory) -> bool {
        match self {
            Self::Both => true,
            Self::NounsOnly => category == ConceptCategory::Noun,
            Self::VerbsOnly => category == ConceptCategory::Verb,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "both" => Some(Self::Both),
            "nouns" | "nouns_only" => Some(Self::NounsOnly),
            "verbs" | "verbs_only" => Some(Self::VerbsOnly),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptOccurrence {
    pub token: String,
    pub position: usize,
    pub category: ConceptCategory,
}

/// Verb and noun occurrences of one sentence, each in ascending position order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptSet {
    pub verbs: Vec<ConceptOccurrence>,
    pub nouns: Vec<ConceptOccurrence>,
}

impl ConceptSet {
    /// All occurrences, verbs first then nouns.
    pub fn all(&self) -> impl Iterator<Item = &ConceptOccurrence> {
        self.verbs.iter().chain(self.nouns.iter())
    }

    pub fn len(&self) -> usize {
        self.verbs.len() + self.nouns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verbs.is_empty() && self.nouns.is_empty()
    }

    /// Concept tokens in `verbs ++ nouns` order, optionally lemmatized, with
    /// repeated forms dropped after their first occurrence.
    pub fn dedup_tokens(&self, lemmatizer: Option<&Lemmatizer>) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.all()
            .map(|o| match lemmatizer {
                Some(l) => l.lemmatize(&o.token, o.category),
                None => o.token.clone(),
            })
            .filter(|t| seen.insert(t.clone()))
            .collect()
    }
}

/// Collects every token whose tag belongs to the selected classes.
pub fn extract_concepts(sentence: &TaggedSentence, classes: ConceptClasses) -> ConceptSet {
    let mut set = ConceptSet::default();
    for (position, (token, &tag)) in sentence.tokens.iter().zip(&sentence.tags).enumerate() {
        let Some(category) = ConceptCategory::of(tag).filter(|c| classes.admits(*c)) else {
            continue;
        };
        let occ = ConceptOccurrence {
            token: token.clone(),
            position,
            category,
        };
        match category {
            ConceptCategory::Verb => set.verbs.push(occ),
            ConceptCategory::Noun => set.nouns.push(occ),
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{analyze, LexiconTagger, RawSentence};

    fn tagged(text: &str) -> TaggedSentence {
        analyze(RawSentence::new(text, "t", 0), &LexiconTagger::bundled()).unwrap()
    }

    fn tokens(occs: &[ConceptOccurrence]) -> Vec<(&str, usize)> {
        occs.iter().map(|o| (o.token.as_str(), o.position)).collect()
    }

    #[test]
    fn apple_sentence() {
        let c = extract_concepts(&tagged("apple grows on the tree"), ConceptClasses::Both);
        assert_eq!(tokens(&c.verbs), vec![("grows", 1)]);
        assert_eq!(tokens(&c.nouns), vec![("apple", 0), ("tree", 4)]);
    }

    #[test]
    fn first_woman_sentence() {
        let c = extract_concepts(
            &tagged("She was the first woman to hold the position ."),
            ConceptClasses::Both,
        );
        let verbs: Vec<_> = c.verbs.iter().map(|o| o.token.as_str()).collect();
        assert!(verbs.contains(&"hold"));
        assert!(verbs.iter().all(|v| *v == "hold" || *v == "was"));
        assert_eq!(tokens(&c.nouns), vec![("woman", 4), ("position", 8)]);
    }

    #[test]
    fn no_concepts() {
        assert!(extract_concepts(&tagged("over and over again"), ConceptClasses::Both).is_empty());
    }

    #[test]
    fn class_ablations_partition_both() {
        let s = tagged("John saw the dog chase a cat near the barn.");
        let both = extract_concepts(&s, ConceptClasses::Both);
        let nouns = extract_concepts(&s, ConceptClasses::NounsOnly);
        let verbs = extract_concepts(&s, ConceptClasses::VerbsOnly);
        assert!(nouns.verbs.is_empty() && verbs.nouns.is_empty());
        assert_eq!(verbs.verbs, both.verbs);
        assert_eq!(nouns.nouns, both.nouns);
        // PROPN joins the noun category.
        assert_eq!(both.nouns[0].token, "John");
    }

    #[test]
    fn dedup_after_lemmatization() {
        let s = tagged("dogs chase dogs and the dog runs");
        let c = extract_concepts(&s, ConceptClasses::Both);
        assert_eq!(c.dedup_tokens(Some(&Lemmatizer::bundled())), vec!["chase", "run", "dog"]);
    }
}

use super::{ConceptCategory, ConceptSet, SeededRng};
use crate::corpus::TaggedSentence;

/// Uniform random permutation of `0..n` (Fisher-Yates).
///
/// With `forbid_identity` and `n >= 2` the identity is redrawn until a
/// different order comes out.
pub fn permutation(n: usize, rng: &mut SeededRng, forbid_identity: bool) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    if n < 2 {
        return perm;
    }
    loop {
        for i in (1..n).rev() {
            let j = rng.below(i + 1);
            perm.swap(i, j);
        }
        if !forbid_identity || perm.iter().enumerate().any(|(i, &p)| i != p) {
            return perm;
        }
    }
}

/// Randomly reorders `items`. Lists shorter than two come back unchanged.
pub fn permute<T: Clone>(items: &[T], rng: &mut SeededRng, forbid_identity: bool) -> Vec<T> {
    permutation(items.len(), rng, forbid_identity)
        .into_iter()
        .map(|i| items[i].clone())
        .collect()
}

/// Neither category can produce a sentence different from the original.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("sentence concepts cannot be permuted into a different sentence")]
pub struct NotPermutable;

/// Result of permuting concepts within their categories.
///
/// `verb_order[j]` is the index into the verb list whose token now occupies the
/// j-th verb slot; `noun_order` likewise for nouns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConceptPermutation {
    pub tokens: Vec<String>,
    pub verb_order: Vec<usize>,
    pub noun_order: Vec<usize>,
}

impl ConceptPermutation {
    /// Puts every moved concept back into its original slot.
    pub fn invert(&self, concepts: &ConceptSet) -> Vec<String> {
        let mut out = self.tokens.clone();
        for (occs, order) in [
            (&concepts.verbs, &self.verb_order),
            (&concepts.nouns, &self.noun_order),
        ] {
            for (slot, &src) in order.iter().enumerate() {
                out[occs[src].position] = self.tokens[occs[slot].position].clone();
            }
        }
        out
    }
}

fn has_distinct_pair(tokens: &[&str]) -> bool {
    tokens.iter().any(|t| *t != tokens[0])
}

/// Permutes verbs among verb slots and nouns among noun slots, leaving every
/// other token fixed. The joint result always differs from the input sentence.
pub fn concept_permute(
    sentence: &TaggedSentence,
    concepts: &ConceptSet,
    rng: &mut SeededRng,
) -> Result<ConceptPermutation, NotPermutable> {
    let verbs: Vec<&str> = concepts.verbs.iter().map(|o| o.token.as_str()).collect();
    let nouns: Vec<&str> = concepts.nouns.iter().map(|o| o.token.as_str()).collect();
    if !has_distinct_pair(&verbs) && !has_distinct_pair(&nouns) {
        return Err(NotPermutable);
    }
    loop {
        let verb_order = permutation(verbs.len(), rng, false);
        let noun_order = permutation(nouns.len(), rng, false);
        let mut tokens = sentence.tokens.clone();
        for (slot, &src) in verb_order.iter().enumerate() {
            tokens[concepts.verbs[slot].position] = verbs[src].to_string();
        }
        for (slot, &src) in noun_order.iter().enumerate() {
            tokens[concepts.nouns[slot].position] = nouns[src].to_string();
        }
        if tokens != sentence.tokens {
            return Ok(ConceptPermutation {
                tokens,
                verb_order,
                noun_order,
            });
        }
    }
}

/// Category of the concept slot at each position, if any.
pub fn slot_categories(sentence: &TaggedSentence, concepts: &ConceptSet) -> Vec<Option<ConceptCategory>> {
    let mut out = vec![None; sentence.len()];
    for o in concepts.all() {
        out[o.position] = Some(o.category);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::{extract_concepts, ConceptClasses};
    use crate::corpus::{PosTag, RawSentence};
    use std::collections::{BTreeMap, BTreeSet};

    fn sentence(spec: &str) -> TaggedSentence {
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        for w in spec.split(' ') {
            let (t, tag) = match w.split_once('/') {
                Some((t, "N")) => (t, PosTag::Noun),
                Some((t, "P")) => (t, PosTag::Propn),
                Some((t, "V")) => (t, PosTag::Verb),
                _ => (w, PosTag::Other),
            };
            tokens.push(t.to_string());
            tags.push(tag);
        }
        TaggedSentence {
            raw: RawSentence::new(&tokens.join(" "), "t", 0),
            tokens,
            tags,
        }
    }

    #[test]
    fn singleton_and_pair() {
        let mut rng = SeededRng::new(1);
        assert_eq!(permute(&["x"], &mut rng, true), vec!["x"]);
        let empty: [&str; 0] = [];
        assert!(permute(&empty, &mut rng, true).is_empty());
        for seed in 0..50 {
            let mut rng = SeededRng::new(seed);
            assert_eq!(permute(&["a", "b"], &mut rng, true), vec!["b", "a"]);
        }
    }

    #[test]
    fn three_items_are_uniform() {
        let mut rng = SeededRng::new(2024);
        let mut counts: BTreeMap<Vec<char>, usize> = BTreeMap::new();
        let n = 10_000;
        for _ in 0..n {
            *counts.entry(permute(&['a', 'b', 'c'], &mut rng, false)).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = n as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 5 degrees of freedom, p = 0.001 critical value.
        assert!(chi2 < 20.52, "chi-square {chi2}");
        for &c in counts.values() {
            assert!((c as f64 - expected).abs() / expected < 0.05, "{counts:?}");
        }
    }

    #[test]
    fn apple_tree_swap_is_forced() {
        let s = sentence("apple/N grows/V on the tree/N");
        let c = extract_concepts(&s, ConceptClasses::Both);
        for seed in 0..20 {
            let mut rng = SeededRng::new(seed);
            let p = concept_permute(&s, &c, &mut rng).unwrap();
            assert_eq!(p.tokens.join(" "), "tree grows on the apple");
            assert_eq!(p.invert(&c), s.tokens);
        }
    }

    #[test]
    fn singleton_categories_are_not_permutable() {
        let s = sentence("the dog/N can run/V");
        let c = extract_concepts(&s, ConceptClasses::Both);
        assert_eq!(concept_permute(&s, &c, &mut SeededRng::new(0)), Err(NotPermutable));
        let s = sentence("dog/N sees dog/N");
        let c = extract_concepts(&s, ConceptClasses::Both);
        assert_eq!(concept_permute(&s, &c, &mut SeededRng::new(0)), Err(NotPermutable));
    }

    #[test]
    fn categories_and_fixed_points_hold() {
        let s = sentence("John/P saw/V the dog/N chase/V a cat/N near the barn/N .");
        let c = extract_concepts(&s, ConceptClasses::Both);
        let cats = slot_categories(&s, &c);
        let verbs: BTreeSet<_> = c.verbs.iter().map(|o| o.token.clone()).collect();
        for seed in 0..200 {
            let p = concept_permute(&s, &c, &mut SeededRng::new(seed)).unwrap();
            assert_ne!(p.tokens, s.tokens);
            for (i, tok) in p.tokens.iter().enumerate() {
                match cats[i] {
                    None => assert_eq!(tok, &s.tokens[i]),
                    Some(ConceptCategory::Verb) => assert!(verbs.contains(tok)),
                    Some(ConceptCategory::Noun) => assert!(!verbs.contains(tok)),
                }
            }
            assert_eq!(p.invert(&c), s.tokens);
        }
    }
}

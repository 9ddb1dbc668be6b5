use super::ConceptCategory;
use crate::corpus::{CorpusError, LexiconTagger};
use std::collections::{HashMap, HashSet};
use std::path::Path;

const BUNDLED_RULES: &str = include_str!("../../data/suffix_rules.tsv");
const BUNDLED_EXCEPTIONS: &str = include_str!("../../data/lemma_exceptions.tsv");

#[derive(Clone, Debug, PartialEq, Eq)]
struct SuffixRule {
    category: ConceptCategory,
    suffix: String,
    replacement: String,
}

/// Rule-based suffix-stripping lemmatizer for verb and noun concepts.
///
/// Candidate stems come from the ordered suffix rules. When a dictionary of
/// known word forms is attached, the first candidate found in it wins;
/// otherwise the first candidate is used, undoubling a final double consonant
/// left behind by `-ed`/`-ing`.
#[derive(Clone, Debug, Default)]
pub struct Lemmatizer {
    rules: Vec<SuffixRule>,
    exceptions: HashMap<(ConceptCategory, String), String>,
    dictionary: Option<HashSet<(ConceptCategory, String)>>,
}

fn parse_category(s: &str) -> Option<ConceptCategory> {
    match s {
        "VERB" => Some(ConceptCategory::Verb),
        "NOUN" => Some(ConceptCategory::Noun),
        _ => None,
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(n, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((n + 1, line.split('\t').collect()))
        }
    })
}

fn config_err(what: &str, line: usize) -> CorpusError {
    CorpusError::Config {
        message: format!("{what} line {line}: malformed entry"),
    }
}

impl Lemmatizer {
    /// Bundled rules and exceptions, with the bundled lexicon as dictionary.
    pub fn bundled() -> Self {
        let mut l = Self::parse(BUNDLED_RULES, BUNDLED_EXCEPTIONS).expect("bundled lemma data is well formed");
        let lexicon = LexiconTagger::bundled();
        l.dictionary = Some(
            lexicon
                .entries()
                .filter_map(|(w, tag)| ConceptCategory::of(tag).map(|c| (c, w.to_string())))
                .collect(),
        );
        l
    }

    /// Bundled rules and exceptions without a dictionary.
    pub fn rules_only() -> Self {
        Self::parse(BUNDLED_RULES, BUNDLED_EXCEPTIONS).expect("bundled lemma data is well formed")
    }

    pub fn from_paths(rules: impl AsRef<Path>, exceptions: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| CorpusError::Io {
                path: p.display().to_string(),
                source: e,
            })
        };
        Self::parse(&read(rules.as_ref())?, &read(exceptions.as_ref())?)
    }

    pub fn parse(rules: &str, exceptions: &str) -> Result<Self, CorpusError> {
        let mut out = Self::default();
        for (n, fields) in data_lines(rules) {
            let (cat, suffix) = match fields.as_slice() {
                [c, s] | [c, s, _] => (*c, *s),
                _ => return Err(config_err("suffix rules", n)),
            };
            let category = parse_category(cat).ok_or_else(|| config_err("suffix rules", n))?;
            if suffix.is_empty() {
                return Err(config_err("suffix rules", n));
            }
            out.rules.push(SuffixRule {
                category,
                suffix: suffix.to_string(),
                replacement: fields.get(2).copied().unwrap_or("").to_string(),
            });
        }
        for (n, fields) in data_lines(exceptions) {
            let [cat, surface, lemma] = fields.as_slice() else {
                return Err(config_err("lemma exceptions", n));
            };
            let category = parse_category(cat).ok_or_else(|| config_err("lemma exceptions", n))?;
            out.exceptions
                .insert((category, surface.to_string()), lemma.to_string());
        }
        Ok(out)
    }

    /// Attaches known (category, word) pairs used to choose between candidate stems.
    pub fn with_dictionary<I: IntoIterator<Item = (ConceptCategory, String)>>(mut self, words: I) -> Self {
        self.dictionary = Some(words.into_iter().collect());
        self
    }

    pub fn lemmatize(&self, token: &str, category: ConceptCategory) -> String {
        if token.chars().next().map_or(true, |c| !c.is_lowercase()) {
            return token.to_string();
        }
        if let Some(lemma) = self.exceptions.get(&(category, token.to_string())) {
            return lemma.clone();
        }
        let mut candidates: Vec<(String, Option<String>)> = Vec::new();
        for rule in self.rules.iter().filter(|r| r.category == category) {
            let Some(base) = token.strip_suffix(rule.suffix.as_str()) else {
                continue;
            };
            let stem_len = base.chars().count() + rule.replacement.chars().count();
            if base.is_empty() || stem_len < 2 || !suffix_allowed(category, &rule.suffix, base) {
                continue;
            }
            let stem = format!("{base}{}", rule.replacement);
            let undoubled = (rule.replacement.is_empty() && matches!(rule.suffix.as_str(), "ed" | "ing"))
                .then(|| undouble(&stem))
                .flatten();
            candidates.push((stem, undoubled));
        }
        if candidates.is_empty() {
            return token.to_string();
        }
        if let Some(dict) = &self.dictionary {
            let known = |w: &String| dict.contains(&(category, w.clone()));
            for (stem, undoubled) in &candidates {
                if known(stem) {
                    return stem.clone();
                }
                if let Some(u) = undoubled.as_ref().filter(|u| known(u)) {
                    return u.clone();
                }
            }
        }
        let (stem, undoubled) = candidates.swap_remove(0);
        undoubled.unwrap_or(stem)
    }
}

fn suffix_allowed(category: ConceptCategory, suffix: &str, base: &str) -> bool {
    match (category, suffix) {
        (_, "s") => !(base.ends_with('s') || base.ends_with('u') || base.ends_with('i')),
        (ConceptCategory::Verb, "es") => {
            ["s", "x", "z", "ch", "sh", "o"].iter().any(|e| base.ends_with(e))
        }
        _ => true,
    }
}

fn undouble(stem: &str) -> Option<String> {
    let chars: Vec<char> = stem.chars().collect();
    let n = chars.len();
    if n >= 3 && chars[n - 1] == chars[n - 2] && !"aeioulsz".contains(chars[n - 1]) {
        Some(chars[..n - 1].iter().collect())
    } else {
        None
    }
}

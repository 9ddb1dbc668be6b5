use super::CorpusError;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

/// Coarse part-of-speech alphabet used for concept extraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Propn,
    Verb,
    Other,
}

impl PosTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Propn => "PROPN",
            PosTag::Verb => "VERB",
            PosTag::Other => "OTHER",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "NOUN" => Some(PosTag::Noun),
            "PROPN" => Some(PosTag::Propn),
            "VERB" => Some(PosTag::Verb),
            "OTHER" => Some(PosTag::Other),
            _ => None,
        }
    }
}

/// Assigns one tag per token.
///
/// `gold` carries tags that arrived with the input (JSONL `tags` field), if any.
pub trait Tagger: Send + Sync {
    fn tag(&self, tokens: &[String], gold: Option<&[PosTag]>) -> Result<Vec<PosTag>, CorpusError>;
}

/// Most-frequent-tag lexicon with capitalization fallback for unknown words.
#[derive(Clone, Debug, Default)]
pub struct LexiconTagger {
    table: HashMap<String, PosTag>,
}

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");

impl LexiconTagger {
    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon is well formed")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Config {
            message: format!("cannot read lexicon {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Parses `token<TAB>tag` lines. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut table = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (token, tag) = line.split_once('\t').ok_or_else(|| CorpusError::Config {
                message: format!("lexicon line {}: expected token<TAB>tag", n + 1),
            })?;
            let tag = PosTag::parse(tag.trim()).ok_or_else(|| CorpusError::Config {
                message: format!("lexicon line {}: unknown tag {tag:?}", n + 1),
            })?;
            table.insert(token.to_string(), tag);
        }
        Ok(Self { table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.table.contains_key(word)
    }

    /// Known word forms with their tags.
    pub fn entries(&self) -> impl Iterator<Item = (&str, PosTag)> {
        self.table.iter().map(|(w, t)| (w.as_str(), *t))
    }

    fn lookup(&self, token: &str) -> Option<PosTag> {
        self.table
            .get(token)
            .or_else(|| self.table.get(&token.to_lowercase()))
            .copied()
    }

    fn tag_one(&self, token: &str, position: usize) -> PosTag {
        if let Some(tag) = self.lookup(token) {
            return tag;
        }
        let capitalized = token.chars().next().is_some_and(char::is_uppercase);
        if capitalized && position > 0 {
            PosTag::Propn
        } else {
            PosTag::Other
        }
    }
}

impl Tagger for LexiconTagger {
    fn tag(&self, tokens: &[String], _gold: Option<&[PosTag]>) -> Result<Vec<PosTag>, CorpusError> {
        Ok(tokens
            .iter()
            .enumerate()
            .map(|(i, t)| self.tag_one(t, i))
            .collect())
    }
}

/// Passes through tags supplied with the input.
#[derive(Clone, Copy, Debug, Default)]
pub struct GoldTagger;

impl Tagger for GoldTagger {
    fn tag(&self, tokens: &[String], gold: Option<&[PosTag]>) -> Result<Vec<PosTag>, CorpusError> {
        let gold = gold.ok_or(CorpusError::MissingGoldTags)?;
        if gold.len() != tokens.len() {
            return Err(CorpusError::TagCount {
                tokens: tokens.len(),
                tags: gold.len(),
            });
        }
        Ok(gold.to_vec())
    }
}

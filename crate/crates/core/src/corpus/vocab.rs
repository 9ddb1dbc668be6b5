use super::{CorpusError, TaggedSentence};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const SEP: &str = "<sep>";

/// Number of span sentinels `<M0>` .. `<M99>`.
pub const NUM_SENTINELS: usize = 100;

/// Reserved symbols other than sentinels, in id order starting at 0.
pub const RESERVED_SYMBOLS: &[&str] = &[
    PAD, BOS, EOS, UNK, "<c2s>", "<cor>", "<cont>", "<mc>", "<tf>", "<ssm>", "<infill>", SEP, "1:", "2:",
    "1", "2", "true", "false",
];

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;

/// Size of the reserved id block (symbols followed by sentinels).
pub const RESERVED_SIZE: usize = RESERVED_SYMBOLS.len() + NUM_SENTINELS;

pub fn sentinel(i: usize) -> String {
    assert!(i < NUM_SENTINELS, "sentinel index {i} out of range");
    format!("<M{i}>")
}

pub fn is_sentinel(token: &str) -> bool {
    token
        .strip_prefix("<M")
        .and_then(|rest| rest.strip_suffix('>'))
        .and_then(|n| n.parse::<usize>().ok())
        .is_some_and(|n| n < NUM_SENTINELS)
}

/// Token frequency counts; partial counts from separate chunks merge exactly.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenCounts {
    counts: HashMap<String, u64>,
    sentences: u64,
}

impl TokenCounts {
    pub fn add_sentence(&mut self, sentence: &TaggedSentence) {
        self.sentences += 1;
        for t in &sentence.tokens {
            *self.counts.entry(t.clone()).or_default() += 1;
        }
    }

    pub fn merge(&mut self, other: TokenCounts) {
        self.sentences += other.sentences;
        for (t, c) in other.counts {
            *self.counts.entry(t).or_default() += c;
        }
    }

    pub fn sentences(&self) -> u64 {
        self.sentences
    }
}

/// Word-level vocabulary with a fixed reserved block at the lowest ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// A vocabulary holding only the reserved block.
    pub fn reserved_only() -> Self {
        let mut tokens: Vec<String> = RESERVED_SYMBOLS.iter().map(|s| s.to_string()).collect();
        tokens.extend((0..NUM_SENTINELS).map(sentinel));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn build<'a, I>(corpus: I, min_freq: u64) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = &'a TaggedSentence>,
    {
        let mut counts = TokenCounts::default();
        for s in corpus {
            counts.add_sentence(s);
        }
        Self::from_counts(&counts, min_freq)
    }

    /// Tokens with frequency at least `min_freq`, ordered by frequency descending
    /// then lexicographically, appended after the reserved block.
    pub fn from_counts(counts: &TokenCounts, min_freq: u64) -> Result<Self, CorpusError> {
        if counts.sentences == 0 {
            return Err(CorpusError::EmptyCorpus);
        }
        if min_freq == 0 {
            return Err(CorpusError::Config {
                message: "min_freq must be at least 1".into(),
            });
        }
        let mut vocab = Self::reserved_only();
        let mut entries: Vec<(&String, u64)> = counts
            .counts
            .iter()
            .filter(|(t, &c)| c >= min_freq && !vocab.index.contains_key(*t))
            .map(|(t, &c)| (t, c))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        vocab.extend(entries.into_iter().map(|(t, _)| t.clone()));
        Ok(vocab)
    }

    /// Appends tokens that are not yet present, in the given order.
    pub fn extend<I: IntoIterator<Item = String>>(&mut self, tokens: I) {
        for t in tokens {
            if !self.index.contains_key(&t) {
                self.index.insert(t.clone(), self.tokens.len() as u32);
                self.tokens.push(t);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Exact lookup.
    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Lookup with lowercase fallback, then `<unk>`.
    pub fn id(&self, token: &str) -> u32 {
        self.get(token)
            .or_else(|| self.get(&token.to_lowercase()))
            .unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(UNK).to_string())
            .collect()
    }

    /// Non-reserved tokens in id order.
    pub fn content_tokens(&self) -> &[String] {
        &self.tokens[RESERVED_SIZE..]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# reserved_size {RESERVED_SIZE}")?;
        writeln!(
            out,
            "# reserved ids 0..{}: {} <M0>..<M{}>",
            RESERVED_SIZE - 1,
            RESERVED_SYMBOLS.join(" "),
            NUM_SENTINELS - 1
        )?;
        writeln!(out, "# token id = line index below + {RESERVED_SIZE}")?;
        for t in self.content_tokens() {
            writeln!(out, "{t}")?;
        }
        out.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut vocab = Self::reserved_only();
        let mut in_header = true;
        let mut declared = None;
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| CorpusError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            if in_header && line.starts_with("# ") {
                if let Some(v) = line.strip_prefix("# reserved_size ") {
                    declared = v.trim().parse::<usize>().ok();
                }
                continue;
            }
            in_header = false;
            if line.is_empty() || line.contains(char::is_whitespace) {
                return Err(CorpusError::Config {
                    message: format!("vocabulary line {}: invalid token {line:?}", n + 1),
                });
            }
            if vocab.index.contains_key(&line) {
                return Err(CorpusError::Config {
                    message: format!("vocabulary line {}: duplicate token {line:?}", n + 1),
                });
            }
            vocab.extend(std::iter::once(line));
        }
        if declared != Some(RESERVED_SIZE) {
            return Err(CorpusError::Config {
                message: format!(
                    "vocabulary header declares reserved_size {declared:?}, expected {RESERVED_SIZE}"
                ),
            });
        }
        Ok(vocab)
    }
}

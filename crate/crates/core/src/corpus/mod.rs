//! Raw text ingestion, tokenization, tagging and vocabulary construction.

mod segment;
mod tagger;
mod tokenize;
mod vocab;

pub use segment::{normalize_whitespace, split_sentences, ABBREVIATIONS};
pub use tagger::{GoldTagger, LexiconTagger, PosTag, Tagger};
pub use tokenize::{detokenize, tokenize, POSSESSIVE, PUNCTUATION};
pub use vocab::*;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8")]
    Utf8 { path: String },
    #[error("configuration error: {message}")]
    Config { message: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("gold tags required but missing")]
    MissingGoldTags,
    #[error("{tokens} tokens but {tags} tags")]
    TagCount { tokens: usize, tags: usize },
    #[error("cannot tag an empty token list")]
    EmptySentence,
}

/// A recoverable per-line problem found while reading a JSONL file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    PlainText,
    Jsonl,
}

/// Tokens and tags supplied with the input, bypassing the tokenizer and tagger.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub tokens: Vec<String>,
    pub tags: Option<Vec<PosTag>>,
}

/// One uncorrupted sentence before tokenization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSentence {
    pub text: String,
    pub source_id: String,
    pub index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<GoldAnnotation>,
}

impl RawSentence {
    pub fn new(text: &str, source_id: &str, index: u64) -> Self {
        Self {
            text: text.to_string(),
            source_id: source_id.to_string(),
            index,
            gold: None,
        }
    }
}

/// A tokenized sentence with one tag per token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<PosTag>,
    pub raw: RawSentence,
}

impl TaggedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn source_id(&self) -> &str {
        &self.raw.source_id
    }

    pub fn index(&self) -> u64 {
        self.raw.index
    }
}

#[derive(Deserialize)]
struct JsonlInputLine {
    text: String,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    source_id: Option<String>,
    #[serde(default)]
    index: Option<u64>,
    #[serde(default)]
    tokens: Option<Vec<String>>,
    #[serde(default)]
    tags: Option<Vec<PosTag>>,
}

/// Sentences read from one input file plus any recoverable line errors.
#[derive(Clone, Debug, Default)]
pub struct Ingested {
    pub sentences: Vec<RawSentence>,
    pub errors: Vec<LineError>,
}

fn read_utf8(path: &Path) -> Result<String, CorpusError> {
    let bytes = std::fs::read(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    String::from_utf8(bytes).map_err(|_| CorpusError::Utf8 {
        path: path.display().to_string(),
    })
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

/// Reads a corpus file and segments it into sentences in document order.
///
/// Plain text documents are separated by blank lines. A JSONL line that carries
/// `tokens` is taken as one pre-tokenized sentence; otherwise its `text` is
/// segmented like a plain-text document. Malformed JSONL lines are reported in
/// [`Ingested::errors`] and skipped.
pub fn ingest(path: impl AsRef<Path>, format: InputFormat) -> Result<Ingested, CorpusError> {
    let path = path.as_ref();
    let text = read_utf8(path)?;
    let stem = file_stem(path);
    let mut out = Ingested::default();
    match format {
        InputFormat::PlainText => {
            for (doc, body) in split_documents(&text).into_iter().enumerate() {
                let source_id = format!("{stem}:{doc}");
                for (i, s) in split_sentences(&body).into_iter().enumerate() {
                    out.sentences.push(RawSentence {
                        text: s,
                        source_id: source_id.clone(),
                        index: i as u64,
                        gold: None,
                    });
                }
            }
        }
        InputFormat::Jsonl => {
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: JsonlInputLine = match serde_json::from_str(line) {
                    Ok(p) => p,
                    Err(e) => {
                        out.errors.push(LineError {
                            line: n + 1,
                            message: e.to_string(),
                        });
                        continue;
                    }
                };
                let source_id = parsed
                    .source_id
                    .or(parsed.id)
                    .unwrap_or_else(|| format!("{stem}:{}", n + 1));
                if let Some(tokens) = parsed.tokens {
                    if let Some(tags) = &parsed.tags {
                        if tags.len() != tokens.len() {
                            out.errors.push(LineError {
                                line: n + 1,
                                message: format!("{} tokens but {} tags", tokens.len(), tags.len()),
                            });
                            continue;
                        }
                    }
                    let text = normalize_whitespace(&parsed.text);
                    if text.is_empty() || tokens.is_empty() {
                        out.errors.push(LineError {
                            line: n + 1,
                            message: "empty sentence".into(),
                        });
                        continue;
                    }
                    out.sentences.push(RawSentence {
                        text,
                        source_id,
                        index: parsed.index.unwrap_or(0),
                        gold: Some(GoldAnnotation {
                            tokens,
                            tags: parsed.tags,
                        }),
                    });
                } else {
                    for (i, s) in split_sentences(&parsed.text).into_iter().enumerate() {
                        out.sentences.push(RawSentence {
                            text: s,
                            source_id: source_id.clone(),
                            index: i as u64,
                            gold: None,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn split_documents(text: &str) -> Vec<String> {
    let mut docs = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.trim().is_empty() {
                docs.push(std::mem::take(&mut current));
            }
            current.clear();
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    if !current.trim().is_empty() {
        docs.push(current);
    }
    docs
}

/// Tags a token list, producing a [`TaggedSentence`].
pub fn tag(tokens: Vec<String>, raw: RawSentence, tagger: &dyn Tagger) -> Result<TaggedSentence, CorpusError> {
    if tokens.is_empty() {
        return Err(CorpusError::EmptySentence);
    }
    let gold = raw.gold.as_ref().and_then(|g| g.tags.as_deref());
    let tags = tagger.tag(&tokens, gold)?;
    if tags.len() != tokens.len() {
        return Err(CorpusError::TagCount {
            tokens: tokens.len(),
            tags: tags.len(),
        });
    }
    Ok(TaggedSentence { tokens, tags, raw })
}

/// Tokenizes (or takes the gold tokens of) a raw sentence and tags it.
pub fn analyze(raw: RawSentence, tagger: &dyn Tagger) -> Result<TaggedSentence, CorpusError> {
    let tokens = match &raw.gold {
        Some(g) => g.tokens.clone(),
        None => tokenize(&raw.text),
    };
    tag(tokens, raw, tagger)
}

/// Token-count bounds applied after tagging.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LengthFilter {
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for LengthFilter {
    fn default() -> Self {
        Self {
            min_tokens: 5,
            max_tokens: 64,
        }
    }
}

impl LengthFilter {
    pub fn accepts(&self, s: &TaggedSentence) -> bool {
        (self.min_tokens..=self.max_tokens).contains(&s.len())
    }
}

/// Analyzes every sentence on `workers` threads; output order matches input order.
pub fn analyze_all(
    raws: Vec<RawSentence>,
    tagger: &dyn Tagger,
    workers: usize,
) -> Result<Vec<TaggedSentence>, CorpusError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CorpusError::Config {
            message: format!("thread pool: {e}"),
        })?;
    pool.install(|| raws.into_par_iter().map(|r| analyze(r, tagger)).collect())
}

#[derive(Serialize, Deserialize)]
struct TaggedLine {
    source_id: String,
    index: u64,
    text: String,
    tokens: Vec<String>,
    tags: Vec<PosTag>,
}

/// Writes tagged sentences as JSONL; the output is itself valid gold-tag input.
pub fn write_tagged_jsonl(sentences: &[TaggedSentence], path: impl AsRef<Path>) -> std::io::Result<usize> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in sentences {
        let line = TaggedLine {
            source_id: s.raw.source_id.clone(),
            index: s.raw.index,
            text: s.raw.text.clone(),
            tokens: s.tokens.clone(),
            tags: s.tags.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(sentences.len())
}

/// Reads a file written by [`write_tagged_jsonl`].
pub fn read_tagged_jsonl(path: impl AsRef<Path>) -> Result<(Vec<TaggedSentence>, Vec<LineError>), CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut sentences = Vec::new();
    let mut errors = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TaggedLine>(&line) {
            Ok(l) if !l.tokens.is_empty() && l.tokens.len() == l.tags.len() => sentences.push(TaggedSentence {
                raw: RawSentence {
                    text: l.text,
                    source_id: l.source_id,
                    index: l.index,
                    gold: None,
                },
                tokens: l.tokens,
                tags: l.tags,
            }),
            Ok(_) => errors.push(LineError {
                line: n + 1,
                message: "tokens and tags must be non-empty and of equal length".into(),
            }),
            Err(e) => errors.push(LineError {
                line: n + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok((sentences, errors))
}

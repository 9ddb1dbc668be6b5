//! The JSON run configuration shared by every subcommand.

use crate::corpus::{InputFormat, LengthFilter};
use crate::model::ModelConfig;
use crate::objectives::CorruptConfig;
use crate::trainer::TrainPlan;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: at `{field}`: {message}")]
    Schema { path: String, field: String, message: String },
    #[error("`{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    pub fn invalid(field: &str, message: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Dotted path of the offending field.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Io { .. } => None,
            Self::Schema { field, .. } | Self::Invalid { field, .. } => Some(field),
        }
    }
}

/// Input and output locations. Relative paths resolve against the working
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    /// Tagger lexicon; the bundled one when absent.
    pub lexicon: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: None,
            vocab: None,
            lexicon: None,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Inferred from the corpus extension (`.jsonl` or plain text) when absent.
    pub format: Option<InputFormat>,
    /// Take tags from the input instead of the lexicon tagger.
    pub gold_tags: bool,
    pub min_freq: u64,
    pub length: LengthFilter,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            format: None,
            gold_tags: false,
            min_freq: 1,
            length: LengthFilter::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Em,
    F1,
    Bleu4,
    Disc,
    Probe,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Em, Metric::F1, Metric::Bleu4, Metric::Disc, Metric::Probe];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Em => "em",
            Metric::F1 => "f1",
            Metric::Bleu4 => "bleu4",
            Metric::Disc => "disc",
            Metric::Probe => "probe",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub metrics: Vec<Metric>,
    /// Tagged JSONL sentences for the order-recovery probe.
    pub probe_data: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: Metric::ALL.to_vec(),
            probe_data: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed. Corruption, initialisation and training seeds derive from it.
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub objectives: CorruptConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub plan: TrainPlan,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn one() -> usize {
    1
}

impl RunConfig {
    /// A configuration with every section at its default.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            workers: 1,
            paths: Paths::default(),
            ingest: IngestConfig::default(),
            objectives: CorruptConfig::default(),
            model: ModelConfig::default(),
            plan: TrainPlan::default(),
            eval: EvalConfig::default(),
        }
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            ConfigError::Schema {
                path: origin.into(),
                field: if field == "." { "(root)".into() } else { field },
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Field-level checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::invalid("workers", "must be at least 1"));
        }
        if self.ingest.min_freq == 0 {
            return Err(ConfigError::invalid("ingest.min_freq", "must be at least 1"));
        }
        if self.ingest.length.min_tokens > self.ingest.length.max_tokens {
            return Err(ConfigError::invalid("ingest.length", "min_tokens exceeds max_tokens"));
        }
        if self.objectives.objectives.is_empty() {
            return Err(ConfigError::invalid("objectives.objectives", "no objectives selected"));
        }
        if !(0.0..1.0).contains(&self.objectives.infill_rate) {
            return Err(ConfigError::invalid("objectives.infill_rate", "must lie in [0, 1)"));
        }
        if !(self.objectives.infill_mean_span >= 1.0) {
            return Err(ConfigError::invalid("objectives.infill_mean_span", "must be at least 1"));
        }
        if self.model.vocab_size != 0 {
            self.model
                .validate()
                .map_err(|e| ConfigError::invalid("model", e.to_string()))?;
        }
        self.plan
            .validate()
            .map_err(|e| ConfigError::invalid("plan", e.to_string()))?;
        if let Some(p) = &self.paths.lexicon {
            require_file("paths.lexicon", Some(p))?;
        }
        Ok(())
    }

    /// The seeds every stage actually uses, written into the snapshot.
    pub fn resolved(&self) -> Self {
        let mut r = self.clone();
        r.plan.seed = self.seed;
        r
    }

    /// Writes `resolved_config.json` into `dir`.
    pub fn write_snapshot(&self, dir: impl AsRef<Path>) -> std::io::Result<PathBuf> {
        let path = dir.as_ref().join("resolved_config.json");
        let text = serde_json::to_string_pretty(&self.resolved()).expect("config serializes");
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

/// Checks that a configured path is present and exists.
pub fn require_file<'a>(field: &str, path: Option<&'a PathBuf>) -> Result<&'a PathBuf, ConfigError> {
    let p = path.ok_or_else(|| ConfigError::invalid(field, "required but not set"))?;
    if !p.exists() {
        return Err(ConfigError::invalid(field, format!("{} does not exist", p.display())));
    }
    Ok(p)
}

//! Operations behind the command-line subcommands.
//!
//! Every operation writes its outputs, a `summary.json` and a
//! `resolved_config.json` into one output directory.

use crate::concepts::{child_seed, extract_concepts, ConceptClasses, Lemmatizer};
use crate::config::{require_file, ConfigError, Metric, RunConfig};
use crate::corpus::{
    analyze_all, ingest, read_tagged_jsonl, write_tagged_jsonl, CorpusError, GoldTagger, InputFormat, LexiconTagger,
    TaggedSentence, Tagger, Vocabulary, UNK_ID,
};
use crate::eval::{
    eval_cor_probe, eval_discriminator, eval_generation, build_synthetic_world_with, EvalReport, Split,
};
use crate::model::{checkpoint_digest, decode_greedy, load_checkpoint, save_checkpoint, ModelConfig, ParameterStore};
use crate::objectives::{corrupt_corpus, read_jsonl, write_jsonl, Objective, TrainingExample};
use crate::trainer::{pretrain, Dataset, Stage, TrainPlan, Trainer};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const TRAINER_STATE_FILE: &str = "trainer_state.json";

/// Vocabulary of a corpus extended, in sorted order, with the lemmas of its
/// verb and noun tokens that the corpus itself lacks.
pub fn build_vocab(
    sentences: &[TaggedSentence],
    min_freq: u64,
    lemmatizer: &Lemmatizer,
) -> Result<Vocabulary, CorpusError> {
    let mut vocab = Vocabulary::build(sentences, min_freq)?;
    let lemmas: BTreeSet<String> = sentences
        .iter()
        .flat_map(|s| {
            let c = extract_concepts(s, ConceptClasses::Both);
            c.all()
                .filter(|o| vocab.get(&o.token).is_some())
                .map(|o| lemmatizer.lemmatize(&o.token, o.category))
                .collect::<Vec<_>>()
        })
        .filter(|t| vocab.get(t).is_none())
        .collect();
    vocab.extend(lemmas);
    Ok(vocab)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

/// Writes the summary and the resolved configuration beside the outputs.
fn finish(cfg: &RunConfig, dir: &Path, command: &str, mut summary: Value) -> Result<Value> {
    summary["command"] = json!(command);
    summary["seed"] = json!(cfg.seed);
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    cfg.write_snapshot(dir)
        .with_context(|| format!("cannot write resolved config into {}", dir.display()))?;
    Ok(summary)
}

fn load_vocab(cfg: &RunConfig) -> Result<Vocabulary> {
    let path = require_file("paths.vocab", cfg.paths.vocab.as_ref())?;
    Ok(Vocabulary::load(path)?)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?)
}

/// Reads the configured corpus, tags it, filters by length and writes
/// `corpus.jsonl` plus the vocabulary (to `paths.vocab`, or `vocab.txt` in
/// the output directory).
pub fn run_ingest(cfg: &RunConfig) -> Result<Value> {
    cfg.validate()?;
    let corpus = require_file("paths.corpus", cfg.paths.corpus.as_ref())?;
    let out = &cfg.paths.output_dir;
    create_dir(out)?;
    let format = cfg.ingest.format.unwrap_or_else(|| {
        if corpus.extension().is_some_and(|e| e == "jsonl") {
            InputFormat::Jsonl
        } else {
            InputFormat::PlainText
        }
    });
    let read = ingest(corpus, format)?;
    let n_raw = read.sentences.len();
    let lexicon;
    let tagger: &dyn Tagger = if cfg.ingest.gold_tags {
        &GoldTagger
    } else {
        lexicon = match &cfg.paths.lexicon {
            Some(p) => LexiconTagger::from_path(p)?,
            None => LexiconTagger::bundled(),
        };
        &lexicon
    };
    let tagged = analyze_all(read.sentences, tagger, cfg.workers)?;
    let kept: Vec<TaggedSentence> = tagged.into_iter().filter(|s| cfg.ingest.length.accepts(s)).collect();
    if kept.is_empty() {
        bail!("no sentences left after length filtering");
    }
    let corpus_out = out.join("corpus.jsonl");
    write_tagged_jsonl(&kept, &corpus_out)?;
    let vocab = build_vocab(&kept, cfg.ingest.min_freq, &Lemmatizer::bundled())?;
    let vocab_path = cfg.paths.vocab.clone().unwrap_or_else(|| out.join("vocab.txt"));
    if let Some(parent) = vocab_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    vocab.save(&vocab_path)?;
    let mut resolved = cfg.clone();
    resolved.paths.vocab = Some(vocab_path.clone());
    finish(
        &resolved,
        out,
        "ingest",
        json!({
            "sentences_read": n_raw,
            "sentences_kept": kept.len(),
            "filtered_by_length": n_raw - kept.len(),
            "line_errors": read.errors,
            "vocab_size": vocab.len(),
            "outputs": {"corpus": corpus_out, "vocab": vocab_path},
        }),
    )
}

fn read_sentences(path: &Path) -> Result<Vec<TaggedSentence>> {
    let (sentences, errors) = read_tagged_jsonl(path)?;
    if !errors.is_empty() {
        bail!("{}: {} malformed lines, first at line {}", path.display(), errors.len(), errors[0].line);
    }
    Ok(sentences)
}

/// Builds the configured objectives' examples from tagged sentences and
/// writes `examples.jsonl`.
pub fn run_corrupt(cfg: &RunConfig, data: &Path) -> Result<Value> {
    cfg.validate()?;
    let out = &cfg.paths.output_dir;
    create_dir(out)?;
    let sentences = read_sentences(data)?;
    let c = corrupt_corpus(&sentences, &cfg.objectives, cfg.seed, &Lemmatizer::bundled(), cfg.workers)?;
    let path = out.join("examples.jsonl");
    write_jsonl(&c.examples, &path)?;
    let mut per_objective: BTreeMap<Objective, usize> = BTreeMap::new();
    for ex in &c.examples {
        *per_objective.entry(ex.objective).or_default() += 1;
    }
    finish(
        cfg,
        out,
        "corrupt",
        json!({
            "sentences": sentences.len(),
            "examples": c.examples.len(),
            "per_objective": per_objective,
            "skipped": c.skipped,
            "outputs": {"examples": path, "digest": crate::file_digest(&path)?},
        }),
    )
}

fn read_examples(path: &Path) -> Result<(Vec<TrainingExample>, usize)> {
    let read = read_jsonl(path).with_context(|| format!("cannot read {}", path.display()))?;
    if read.examples.is_empty() {
        bail!("{}: no valid examples ({} bad lines)", path.display(), read.errors.len());
    }
    Ok((read.examples, read.errors.len()))
}

/// Reads a plan file, reporting schema errors with their field path.
pub fn load_plan(path: &Path) -> Result<TrainPlan, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
        path: path.display().to_string(),
        field: format!("plan.{}", e.path()),
        message: e.into_inner().to_string(),
    })
}

/// Step counter saved beside a checkpoint so a resumed run continues the
/// learning-rate schedule. Optimizer moments are not saved.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub step: u64,
}

fn model_config(cfg: &RunConfig, vocab: &Vocabulary) -> Result<ModelConfig> {
    let mut m = cfg.model.clone();
    if m.vocab_size == 0 {
        m.vocab_size = vocab.len();
    } else if m.vocab_size != vocab.len() {
        return Err(ConfigError::invalid(
            "model.vocab_size",
            format!("{} but the vocabulary has {} entries", m.vocab_size, vocab.len()),
        )
        .into());
    }
    m.validate().map_err(|e| ConfigError::invalid("model", e.to_string()))?;
    Ok(m)
}

/// Trains from an examples file, optionally resuming from a checkpoint
/// directory, and writes the checkpoint, `train_log.csv` and summary.
pub fn run_pretrain(cfg: &RunConfig, data: &Path, stage: Stage, resume: Option<&Path>) -> Result<Value> {
    cfg.validate()?;
    let cfg = &cfg.resolved();
    let out = &cfg.paths.output_dir;
    create_dir(out)?;
    let vocab = load_vocab(cfg)?;
    let model = model_config(cfg, &vocab)?;
    let (examples, bad_lines) = read_examples(data)?;
    let plan = &cfg.plan;
    let ds = Dataset::new(examples, &vocab, &model, plan.cont_format);
    let mut trainer = match resume {
        Some(dir) => {
            let (params, _) = load_checkpoint(dir, Some(&model))?;
            let state: TrainerState = match std::fs::read_to_string(dir.join(TRAINER_STATE_FILE)) {
                Ok(text) => serde_json::from_str(&text)?,
                Err(_) => TrainerState::default(),
            };
            let mut t = Trainer::new(params, plan);
            t.step = state.step;
            t.warm_started = true;
            t
        }
        None => Trainer::new(ParameterStore::init(&model, child_seed(cfg.seed, "init"))?, plan),
    };
    let mut report = pool(cfg.workers)?.install(|| pretrain(&mut trainer, &ds, plan, stage))?;
    let ckpt = out.join(CHECKPOINT_DIR);
    save_checkpoint(&trainer.params, &ckpt)?;
    write_json(&ckpt.join(TRAINER_STATE_FILE), &TrainerState { step: trainer.step })?;
    report.checkpoint = Some(ckpt.clone());
    report.write_csv(out.join("train_log.csv"))?;
    let mut summary = report.summary();
    summary["examples"] = json!(ds.len());
    summary["dropped_too_long"] = json!(ds.dropped);
    summary["bad_lines"] = json!(bad_lines);
    summary["joint_groups"] = json!(ds.groups.len());
    summary["stage"] = json!(stage);
    summary["final_step"] = json!(trainer.step);
    summary["checkpoint_digest"] = json!(checkpoint_digest(&ckpt)?);
    finish(cfg, out, "pretrain", summary)
}

/// Evaluates a checkpoint and writes the report to `report_path`; the
/// summary and resolved config go beside it.
pub fn run_evaluate(
    cfg: &RunConfig,
    ckpt: &Path,
    data: Option<&Path>,
    metrics: &[Metric],
    report_path: &Path,
) -> Result<EvalReport> {
    cfg.validate()?;
    let vocab = load_vocab(cfg)?;
    let (params, model) = load_checkpoint(ckpt, None)?;
    if model.vocab_size != vocab.len() {
        return Err(ConfigError::invalid(
            "paths.vocab",
            format!("{} entries but the checkpoint expects {}", vocab.len(), model.vocab_size),
        )
        .into());
    }
    let wants = |m: Metric| metrics.contains(&m);
    let needs_data = metrics.iter().any(|&m| m != Metric::Probe);
    let examples = match data {
        Some(p) if needs_data => read_examples(p)?.0,
        None if needs_data => bail!("--data is required for metrics other than probe"),
        _ => Vec::new(),
    };
    let mut report = EvalReport::default();
    let pool = pool(cfg.workers)?;
    pool.install(|| -> Result<()> {
        if wants(Metric::Em) || wants(Metric::F1) || wants(Metric::Bleu4) {
            let generative: Vec<TrainingExample> =
                examples.iter().filter(|e| !e.objective.is_contrastive()).cloned().collect();
            if generative.is_empty() {
                bail!("no generative examples in the data for em/f1/bleu4");
            }
            let all = eval_generation(&params, &generative, &vocab)?;
            report.exact_match = wants(Metric::Em).then_some(all.exact_match);
            report.token_f1 = wants(Metric::F1).then_some(all.token_f1);
            report.bleu4 = wants(Metric::Bleu4).then_some(all.bleu4);
            let objectives: BTreeSet<Objective> = generative.iter().map(|e| e.objective).collect();
            for o in objectives {
                let subset: Vec<TrainingExample> = generative.iter().filter(|e| e.objective == o).cloned().collect();
                report.generation.insert(o.name().into(), eval_generation(&params, &subset, &vocab)?);
            }
        }
        if wants(Metric::Disc) {
            let d = eval_discriminator(&params, &examples, &vocab)?;
            if d.n == 0 {
                bail!("no CONT_GENQA examples in the data for disc");
            }
            report.discriminator_accuracy = Some(d.accuracy);
            report.discriminator = Some(d);
        }
        if wants(Metric::Probe) {
            let path = require_file("eval.probe_data", cfg.eval.probe_data.as_ref())?;
            let sentences = read_sentences(path)?;
            let p = eval_cor_probe(&params, &sentences, &vocab, cfg.seed)?;
            report.cor_correction_accuracy = Some(p.accuracy);
            let name = path.file_stem().map_or("probe".into(), |s| s.to_string_lossy().into_owned());
            report.probe.insert(name, p);
        }
        Ok(())
    })?;
    let dir = report_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    create_dir(dir)?;
    write_json(report_path, &report)?;
    finish(
        cfg,
        dir,
        "evaluate",
        json!({
            "checkpoint": ckpt,
            "metrics": metrics.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "report": report_path,
            "examples": examples.len(),
            "discriminator_skipped": report.discriminator.as_ref().map(|d| d.skipped),
            "probe_skipped": report.probe.values().map(|p| p.skipped).sum::<usize>(),
        }),
    )?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub prompt: Vec<String>,
    pub output: Vec<String>,
    /// Prompt tokens missing from the vocabulary.
    pub unknown: usize,
}

/// Splits a prompt line on whitespace and prefixes `<c2s>` unless it already
/// starts with an objective prefix.
pub fn prompt_tokens(line: &str) -> Vec<String> {
    let mut tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
    if tokens.first().and_then(|t| Objective::from_prefix(t)).is_none() {
        tokens.insert(0, Objective::C2s.prefix().to_string());
    }
    tokens
}

/// Decodes every non-empty line of `prompts` and writes one JSON object per
/// line to `out_path`.
pub fn run_generate(cfg: &RunConfig, ckpt: &Path, prompts: &Path, max_len: usize, out_path: &Path) -> Result<Vec<Generation>> {
    cfg.validate()?;
    let vocab = load_vocab(cfg)?;
    let (params, model) = load_checkpoint(ckpt, None)?;
    let text = std::fs::read_to_string(prompts).with_context(|| format!("cannot read {}", prompts.display()))?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let prompt = prompt_tokens(line);
        let ids = vocab.encode(&prompt);
        if ids.len() > model.max_seq_len {
            bail!("prompt of {} tokens exceeds max_seq_len {}", ids.len(), model.max_seq_len);
        }
        let output = vocab.decode(&decode_greedy(&params, &ids, max_len)?);
        out.push(Generation {
            unknown: ids.iter().filter(|&&i| i == UNK_ID).count(),
            prompt,
            output,
        });
    }
    let dir = out_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    create_dir(dir)?;
    let mut body = String::new();
    for g in &out {
        body.push_str(&serde_json::to_string(g)?);
        body.push('\n');
    }
    std::fs::write(out_path, body).with_context(|| format!("cannot write {}", out_path.display()))?;
    finish(
        cfg,
        dir,
        "generate",
        json!({
            "prompts": out.len(),
            "unknown_tokens": out.iter().map(|g| g.unknown).sum::<usize>(),
            "output": out_path,
        }),
    )?;
    Ok(out)
}

/// Size of a synthetic world.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub nouns: usize,
    pub verbs: usize,
    pub triples: usize,
    pub holdout: f64,
}

/// Writes a synthetic world's splits as gold-tagged `train.jsonl` and
/// `held_out.jsonl`, plus the world itself as `world.json`.
pub fn run_world(cfg: &RunConfig, spec: WorldSpec) -> Result<Value> {
    let out = &cfg.paths.output_dir;
    create_dir(out)?;
    let w = build_synthetic_world_with(spec.nouns, spec.verbs, spec.triples, spec.holdout, cfg.seed)?;
    let train = out.join("train.jsonl");
    let held = out.join("held_out.jsonl");
    w.write_jsonl(Split::Train, &train)?;
    w.write_jsonl(Split::HeldOut, &held)?;
    write_json(&out.join("world.json"), &w)?;
    finish(
        cfg,
        out,
        "world",
        json!({
            "spec": spec,
            "train": w.train.len(),
            "held_out": w.held_out.len(),
            "outputs": {"train": train, "held_out": held},
        }),
    )
}

/// Default location of a stage's output inside the output directory.
pub fn default_output(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.paths.output_dir.join(name)
}

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use conceptlm::concepts::ConceptClasses;
use conceptlm::config::{Metric, RunConfig};
use conceptlm::corpus::InputFormat;
use conceptlm::objectives::{ContFormat, ObjectiveKind};
use conceptlm::pipeline::{self, WorldSpec};
use conceptlm::trainer::Stage;
use std::path::PathBuf;
use std::process::ExitCode;

/// Concept-centric pre-training pipeline: ingest, corrupt, pretrain, evaluate, generate.
#[derive(Parser, Debug)]
#[command(name = "conceptlm", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON run configuration. Without one, every section takes its default
    /// and --seed is required.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Threads for parallel phases; never changes output bytes (overrides `workers`).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Vocabulary file (overrides `paths.vocab`).
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment, tokenize and tag a corpus; write corpus.jsonl and the vocabulary.
    Ingest {
        /// Corpus file (overrides `paths.corpus`).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output directory (overrides `paths.output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_format)]
        format: Option<InputFormat>,
        /// Use tags supplied in JSONL input instead of the lexicon tagger.
        #[arg(long)]
        gold_tags: bool,
        /// Tagger lexicon (overrides `paths.lexicon`).
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Build training examples from tagged sentences; write examples.jsonl.
    Corrupt {
        /// Tagged sentences (default: corpus.jsonl in the output directory).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of c2s,cor,cont,ssm,infill.
        #[arg(long, value_delimiter = ',', value_parser = parse_objective)]
        objectives: Option<Vec<ObjectiveKind>>,
        /// both, nouns or verbs.
        #[arg(long, value_parser = parse_classes)]
        concept_classes: Option<ConceptClasses>,
        /// genqa, mc or tf.
        #[arg(long, value_parser = parse_cont_format)]
        cont_format: Option<ContFormat>,
        #[arg(long)]
        min_concepts: Option<usize>,
    },
    /// Run the mix warmup and/or joint stage; write a checkpoint and train_log.csv.
    Pretrain {
        /// Train plan JSON (replaces the config's `plan`).
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Examples JSONL (default: examples.jsonl in the output directory).
        #[arg(long)]
        data: Option<PathBuf>,
        /// mix, joint or both.
        #[arg(long, default_value = "both", value_parser = parse_stage)]
        stage: Stage,
        /// Checkpoint directory to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        stage1_steps: Option<u64>,
        #[arg(long)]
        stage2_steps: Option<u64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        lr_peak: Option<f64>,
    },
    /// Score a checkpoint; write a JSON report.
    Evaluate {
        /// Checkpoint directory.
        #[arg(long)]
        ckpt: PathBuf,
        /// Examples JSONL for em, f1, bleu4 and disc.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated subset of em,f1,bleu4,disc,probe (overrides `eval.metrics`).
        #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
        metrics: Option<Vec<Metric>>,
        /// Tagged sentences for the probe (overrides `eval.probe_data`).
        #[arg(long)]
        probe_data: Option<PathBuf>,
        /// Report path (default: report.json in the output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode one output per prompt line; a line without an objective prefix
    /// is read as a concept set.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Prompt file, one whitespace-tokenized input per line.
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long, default_value_t = 32)]
        max_len: usize,
        /// Output JSONL (default: generations.jsonl in the output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic relational world as gold-tagged train and held-out splits.
    World {
        #[arg(long, default_value_t = 20)]
        nouns: usize,
        #[arg(long, default_value_t = 5)]
        verbs: usize,
        #[arg(long, default_value_t = 80)]
        triples: usize,
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_format(s: &str) -> Result<InputFormat, String> {
    match s {
        "plain" | "plain_text" | "text" => Ok(InputFormat::PlainText),
        "jsonl" => Ok(InputFormat::Jsonl),
        _ => Err(format!("unknown format `{s}` (plain_text, jsonl)")),
    }
}

fn parse_objective(s: &str) -> Result<ObjectiveKind, String> {
    ObjectiveKind::parse(s).ok_or_else(|| format!("unknown objective `{s}` (c2s, cor, cont, ssm, infill)"))
}

fn parse_classes(s: &str) -> Result<ConceptClasses, String> {
    ConceptClasses::parse(s).ok_or_else(|| format!("unknown concept classes `{s}` (both, nouns, verbs)"))
}

fn parse_cont_format(s: &str) -> Result<ContFormat, String> {
    ContFormat::parse(s).ok_or_else(|| format!("unknown contrastive format `{s}` (genqa, mc, tf)"))
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    Stage::parse(s).ok_or_else(|| format!("unknown stage `{s}` (mix, joint, both)"))
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    Metric::parse(s).ok_or_else(|| format!("unknown metric `{s}` (em, f1, bleu4, disc, probe)"))
}

fn base_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match (&g.config, g.seed) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(seed)) => RunConfig::with_seed(seed),
        (None, None) => bail!("`seed`: required; pass --config or --seed"),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if let Some(v) = &g.vocab {
        cfg.paths.vocab = Some(v.clone());
    }
    Ok(cfg)
}

fn print(value: &impl serde::Serialize) -> Result<()> {
    emit(&serde_json::to_string_pretty(value)?)
}

fn emit(line: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli.global)?;
    let set_out = |cfg: &mut RunConfig, out: Option<PathBuf>| {
        if let Some(o) = out {
            cfg.paths.output_dir = o;
        }
    };
    match cli.command {
        Command::Ingest {
            corpus,
            out,
            format,
            gold_tags,
            lexicon,
        } => {
            set_out(&mut cfg, out);
            if corpus.is_some() {
                cfg.paths.corpus = corpus;
            }
            if format.is_some() {
                cfg.ingest.format = format;
            }
            if lexicon.is_some() {
                cfg.paths.lexicon = lexicon;
            }
            cfg.ingest.gold_tags |= gold_tags;
            print(&pipeline::run_ingest(&cfg)?)
        }
        Command::Corrupt {
            data,
            out,
            objectives,
            concept_classes,
            cont_format,
            min_concepts,
        } => {
            set_out(&mut cfg, out);
            let data = data.unwrap_or_else(|| pipeline::default_output(&cfg, "corpus.jsonl"));
            if let Some(o) = objectives {
                cfg.objectives.objectives = o;
            }
            if let Some(c) = concept_classes {
                cfg.objectives.concept_classes = c;
            }
            if let Some(f) = cont_format {
                cfg.objectives.cont_format = f;
            }
            if let Some(m) = min_concepts {
                cfg.objectives.min_concepts = m;
            }
            print(&pipeline::run_corrupt(&cfg, &data)?)
        }
        Command::Pretrain {
            plan,
            data,
            stage,
            resume,
            out,
            stage1_steps,
            stage2_steps,
            beta,
            lr_peak,
        } => {
            set_out(&mut cfg, out);
            let data = data.unwrap_or_else(|| pipeline::default_output(&cfg, "examples.jsonl"));
            if let Some(p) = plan {
                cfg.plan = pipeline::load_plan(&p)?;
            }
            if let Some(s) = stage1_steps {
                cfg.plan.stage1_steps = s;
            }
            if let Some(s) = stage2_steps {
                cfg.plan.stage2_steps = s;
            }
            if let Some(b) = beta {
                cfg.plan.beta = b;
            }
            if let Some(l) = lr_peak {
                cfg.plan.lr_peak = l;
            }
            print(&pipeline::run_pretrain(&cfg, &data, stage, resume.as_deref())?)
        }
        Command::Evaluate {
            ckpt,
            data,
            metrics,
            probe_data,
            out,
        } => {
            if let Some(m) = metrics {
                cfg.eval.metrics = m;
            }
            if probe_data.is_some() {
                cfg.eval.probe_data = probe_data;
            }
            let out = out.unwrap_or_else(|| pipeline::default_output(&cfg, "report.json"));
            let metrics = cfg.eval.metrics.clone();
            print(&pipeline::run_evaluate(&cfg, &ckpt, data.as_deref(), &metrics, &out)?)
        }
        Command::Generate {
            ckpt,
            prompts,
            max_len,
            out,
        } => {
            let out = out.unwrap_or_else(|| pipeline::default_output(&cfg, "generations.jsonl"));
            let gens = pipeline::run_generate(&cfg, &ckpt, &prompts, max_len, &out)?;
            for g in gens {
                emit(&format!("{}\t{}", g.prompt.join(" "), g.output.join(" ")))?;
            }
            Ok(())
        }
        Command::World {
            nouns,
            verbs,
            triples,
            holdout,
            out,
        } => {
            set_out(&mut cfg, out);
            let spec = WorldSpec {
                nouns,
                verbs,
                triples,
                holdout,
            };
            print(&pipeline::run_world(&cfg, spec).context("building world")?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

use crate::objectives::Objective;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Marker recorded when the joint stage runs without a preceding warmup.
pub const WITHOUT_WARMUP: &str = "w/o Mix warmup";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: String,
    pub step: u64,
    pub lr: f64,
    pub l_c2s: Option<f64>,
    pub l_cor: Option<f64>,
    /// Contrastive loss on shuffle-distractor examples (warmup stage).
    pub l_cont: Option<f64>,
    pub l_cont_c2s: Option<f64>,
    pub l_cont_cor: Option<f64>,
    pub l_ssm: Option<f64>,
    pub l_infill: Option<f64>,
    pub total: f64,
    pub generator: u64,
    pub shuffle: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<StepRecord>,
    /// Examples consumed per objective over the run.
    pub consumed: BTreeMap<Objective, u64>,
    pub generator_distractors: u64,
    pub shuffle_distractors: u64,
    /// Shuffle fallbacks caused by generated output equal to the gold sentence or empty.
    pub collisions: u64,
    /// Shuffle fallbacks caused by decoding errors.
    pub decode_failures: u64,
    pub markers: Vec<String>,
    pub wall_clock_secs: f64,
    pub checkpoint: Option<PathBuf>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl TrainReport {
    pub fn merge(&mut self, other: TrainReport) {
        self.records.extend(other.records);
        for (k, v) in other.consumed {
            *self.consumed.entry(k).or_default() += v;
        }
        self.generator_distractors += other.generator_distractors;
        self.shuffle_distractors += other.shuffle_distractors;
        self.collisions += other.collisions;
        self.decode_failures += other.decode_failures;
        for m in other.markers {
            if !self.markers.contains(&m) {
                self.markers.push(m);
            }
        }
        self.wall_clock_secs += other.wall_clock_secs;
        if other.checkpoint.is_some() {
            self.checkpoint = other.checkpoint;
        }
    }

    /// Mean total loss over records `range` of the given stage.
    pub fn mean_total(&self, stage: &str, range: std::ops::Range<usize>) -> Option<f64> {
        let recs: Vec<_> = self.records.iter().filter(|r| r.stage == stage).collect();
        let slice = recs.get(range)?;
        (!slice.is_empty()).then(|| slice.iter().map(|r| r.total).sum::<f64>() / slice.len() as f64)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "stage,step,lr,l_c2s,l_cor,l_cont,l_cont_c2s,l_cont_cor,l_ssm,l_infill,total,generator,shuffle"
        )?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.stage,
                r.step,
                r.lr,
                cell(r.l_c2s),
                cell(r.l_cor),
                cell(r.l_cont),
                cell(r.l_cont_c2s),
                cell(r.l_cont_cor),
                cell(r.l_ssm),
                cell(r.l_infill),
                r.total,
                r.generator,
                r.shuffle
            )?;
        }
        out.flush()
    }

    /// JSON summary without the per-step records.
    pub fn summary(&self) -> serde_json::Value {
        let last = self.records.last();
        serde_json::json!({
            "steps": self.records.len(),
            "final_total": last.map(|r| r.total),
            "consumed": self.consumed,
            "generator_distractors": self.generator_distractors,
            "shuffle_distractors": self.shuffle_distractors,
            "collisions": self.collisions,
            "decode_failures": self.decode_failures,
            "markers": self.markers,
            "wall_clock_secs": self.wall_clock_secs,
            "checkpoint": self.checkpoint,
        })
    }
}

use super::data::{encode_example, Dataset, JointGroup};
use super::optim::AdamW;
use super::report::{StepRecord, TrainReport, WITHOUT_WARMUP};
use super::{loss_total, lr_schedule, JointMode, TrainError, TrainPlan};
use crate::concepts::{child_seed, SeededRng};
use crate::model::{backward, decode_greedy, default_max_len, forward_loss, ParameterStore, Seq2Seq};
use crate::objectives::{contrastive_from_tokens, Distractor, DistractorOrigin, Objective};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

/// Which stages `pretrain` runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Mix,
    Joint,
    #[default]
    Both,
}

impl Stage {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mix" => Some(Self::Mix),
            "joint" => Some(Self::Joint),
            "both" => Some(Self::Both),
            _ => None,
        }
    }
}

/// The shared parameter store with its optimizer state and global step.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub params: ParameterStore<f32>,
    pub optimizer: AdamW<f32>,
    /// Optimizer steps taken so far; drives the learning-rate schedule.
    pub step: u64,
    /// Set once a warmup stage has run or a trained checkpoint was loaded.
    pub warm_started: bool,
}

impl Trainer {
    pub fn new(params: ParameterStore<f32>, plan: &TrainPlan) -> Self {
        Self {
            params,
            optimizer: AdamW::new(plan),
            step: 0,
            warm_started: false,
        }
    }
}

/// Index pool reshuffled at the start of every pass.
struct Pool {
    items: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    seed: u64,
}

impl Pool {
    fn new(items: Vec<usize>, seed: u64) -> Self {
        let mut p = Self {
            items,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
            seed,
        };
        p.reshuffle();
        p
    }

    fn reshuffle(&mut self) {
        let mut rng = SeededRng::new(child_seed(self.seed, &format!("epoch{}", self.epoch)));
        self.order = crate::concepts::permute(&self.items, &mut rng, false);
        self.cursor = 0;
    }

    fn next(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.epoch += 1;
            self.reshuffle();
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }
}

fn resolve_weights(plan: &TrainPlan, ds: &Dataset) -> Result<Vec<(Objective, f64)>, TrainError> {
    if plan.mix_weights.is_empty() {
        return Ok(ds.objectives().into_iter().map(|o| (o, 1.0)).collect());
    }
    let mut out = Vec::new();
    for (&o, &w) in &plan.mix_weights {
        if w > 0.0 {
            if ds.count(o) == 0 {
                return Err(TrainError::InvalidPlan(format!(
                    "mix weight {w} for {o} but the dataset has no {o} examples"
                )));
            }
            out.push((o, w));
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Mean {
    nll: f64,
    tokens: usize,
}

impl Mean {
    fn get(&self) -> Option<f64> {
        (self.tokens > 0).then(|| self.nll / self.tokens as f64)
    }
}

fn check_finite(v: f64, name: &'static str) -> Result<f64, TrainError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(TrainError::NonFiniteLoss(name))
    }
}

/// Multi-task warmup: each batch slot draws an objective by `plan.mix_weights`
/// and takes the next example of that objective.
pub fn stage_mix(trainer: &mut Trainer, ds: &Dataset, plan: &TrainPlan, steps: u64) -> Result<TrainReport, TrainError> {
    plan.validate()?;
    let start = Instant::now();
    let mut report = TrainReport::default();
    if steps == 0 {
        return Ok(report);
    }
    let weights = resolve_weights(plan, ds)?;
    if weights.is_empty() || ds.is_empty() {
        return Err(TrainError::EmptyDataset("stage_mix"));
    }
    let total_w: f64 = weights.iter().map(|w| w.1).sum();
    let base = trainer.step;
    let mut pools: BTreeMap<Objective, Pool> = weights
        .iter()
        .map(|&(o, _)| {
            let seed = child_seed(plan.seed, &format!("mix.pool.{}.{base}", o.name()));
            (o, Pool::new(ds.by_objective[&o].clone(), seed))
        })
        .collect();
    let mut picker = SeededRng::new(child_seed(plan.seed, &format!("mix.objectives.{base}")));
    let mut grads = trainer.params.zeros_like();
    for _ in 0..steps {
        let step = trainer.step;
        let lr = lr_schedule(step + 1, plan);
        grads.zero();
        let mut comps: BTreeMap<&'static str, Mean> = BTreeMap::new();
        let mut total = 0.0;
        for micro in 0..plan.grad_accum {
            let mut idx = Vec::with_capacity(plan.batch_size);
            for _ in 0..plan.batch_size {
                let mut r = picker.unit() * total_w;
                let mut chosen = weights[weights.len() - 1].0;
                for &(o, w) in &weights {
                    if r < w {
                        chosen = o;
                        break;
                    }
                    r -= w;
                }
                idx.push(pools.get_mut(&chosen).expect("pool per weighted objective").next());
            }
            let batch: Vec<Seq2Seq> = idx.iter().map(|&i| ds.encoded[i].clone()).collect();
            let mut drop = SeededRng::new(child_seed(plan.seed, &format!("mix.dropout.{step}.{micro}")));
            let (loss, trace) = forward_loss(&trainer.params, &batch, Some(&mut drop))?;
            for (&i, s) in idx.iter().zip(trace.example_scores()) {
                let o = ds.examples[i].objective;
                *report.consumed.entry(o).or_default() += 1;
                let key = match o {
                    Objective::C2s => "c2s",
                    Objective::Cor => "cor",
                    Objective::Ssm => "ssm",
                    Objective::Infill => "infill",
                    _ => "cont",
                };
                let m = comps.entry(key).or_default();
                m.nll -= s.log_likelihood;
                m.tokens += s.tokens;
            }
            total += check_finite(loss as f64, "total")? / plan.grad_accum as f64;
            backward(&trainer.params, trace, 1.0 / plan.grad_accum as f32, &mut grads)?;
        }
        trainer.optimizer.step(&mut trainer.params, &grads, lr)?;
        trainer.step += 1;
        let get = |k: &str| comps.get(k).and_then(Mean::get);
        report.records.push(StepRecord {
            stage: "mix".into(),
            step,
            lr,
            l_c2s: get("c2s"),
            l_cor: get("cor"),
            l_cont: get("cont"),
            l_ssm: get("ssm"),
            l_infill: get("infill"),
            total,
            ..StepRecord::default()
        });
    }
    trainer.warm_started = true;
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    C2s,
    Cor,
}

impl Role {
    fn label(self) -> &'static str {
        match self {
            Role::C2s => "c2s",
            Role::Cor => "cor",
        }
    }

    fn example(self, g: &JointGroup) -> usize {
        match self {
            Role::C2s => g.c2s,
            Role::Cor => g.cor,
        }
    }
}

#[derive(Default)]
struct Origins {
    generator: u64,
    shuffle: u64,
    collisions: u64,
    failures: u64,
}

/// Contrastive examples for one role, using generated distractors where usable.
fn build_contrastive(
    trainer: &Trainer,
    ds: &Dataset,
    plan: &TrainPlan,
    groups: &[&JointGroup],
    role: Role,
    tag: &str,
    origins: &mut Origins,
) -> Vec<Seq2Seq> {
    let decoded: Vec<_> = groups
        .par_iter()
        .map(|g| {
            let src = &ds.encoded[role.example(g)].src;
            decode_greedy(&trainer.params, src, default_max_len(g.gold_ids.len()))
        })
        .collect();
    groups
        .iter()
        .zip(decoded)
        .enumerate()
        .map(|(i, (g, out))| {
            let meta = ds.examples[role.example(g)].meta.clone();
            let shuffle = Distractor {
                tokens: g.shuffle.clone(),
                origin: DistractorOrigin::Shuffle,
            };
            let pair_seed = child_seed(plan.seed, &format!("joint.pair.{tag}.{i}.{}", role.label()));
            let build = |d: &Distractor| {
                contrastive_from_tokens(&g.gold, d, &mut SeededRng::new(pair_seed), plan.cont_format, meta.clone())
                    .ok()
                    .map(|ex| encode_example(&ex, &ds.vocab))
                    .filter(|s| s.validate(&ds.model).is_ok())
            };
            let generated = match out {
                Ok(ids) if ids.is_empty() || ids == g.gold_ids => {
                    origins.collisions += 1;
                    None
                }
                Ok(ids) => {
                    let d = Distractor {
                        tokens: ds.vocab.decode(&ids),
                        origin: DistractorOrigin::Generator,
                    };
                    let built = build(&d);
                    if built.is_none() {
                        origins.failures += 1;
                    }
                    built
                }
                Err(_) => {
                    origins.failures += 1;
                    None
                }
            };
            match generated {
                Some(seq) => {
                    origins.generator += 1;
                    seq
                }
                None => {
                    origins.shuffle += 1;
                    build(&shuffle).expect("joint groups are built so the shuffle pair fits")
                }
            }
        })
        .collect()
}

fn joint_like(
    trainer: &mut Trainer,
    ds: &Dataset,
    plan: &TrainPlan,
    steps: u64,
    contrastive: bool,
) -> Result<TrainReport, TrainError> {
    plan.validate()?;
    let start = Instant::now();
    let mut report = TrainReport::default();
    if steps == 0 {
        return Ok(report);
    }
    if ds.groups.is_empty() {
        return Err(TrainError::EmptyDataset("stage_joint"));
    }
    if !trainer.warm_started {
        report.markers.push(WITHOUT_WARMUP.to_string());
    }
    let base = trainer.step;
    let mut pool = Pool::new(
        (0..ds.groups.len()).collect(),
        child_seed(plan.seed, &format!("joint.groups.{base}")),
    );
    let stage = if contrastive { "joint" } else { "generative" };
    let ga = plan.grad_accum as f64;
    let mut grads = trainer.params.zeros_like();
    for _ in 0..steps {
        let step = trainer.step;
        let lr = lr_schedule(step + 1, plan);
        grads.zero();
        let roles: Vec<Role> = match plan.joint_mode {
            JointMode::Sum => vec![Role::C2s, Role::Cor],
            JointMode::RandomOne => {
                let mut r = SeededRng::new(child_seed(plan.seed, &format!("joint.role.{step}")));
                vec![if r.coin() { Role::C2s } else { Role::Cor }]
            }
        };
        let mut sums = [0.0f64; 4];
        let mut origins = Origins::default();
        for micro in 0..plan.grad_accum {
            let groups: Vec<&JointGroup> = (0..plan.batch_size).map(|_| &ds.groups[pool.next()]).collect();
            let dropout = |name: &str| SeededRng::new(child_seed(plan.seed, &format!("joint.dropout.{step}.{micro}.{name}")));
            for (k, role) in [Role::C2s, Role::Cor].into_iter().enumerate() {
                let batch: Vec<Seq2Seq> = groups.iter().map(|g| ds.encoded[role.example(g)].clone()).collect();
                let (loss, trace) = forward_loss(&trainer.params, &batch, Some(&mut dropout(role.label())))?;
                sums[k] += loss as f64 / ga;
                backward(&trainer.params, trace, (1.0 / ga) as f32, &mut grads)?;
                let objective = if role == Role::C2s { Objective::C2s } else { Objective::Cor };
                *report.consumed.entry(objective).or_default() += batch.len() as u64;
            }
            if !contrastive {
                continue;
            }
            let tag = format!("{step}.{micro}");
            let mut built = Vec::new();
            for &role in &roles {
                built.push((role, build_contrastive(trainer, ds, plan, &groups, role, &tag, &mut origins)));
            }
            for (role, batch) in built {
                let k = if role == Role::C2s { 2 } else { 3 };
                let name = if k == 2 { "cont_c2s" } else { "cont_cor" };
                let (loss, trace) = forward_loss(&trainer.params, &batch, Some(&mut dropout(name)))?;
                sums[k] += loss as f64 / ga;
                *report.consumed.entry(plan.cont_format.objective()).or_default() += batch.len() as u64;
                if plan.beta != 0.0 {
                    backward(&trainer.params, trace, (plan.beta / ga) as f32, &mut grads)?;
                }
            }
        }
        trainer.optimizer.step(&mut trainer.params, &grads, lr)?;
        trainer.step += 1;
        let has = |r: Role| contrastive && roles.contains(&r);
        let l_cont_c2s = has(Role::C2s).then_some(sums[2]);
        let l_cont_cor = has(Role::Cor).then_some(sums[3]);
        let total = loss_total(
            check_finite(sums[0], "l_c2s")?,
            check_finite(sums[1], "l_cor")?,
            check_finite(l_cont_c2s.unwrap_or(0.0), "l_cont_c2s")?,
            check_finite(l_cont_cor.unwrap_or(0.0), "l_cont_cor")?,
            if contrastive { plan.beta } else { 0.0 },
        )?;
        report.generator_distractors += origins.generator;
        report.shuffle_distractors += origins.shuffle;
        report.collisions += origins.collisions;
        report.decode_failures += origins.failures;
        report.records.push(StepRecord {
            stage: stage.into(),
            step,
            lr,
            l_c2s: Some(sums[0]),
            l_cor: Some(sums[1]),
            l_cont_c2s,
            l_cont_cor,
            total,
            generator: origins.generator,
            shuffle: origins.shuffle,
            ..StepRecord::default()
        });
    }
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Joint stage: the current parameters decode a distractor from each C2S and
/// COR source, and one update minimises the generative losses plus `beta`
/// times the contrastive losses on those distractors.
pub fn stage_joint(trainer: &mut Trainer, ds: &Dataset, plan: &TrainPlan, steps: u64) -> Result<TrainReport, TrainError> {
    joint_like(trainer, ds, plan, steps, true)
}

/// The joint stage's generative terms alone, drawing the same batches and
/// dropout masks.
pub fn stage_generative(
    trainer: &mut Trainer,
    ds: &Dataset,
    plan: &TrainPlan,
    steps: u64,
) -> Result<TrainReport, TrainError> {
    joint_like(trainer, ds, plan, steps, false)
}

/// Runs the selected stages with the plan's step counts.
pub fn pretrain(trainer: &mut Trainer, ds: &Dataset, plan: &TrainPlan, stage: Stage) -> Result<TrainReport, TrainError> {
    let mut report = TrainReport::default();
    if matches!(stage, Stage::Mix | Stage::Both) {
        report.merge(stage_mix(trainer, ds, plan, plan.stage1_steps)?);
    }
    if matches!(stage, Stage::Joint | Stage::Both) {
        report.merge(stage_joint(trainer, ds, plan, plan.stage2_steps)?);
    }
    Ok(report)
}

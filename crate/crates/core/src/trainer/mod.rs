//! Two-stage training: a multi-task warmup over prefixed objectives, then a
//! joint stage in which the model generates distractors for its own
//! discriminator. Generator and discriminator are the same parameter store.

mod data;
mod optim;
mod report;
mod stages;

pub use data::{Dataset, JointGroup};
pub use optim::AdamW;
pub use report::{StepRecord, TrainReport, WITHOUT_WARMUP};
pub use stages::{pretrain, stage_generative, stage_joint, stage_mix, Stage, Trainer};

use crate::model::ModelError;
use crate::objectives::{ContFormat, Objective};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid train plan: {0}")]
    InvalidPlan(String),
    #[error("{0}: dataset has no usable examples")]
    EmptyDataset(&'static str),
    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: String },
    #[error("non-finite loss component {0}")]
    NonFiniteLoss(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the joint stage uses the two generated distractors per sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointMode {
    /// Both contrastive terms every step.
    #[default]
    Sum,
    /// One term per step, picked at random between the C2S and COR distractor.
    RandomOne,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPlan {
    pub beta: f64,
    pub stage1_steps: u64,
    pub stage2_steps: u64,
    /// Sampling weight per objective; empty means equal weight for every
    /// objective present in the data.
    pub mix_weights: BTreeMap<Objective, f64>,
    pub lr_peak: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub seed: u64,
    pub joint_mode: JointMode,
    /// Layout of contrastive examples built from generated distractors.
    pub cont_format: ContFormat,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            beta: 1.0,
            stage1_steps: 2000,
            stage2_steps: 500,
            mix_weights: BTreeMap::new(),
            lr_peak: 3e-4,
            warmup_steps: 200,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 16,
            grad_accum: 1,
            seed: 0,
            joint_mode: JointMode::Sum,
            cont_format: ContFormat::Genqa,
        }
    }
}

impl TrainPlan {
    /// Large-scale preset: 10k warmup steps, weight decay 0.01.
    pub fn large_scale() -> Self {
        Self {
            warmup_steps: 10_000,
            weight_decay: 0.01,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidPlan(m));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be finite and non-negative, got {}", self.beta));
        }
        if self.mix_weights.values().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("mix weights must be finite and non-negative".into());
        }
        if !self.mix_weights.is_empty() && self.mix_weights.values().all(|w| *w == 0.0) {
            return bad("mix weights are all zero".into());
        }
        if self.batch_size == 0 || self.grad_accum == 0 {
            return bad("batch_size and grad_accum must be positive".into());
        }
        if !(self.lr_peak >= 0.0 && self.lr_peak.is_finite()) {
            return bad(format!("lr_peak must be finite and non-negative, got {}", self.lr_peak));
        }
        if !(self.weight_decay >= 0.0) || !(self.adam_eps > 0.0) {
            return bad("weight_decay must be non-negative and adam_eps positive".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Joint objective: generative terms plus `beta` times the contrastive terms.
pub fn loss_total(l_c2s: f64, l_cor: f64, l_cont_c2s: f64, l_cont_cor: f64, beta: f64) -> Result<f64, TrainError> {
    for (name, v) in [
        ("l_c2s", l_c2s),
        ("l_cor", l_cor),
        ("l_cont_c2s", l_cont_c2s),
        ("l_cont_cor", l_cont_cor),
        ("beta", beta),
    ] {
        if !v.is_finite() {
            return Err(TrainError::NonFiniteLoss(name));
        }
    }
    if beta < 0.0 {
        return Err(TrainError::InvalidPlan(format!("beta must be non-negative, got {beta}")));
    }
    Ok((l_c2s + l_cor) + beta * (l_cont_c2s + l_cont_cor))
}

/// Linear warmup to `lr_peak`, then `lr_peak * sqrt(warmup / step)`.
/// Without warmup the rate is constant.
pub fn lr_schedule(step: u64, plan: &TrainPlan) -> f64 {
    let w = plan.warmup_steps;
    if w == 0 {
        plan.lr_peak
    } else if step < w {
        plan.lr_peak * step as f64 / w as f64
    } else {
        plan.lr_peak * (w as f64 / step as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_total_examples() {
        assert_eq!(loss_total(1.5, 2.0, 9.0, 7.0, 0.0).unwrap(), 3.5);
        assert_eq!(loss_total(1.0, 1.0, 1.0, 1.0, 1.0).unwrap(), 4.0);
        assert!(loss_total(f64::NAN, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(loss_total(1.0, 1.0, f64::INFINITY, 1.0, 1.0).is_err());
        assert!(loss_total(1.0, 1.0, 1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn schedule_shape() {
        let plan = TrainPlan {
            lr_peak: 1e-3,
            warmup_steps: 200,
            ..TrainPlan::default()
        };
        assert_eq!(lr_schedule(0, &plan), 0.0);
        assert!((lr_schedule(100, &plan) - 5e-4).abs() < 1e-12);
        assert_eq!(lr_schedule(200, &plan), 1e-3);
        assert!((lr_schedule(800, &plan) - 5e-4).abs() < 1e-12);
        let flat = TrainPlan {
            warmup_steps: 0,
            ..plan
        };
        assert_eq!(lr_schedule(0, &flat), 1e-3);
    }

    #[test]
    fn plan_validation() {
        assert!(TrainPlan::default().validate().is_ok());
        let bad = TrainPlan {
            beta: -1.0,
            ..TrainPlan::default()
        };
        assert!(bad.validate().is_err());
        let zero = TrainPlan {
            mix_weights: [(Objective::C2s, 0.0)].into_iter().collect(),
            ..TrainPlan::default()
        };
        assert!(zero.validate().is_err());
        let json = r#"{"beta":0.5,"mix_weights":{"C2S":1.0,"COR":0.0}}"#;
        let p: TrainPlan = serde_json::from_str(json).unwrap();
        assert_eq!(p.beta, 0.5);
        assert_eq!(p.mix_weights[&Objective::C2s], 1.0);
    }
}

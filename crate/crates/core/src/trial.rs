//! Train-then-evaluate trial shared by candidate screening and ensembles.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::eval::{evaluate_policy, ConfusionCounts, EvalConfig, EvalReport, Metrics};
use crate::grpo::{train_trial, GrpoConfig, StepLog, TrialError};
use crate::policy::{PolicyParams, SlotSchema};
use crate::rewards::RewardFn;
use crate::tasks::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub name: String,
    pub status: TrialStatus,
    pub seed: u64,
    pub steps: usize,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub metrics_flex: Metrics,
    /// Strict-parse correctness per test question, in dataset order.
    pub correct: Vec<bool>,
    pub correct_flex: Vec<bool>,
}

impl TrialResult {
    pub fn failed(name: &str, cfg: &GrpoConfig, reason: String) -> Self {
        TrialResult {
            name: name.to_string(),
            status: TrialStatus::Failed { reason },
            seed: cfg.seed,
            steps: cfg.steps,
            counts: ConfusionCounts::default(),
            metrics: Metrics::default(),
            metrics_flex: Metrics::default(),
            correct: Vec::new(),
            correct_flex: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub params: Option<PolicyParams<f64>>,
    pub step_log: Vec<StepLog>,
    pub eval: Option<EvalReport>,
}

/// Trains a fresh uniform policy on `bundle` and evaluates it on `test`.
///
/// Reward faults produce a failed outcome; configuration problems are errors.
pub fn run_trial(
    name: &str,
    bundle: &[Arc<dyn RewardFn>],
    grpo: &GrpoConfig,
    eval: &EvalConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<TrialOutcome, TrialError> {
    let init = PolicyParams::<f64>::zeros(&SlotSchema::default());
    match train_trial(bundle, grpo, train, init) {
        Ok((params, step_log)) => {
            let report = evaluate_policy(&params, test, eval);
            let result = TrialResult {
                name: name.to_string(),
                status: TrialStatus::Ok,
                seed: grpo.seed,
                steps: grpo.steps,
                counts: report.strict.counts,
                metrics: report.strict.metrics,
                metrics_flex: report.flexible.metrics,
                correct: report.strict.correct.clone(),
                correct_flex: report.flexible.correct.clone(),
            };
            Ok(TrialOutcome {
                result,
                params: Some(params),
                step_log,
                eval: Some(report),
            })
        }
        Err(TrialError::Reward(fault)) => Ok(TrialOutcome {
            result: TrialResult::failed(name, grpo, fault.to_string()),
            params: None,
            step_log: Vec::new(),
            eval: None,
        }),
        Err(e) => Err(e),
    }
}

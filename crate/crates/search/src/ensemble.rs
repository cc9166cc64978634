//! Ensembles: base rewards plus K pool members, summed element-wise.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rewardsmith_core::eval::EvalConfig;
use rewardsmith_core::grpo::TrialError;
use rewardsmith_core::rewards::{base_rewards, builtin, is_protected, RewardFn, SumReward};
use rewardsmith_core::trial::{run_trial, TrialOutcome};
use rewardsmith_core::{Dataset, GrpoConfig};
use rewardsmith_lang::sandbox::load;
use rewardsmith_lang::SandboxLimits;
use serde::{Deserialize, Serialize};

use crate::pool::RewardPool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum Selection {
    TopK { k: usize },
    DiverseRounds,
    RandomK { k: usize, seed: u64 },
    Explicit { members: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub name: String,
    pub selection: Selection,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnsembleError {
    #[error("asked for {k} members but the pool has {available} usable rewards")]
    TooFew { k: usize, available: usize },
    #[error("unknown reward {0}")]
    Unknown(String),
    #[error("{0} is a base reward and is always included")]
    Protected(String),
    #[error("pool reward {name} failed to load: {reason}")]
    Load { name: String, reason: String },
}

/// Member names chosen from the usable part of the pool.
pub fn select_members(pool: &RewardPool, selection: &Selection) -> Result<Vec<String>, EnsembleError> {
    let usable = pool.usable();
    let names = |v: Vec<&crate::pool::PoolEntry>| v.into_iter().map(|e| e.name().to_string()).collect();
    match selection {
        Selection::TopK { k } => {
            if *k > usable.len() {
                return Err(EnsembleError::TooFew { k: *k, available: usable.len() });
            }
            Ok(names(usable[..*k].to_vec()))
        }
        Selection::DiverseRounds => {
            let mut best = BTreeMap::new();
            for e in usable {
                best.entry(e.program.round).or_insert(e);
            }
            Ok(names(best.into_values().collect()))
        }
        Selection::RandomK { k, seed } => {
            if *k > usable.len() {
                return Err(EnsembleError::TooFew { k: *k, available: usable.len() });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(sample(&mut rng, usable.len(), *k).into_iter().map(|i| usable[i].name().to_string()).collect())
        }
        Selection::Explicit { members } => {
            for m in members {
                if is_protected(m) {
                    return Err(EnsembleError::Protected(m.clone()));
                }
            }
            Ok(members.clone())
        }
    }
}

/// Looks a member up in the pool, falling back to the built-in rewards.
pub fn resolve(pool: &RewardPool, name: &str, limits: SandboxLimits) -> Result<Arc<dyn RewardFn>, EnsembleError> {
    if is_protected(name) {
        return Err(EnsembleError::Protected(name.to_string()));
    }
    if let Some(e) = pool.get(name) {
        if !e.is_usable() {
            return Err(EnsembleError::Unknown(name.to_string()));
        }
        return load(&e.program, limits)
            .map(|g| Arc::new(g) as Arc<dyn RewardFn>)
            .map_err(|r| EnsembleError::Load { name: name.to_string(), reason: r.reason });
    }
    builtin(name).ok_or_else(|| EnsembleError::Unknown(name.to_string()))
}

/// Base rewards plus `members` as one evaluator.
pub fn combine(name: &str, members: Vec<Arc<dyn RewardFn>>) -> SumReward {
    let mut all = base_rewards();
    all.extend(members);
    SumReward::new(name, all)
}

#[derive(Debug, thiserror::Error)]
pub enum EnsembleRunError {
    #[error(transparent)]
    Select(#[from] EnsembleError),
    #[error(transparent)]
    Trial(#[from] TrialError),
}

pub struct EnsembleRun {
    pub members: Vec<String>,
    pub outcome: TrialOutcome,
}

pub fn train_ensemble(
    config: &EnsembleConfig,
    pool: &RewardPool,
    limits: SandboxLimits,
    grpo: &GrpoConfig,
    eval: &EvalConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<EnsembleRun, EnsembleRunError> {
    let members = select_members(pool, &config.selection)?;
    let rewards = members.iter().map(|m| resolve(pool, m, limits)).collect::<Result<Vec<_>, _>>()?;
    let combined: Arc<dyn RewardFn> = Arc::new(combine(&config.name, rewards));
    let outcome = run_trial(&config.name, &[combined], grpo, eval, train, test)?;
    Ok(EnsembleRun { members, outcome })
}

//! The search loop: generate, validate, screen, rank, feed back.

use std::collections::HashSet;
use std::io;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rewardsmith_core::eval::EvalConfig;
use rewardsmith_core::grpo::TrialError;
use rewardsmith_core::rewards::{base_rewards, is_protected, RewardFn};
use rewardsmith_core::trial::run_trial;
use rewardsmith_core::{Dataset, GrpoConfig, Task};
use rewardsmith_lang::{validate, RewardProgram, SandboxLimits, Status};
use serde::{Deserialize, Serialize};

use crate::config::SearchConfig;
use crate::generator::{Candidate, Generator, GeneratorRequest};
use crate::pool::{read_json, write_json, PoolDir, PoolEntry, RewardPool};
use crate::prompt::build_prompt;

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("pool storage: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Trial(#[from] TrialError),
}

/// What a round asked for and got back. Stored before screening so a resumed
/// run replays the same candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub prompt: String,
    pub candidates: Vec<Candidate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchEvent {
    Round(u32),
    GeneratorFailed { round: u32, message: String },
    Dropped { name: String, reason: String },
    Rejected { name: String, stage: u8, reason: String },
    Screened { name: String, ok: bool, f1: f64, accuracy: f64, seed: u64, wall_ms: u128 },
    Skipped { name: String },
}

pub struct SearchRun<'a> {
    pub cfg: &'a SearchConfig,
    /// Screening uses these settings with `steps` taken from `cfg`.
    pub grpo: &'a GrpoConfig,
    pub eval: &'a EvalConfig,
    pub limits: SandboxLimits,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Complete(RewardPool),
    /// Stopped at a trial boundary because the trial budget ran out.
    Interrupted(RewardPool),
}

impl SearchOutcome {
    pub fn pool(&self) -> &RewardPool {
        match self {
            SearchOutcome::Complete(p) | SearchOutcome::Interrupted(p) => p,
        }
    }
}

pub fn sample_tasks(train: &Dataset, count: usize, seed: u64, round: u32) -> Vec<Task> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(u64::from(round).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    let n = count.min(train.len());
    let mut idx = sample(&mut rng, train.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| train.tasks[i].clone()).collect()
}

/// Drops candidates that reuse a protected name, a pool name or an earlier
/// name in the same response, then keeps the first `limit`.
pub fn dedupe(candidates: &[Candidate], pool_names: &HashSet<String>, limit: usize) -> (Vec<Candidate>, Vec<(String, String)>) {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for c in candidates {
        let reason = if is_protected(&c.name) {
            Some("protected name")
        } else if pool_names.contains(&c.name) {
            Some("duplicate of a pool entry")
        } else if !seen.insert(c.name.clone()) {
            Some("duplicate within response")
        } else if kept.len() >= limit {
            Some("over the per-round quota")
        } else {
            None
        };
        match reason {
            Some(r) => dropped.push((c.name.clone(), r.to_string())),
            None => kept.push(c.clone()),
        }
    }
    (kept, dropped)
}

/// Validates and screens one candidate into a pool entry.
pub fn screen(
    run: &SearchRun<'_>,
    program: RewardProgram,
) -> Result<(PoolEntry, Vec<rewardsmith_core::StepLog>), TrialError> {
    let mut program = program;
    let Some(guarded) = validate(&mut program, run.limits) else {
        return Ok((PoolEntry { program, result: None, rank: 0 }, Vec::new()));
    };
    let grpo = GrpoConfig { steps: run.cfg.steps, ..run.grpo.clone() };
    let mut bundle = base_rewards();
    bundle.push(Arc::new(guarded) as Arc<dyn RewardFn>);
    let out = run_trial(&program.name, &bundle, &grpo, run.eval, run.train, run.test)?;
    Ok((
        PoolEntry {
            program,
            result: Some(out.result),
            rank: 0,
        },
        out.step_log,
    ))
}

/// Runs or resumes the search in `dir`. `budget` caps the number of
/// candidates processed in this invocation.
pub fn run_search(
    run: &SearchRun<'_>,
    generator: &dyn Generator,
    dir: &Path,
    mut budget: Option<usize>,
    on_event: &mut dyn FnMut(&SearchEvent),
) -> Result<SearchOutcome, SearchError> {
    run.cfg.check().map_err(SearchError::Config)?;
    let store = PoolDir::new(dir);
    let mut pool = store.load()?;
    for round in 1..=run.cfg.rounds as u32 {
        on_event(&SearchEvent::Round(round));
        let record = match store.round_path(round) {
            p if p.exists() => read_json::<RoundRecord>(&p)?,
            p => {
                let earlier = RewardPool {
                    entries: pool.entries.iter().filter(|e| e.program.round < round).cloned().collect(),
                };
                let samples = sample_tasks(run.train, run.cfg.sample_questions_per_prompt, run.cfg.seed, round);
                let prompt = build_prompt(&earlier.history_before(round), &samples, &earlier.names(), run.cfg.per_round);
                let req = GeneratorRequest {
                    round,
                    prompt: prompt.clone(),
                    count: run.cfg.per_round,
                    temperature: run.cfg.temperature,
                    max_tokens: run.cfg.max_generation_tokens,
                };
                let record = match generator.generate(&req) {
                    Ok(candidates) => RoundRecord { round, prompt, candidates, error: None },
                    Err(e) => RoundRecord { round, prompt, candidates: Vec::new(), error: Some(e.to_string()) },
                };
                write_json(&p, &record)?;
                record
            }
        };
        if let Some(message) = &record.error {
            on_event(&SearchEvent::GeneratorFailed { round, message: message.clone() });
        }
        let earlier: HashSet<String> = pool
            .entries
            .iter()
            .filter(|e| e.program.round < round)
            .map(|e| e.name().to_string())
            .collect();
        let (kept, dropped) = dedupe(&record.candidates, &earlier, run.cfg.per_round);
        for (name, reason) in dropped {
            on_event(&SearchEvent::Dropped { name, reason });
        }
        for c in kept {
            if pool.contains(&c.name) {
                on_event(&SearchEvent::Skipped { name: c.name });
                continue;
            }
            if let Some(b) = budget.as_mut() {
                if *b == 0 {
                    store.write_index(&pool)?;
                    return Ok(SearchOutcome::Interrupted(pool));
                }
                *b -= 1;
            }
            let start = Instant::now();
            let (entry, steps) = screen(run, RewardProgram::new(&c.name, &c.code, &c.description, round))?;
            store.persist(&entry, &steps)?;
            match (&entry.program.status, &entry.result) {
                (Status::Rejected { stage, reason }, _) => on_event(&SearchEvent::Rejected {
                    name: c.name.clone(),
                    stage: stage.number(),
                    reason: reason.clone(),
                }),
                (_, Some(r)) => on_event(&SearchEvent::Screened {
                    name: c.name.clone(),
                    ok: r.is_ok(),
                    f1: r.metrics.f1,
                    accuracy: r.metrics.accuracy,
                    seed: r.seed,
                    wall_ms: start.elapsed().as_millis(),
                }),
                _ => {}
            }
            pool.entries.push(entry);
            pool.rerank();
            store.write_index(&pool)?;
        }
        pool.rerank();
        store.write_index(&pool)?;
    }
    Ok(SearchOutcome::Complete(pool))
}

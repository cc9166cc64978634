//! End-to-end training direction on the synthetic benchmark at T = 500.

use std::sync::Arc;

use rewardsmith_core::eval::EvalConfig;
use rewardsmith_core::policy::{SlotSchema, SLOT_ANSWER};
use rewardsmith_core::rewards::{base_rewards, builtin, RewardFn};
use rewardsmith_core::tasks::{generate_dataset, Dataset};
use rewardsmith_core::trial::{run_trial, TrialOutcome};
use rewardsmith_core::{GrpoConfig, PolicyParams};

fn bundle(extra: &[&str]) -> Vec<Arc<dyn RewardFn>> {
    let mut b = base_rewards();
    b.extend(extra.iter().map(|n| builtin(n).unwrap()));
    b
}

fn data() -> (Dataset, Dataset) {
    generate_dataset(3407, 7473, 1319)
}

fn run(extra: &[&str], train: &Dataset, test: &Dataset) -> TrialOutcome {
    run_trial("t", &bundle(extra), &GrpoConfig::default(), &EvalConfig::default(), train, test).unwrap()
}

#[test]
fn base_training_raises_exact_probability() {
    let (train, test) = data();
    let init = PolicyParams::zeros(&SlotSchema::default()).probabilities()[SLOT_ANSWER][0];
    let out = run(&[], &train, &test);
    let trained = out.params.as_ref().unwrap().probabilities()[SLOT_ANSWER][0];
    assert!(trained > init, "{trained} <= {init}");
}

#[test]
fn beta_zero_still_improves() {
    let (train, _) = data();
    let cfg = GrpoConfig { kl_beta: 0.0, ..GrpoConfig::default() };
    let init = PolicyParams::zeros(&SlotSchema::default());
    let (p, _) = rewardsmith_core::grpo::train_trial(&bundle(&[]), &cfg, &train, init).unwrap();
    assert!(p.probabilities()[SLOT_ANSWER][0] > 0.2);
}

#[test]
fn length_range_hurts() {
    let (train, test) = data();
    let base = run(&[], &train, &test).result.metrics.f1;
    let alone = run(&["thinking_length_range"], &train, &test).result.metrics.f1;
    let ens = run(&["thinking_length_range", "thinking_no_answer_leak"], &train, &test).result.metrics.f1;
    assert!(alone < base, "{alone} >= {base}");
    assert!(ens < base, "{ens} >= {base}");
}

// Slots are sampled independently, so a reward on the lines slot carries no
// information about correctness and only adds advantage noise.
#[test]
#[ignore = "known failure: independent lines slot dilutes the answer signal"]
fn steps_count_matches_base() {
    let (train, test) = data();
    let base = run(&[], &train, &test).result.metrics.f1;
    let steps = run(&["thinking_steps_count"], &train, &test).result.metrics.f1;
    assert!(steps >= base, "{steps} < {base}");
}

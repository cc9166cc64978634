use std::sync::Arc;

use proptest::prelude::*;
use rewardsmith_core::eval::{ConfusionCounts, EvalConfig, Metrics};
use rewardsmith_core::policy::{render, SlotSchema};
use rewardsmith_core::rewards::{base_rewards, builtin, RewardBatch, RewardFn};
use rewardsmith_core::tasks::generate_dataset;
use rewardsmith_core::{Decimal, GrpoConfig, TrialResult, TrialStatus};
use rewardsmith_lang::{RewardProgram, SandboxLimits, Status};
use rewardsmith_search::ensemble::{combine, resolve, EnsembleError};
use rewardsmith_search::generator::GeneratorRequest;
use rewardsmith_search::{
    select_members, train_ensemble, EnsembleConfig, Generator, MockGenerator, PoolEntry, RewardPool, Selection,
};

/// Pool of real mock programs with synthetic screening results.
fn pool(rounds: u32, per_round: usize) -> RewardPool {
    let mut p = RewardPool::default();
    for round in 1..=rounds {
        let req = GeneratorRequest { round, prompt: String::new(), count: per_round, temperature: 0.6, max_tokens: 1 };
        for (i, c) in MockGenerator::new(9).generate(&req).unwrap().into_iter().enumerate() {
            let mut program = RewardProgram::new(&c.name, &c.code, &c.description, round);
            program.status = Status::Valid;
            let f1 = 0.5 + 0.01 * (round as f64) + 0.001 * i as f64;
            let result = TrialResult {
                name: c.name.clone(),
                status: TrialStatus::Ok,
                seed: 0,
                steps: 1,
                counts: ConfusionCounts::default(),
                metrics: Metrics { precision: f1, recall: f1, f1, accuracy: f1 / 2.0 },
                metrics_flex: Metrics::default(),
                correct: vec![],
                correct_flex: vec![],
            };
            p.entries.push(PoolEntry { program, result: Some(result), rank: 0 });
        }
    }
    p.rerank();
    p
}

#[test]
fn top_k_takes_leading_ranks() {
    let p = pool(2, 5);
    let top = select_members(&p, &Selection::TopK { k: 3 }).unwrap();
    let want: Vec<String> = p.entries[..3].iter().map(|e| e.name().to_string()).collect();
    assert_eq!(top, want);
    assert_eq!(
        select_members(&p, &Selection::TopK { k: 11 }),
        Err(EnsembleError::TooFew { k: 11, available: 10 })
    );
}

#[test]
fn diverse_rounds_one_per_round() {
    let p = pool(2, 4);
    let m = select_members(&p, &Selection::DiverseRounds).unwrap();
    assert_eq!(m.len(), 2);
    let rounds: Vec<u32> = m.iter().map(|n| p.get(n).unwrap().program.round).collect();
    assert_eq!(rounds, [1, 2]);
    for n in &m {
        let e = p.get(n).unwrap();
        let best = p.entries.iter().filter(|x| x.program.round == e.program.round).map(|x| x.f1()).fold(0.0, f64::max);
        assert_eq!(e.f1(), best);
    }
}

#[test]
fn random_k_is_seeded() {
    let p = pool(2, 5);
    let s = Selection::RandomK { k: 5, seed: 42 };
    let a = select_members(&p, &s).unwrap();
    assert_eq!(a, select_members(&p, &s).unwrap());
    let mut u = a.clone();
    u.sort();
    u.dedup();
    assert_eq!(u.len(), 5);
}

#[test]
fn explicit_rejects_base_names() {
    let p = pool(1, 2);
    let s = Selection::Explicit { members: vec!["check_answer".into()] };
    assert_eq!(select_members(&p, &s), Err(EnsembleError::Protected("check_answer".into())));
    assert!(matches!(resolve(&p, "nope", SandboxLimits::default()), Err(EnsembleError::Unknown(_))));
    assert!(resolve(&p, "thinking_length_range", SandboxLimits::default()).is_ok());
    assert!(resolve(&p, p.entries[0].name(), SandboxLimits::default()).is_ok());
}

fn score(r: &dyn RewardFn, completions: &[String], answers: &[Decimal]) -> Vec<f64> {
    r.score(&RewardBatch::new(&[], completions, answers)).unwrap()
}

#[test]
fn perfect_output_with_steps_count_scores_eleven() {
    let (_, test) = generate_dataset(1, 1, 1);
    let task = &test.tasks[0];
    let text = render(task, &[3, 2, 0, 0]);
    let e = combine("e", vec![builtin("thinking_steps_count").unwrap()]);
    assert_eq!(score(&e, &[text], &[task.answer.clone()]), [11.0]);
}

fn corpus() -> (Vec<String>, Vec<Decimal>) {
    let (_, test) = generate_dataset(5, 1, 4);
    let mut texts = Vec::new();
    let mut answers = Vec::new();
    for t in &test.tasks {
        for c in SlotSchema::default().joint_outcomes() {
            texts.push(render(t, &c));
            answers.push(t.answer.clone());
        }
    }
    (texts, answers)
}

#[test]
fn empty_ensemble_is_the_base_sum() {
    let (texts, answers) = corpus();
    let e = combine("e", vec![]);
    let mut want = vec![0.0; texts.len()];
    for b in base_rewards() {
        for (w, s) in want.iter_mut().zip(score(b.as_ref(), &texts, &answers)) {
            *w += s;
        }
    }
    assert_eq!(score(&e, &texts, &answers), want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn member_order_does_not_matter(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let p = pool(1, 2);
        let names = ["thinking_steps_count", "thinking_has_calc", p.entries[0].name(), p.entries[1].name()];
        let members = |order: &[usize]| -> Vec<Arc<dyn RewardFn>> {
            order.iter().map(|&i| resolve(&p, names[i], SandboxLimits::default()).unwrap()).collect()
        };
        let (texts, answers) = corpus();
        let a = score(&combine("a", members(&[0, 1, 2, 3])), &texts, &answers);
        let b = score(&combine("b", members(&perm)), &texts, &answers);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn length_range_ensemble_underperforms_base() {
    let (train, test) = generate_dataset(3407, 7473, 1319);
    let grpo = GrpoConfig::default();
    let eval = EvalConfig::default();
    let empty = RewardPool::default();
    let run = |members: Vec<&str>| {
        let cfg = EnsembleConfig {
            name: "e".into(),
            selection: Selection::Explicit { members: members.into_iter().map(String::from).collect() },
        };
        train_ensemble(&cfg, &empty, SandboxLimits::default(), &grpo, &eval, &train, &test)
            .unwrap()
            .outcome
            .result
            .metrics
            .f1
    };
    let base = run(vec![]);
    let ens = run(vec!["thinking_length_range", "thinking_no_answer_leak"]);
    assert!(ens < base, "{ens} >= {base}");
}

// More members add more reward terms that are independent of the answer slot,
// which dilutes the correctness signal; larger top-K is not reliably better.
#[test]
#[ignore = "known failure: topK(5) trails topK(3) on most search seeds"]
fn top5_not_worse_than_top3() {
    use rewardsmith_search::{run_search, GeneratorKind, SearchConfig};
    let (train, test) = generate_dataset(3407, 7473, 1319);
    let grpo = GrpoConfig::default();
    let eval = EvalConfig::default();
    let c = SearchConfig { rounds: 2, per_round: 5, steps: 500, generator: GeneratorKind::Mock, seed: 1, ..SearchConfig::default() };
    let run = rewardsmith_search::SearchRun { cfg: &c, grpo: &grpo, eval: &eval, limits: SandboxLimits::default(), train: &train, test: &test };
    let d = tempfile::tempdir().unwrap();
    let pool = run_search(&run, &MockGenerator::new(1), d.path(), None, &mut |_| {}).unwrap().pool().clone();
    let f = |k| {
        let cfg = EnsembleConfig { name: format!("top{k}"), selection: Selection::TopK { k } };
        train_ensemble(&cfg, &pool, SandboxLimits::default(), &grpo, &eval, &train, &test).unwrap().outcome.result.metrics.f1
    };
    assert!(f(5) >= f(3));
}

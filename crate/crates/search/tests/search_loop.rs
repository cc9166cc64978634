use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rewardsmith_core::eval::EvalConfig;
use rewardsmith_core::rewards::PROTECTED_NAMES;
use rewardsmith_core::tasks::generate_dataset;
use rewardsmith_core::{Dataset, GrpoConfig};
use rewardsmith_lang::SandboxLimits;
use rewardsmith_search::generator::Candidate;
use rewardsmith_search::pool::rank_order;
use rewardsmith_search::search::{dedupe, sample_tasks};
use rewardsmith_search::{
    build_prompt, run_search, GeneratorKind, MockGenerator, PoolDir, SearchConfig, SearchOutcome, SearchRun, Summary,
};

fn data() -> (Dataset, Dataset) {
    generate_dataset(3407, 500, 300)
}

fn cfg() -> SearchConfig {
    SearchConfig { rounds: 2, per_round: 3, steps: 50, generator: GeneratorKind::Mock, seed: 1, ..SearchConfig::default() }
}

fn search(dir: &Path, budget: Option<usize>) -> SearchOutcome {
    let (train, test) = data();
    let c = cfg();
    let grpo = GrpoConfig::default();
    let eval = EvalConfig::default();
    let run = SearchRun { cfg: &c, grpo: &grpo, eval: &eval, limits: SandboxLimits::default(), train: &train, test: &test };
    run_search(&run, &MockGenerator::new(c.seed), dir, budget, &mut |_| {}).unwrap()
}

#[test]
fn first_round_prompt_lists_protected_names_only() {
    let (train, _) = data();
    let samples = sample_tasks(&train, 20, 1, 1);
    assert_eq!(samples.len(), 20);
    let p = build_prompt(&[], &samples, &[], 10);
    for n in PROTECTED_NAMES {
        assert!(p.contains(n));
    }
    assert!(!p.contains("name="));
    assert!(p.contains(&samples[0].question));
    assert!(p.contains("def thinking_steps_count(prompts, completions, answer, **kwargs)"));
    assert_eq!(p, build_prompt(&[], &sample_tasks(&train, 20, 1, 1), &[], 10));
}

#[test]
fn history_lines_sorted_by_f1() {
    let h = vec![
        Summary { name: "low".into(), round: 1, f1: 0.25, accuracy: 0.2 },
        Summary { name: "mid".into(), round: 1, f1: 0.5, accuracy: 0.4 },
        Summary { name: "top".into(), round: 1, f1: 0.75, accuracy: 0.6 },
    ];
    let p = build_prompt(&h, &[], &["low".into(), "mid".into(), "top".into()], 10);
    assert!(p.contains("name=mid, round=1, F1=0.5, acc=0.4"));
    let (a, b, c) = (p.find("name=top").unwrap(), p.find("name=mid").unwrap(), p.find("name=low").unwrap());
    assert!(a < b && b < c);
}

#[test]
fn dedupe_rules() {
    let c = |n: &str| Candidate { name: n.into(), code: String::new(), description: String::new() };
    let pool: HashSet<String> = ["old".to_string()].into();
    let (kept, dropped) = dedupe(&[c("check_answer"), c("old"), c("a"), c("a"), c("b"), c("d")], &pool, 2);
    let kept: Vec<_> = kept.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(kept, ["a", "b"]);
    assert_eq!(dropped.len(), 4);
}

#[test]
fn small_search_is_ranked_and_deterministic() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = search(d1.path(), None);
    let SearchOutcome::Complete(pool) = out else { panic!("interrupted") };
    assert!(pool.entries.len() <= 6 && !pool.entries.is_empty());
    let ranks: Vec<usize> = pool.entries.iter().map(|e| e.rank).collect();
    assert_eq!(ranks, (1..=pool.entries.len()).collect::<Vec<_>>());
    for w in pool.entries.windows(2) {
        assert_ne!(rank_order(&w[0], &w[1]), std::cmp::Ordering::Greater);
    }
    for e in &pool.entries {
        assert!(!PROTECTED_NAMES.contains(&e.name()));
    }
    search(d2.path(), None);
    let i1 = fs::read(d1.path().join("index.json")).unwrap();
    assert_eq!(i1, fs::read(d2.path().join("index.json")).unwrap());
    // reloading reproduces the pool exactly
    assert_eq!(PoolDir::new(d1.path()).load().unwrap(), pool);
    // a second run over a finished directory changes nothing
    search(d1.path(), None);
    assert_eq!(i1, fs::read(d1.path().join("index.json")).unwrap());
}

#[test]
fn resume_at_every_boundary() {
    let full = tempfile::tempdir().unwrap();
    search(full.path(), None);
    let want = fs::read(full.path().join("index.json")).unwrap();
    for k in 0..=6 {
        let d = tempfile::tempdir().unwrap();
        let first = search(d.path(), Some(k));
        if k < 6 {
            assert!(matches!(first, SearchOutcome::Interrupted(_)), "k={k}");
        }
        search(d.path(), None);
        assert_eq!(fs::read(d.path().join("index.json")).unwrap(), want, "k={k}");
    }
}

#[test]
fn torn_write_is_redone() {
    let full = tempfile::tempdir().unwrap();
    search(full.path(), None);
    let want = fs::read(full.path().join("index.json")).unwrap();

    let d = tempfile::tempdir().unwrap();
    search(d.path(), Some(2));
    // simulate a crash after the temp write of the next entry's metadata
    let pool = PoolDir::new(d.path()).load().unwrap();
    assert_eq!(pool.entries.len(), 2);
    let rewards = d.path().join("rewards");
    let victim = pool.entries[1].name().to_string();
    let meta = rewards.join(format!("{victim}.json"));
    fs::rename(&meta, rewards.join(format!("{victim}.json.tmp"))).unwrap();
    assert_eq!(PoolDir::new(d.path()).load().unwrap().entries.len(), 1);
    search(d.path(), None);
    assert_eq!(fs::read(d.path().join("index.json")).unwrap(), want);
}

#[test]
fn persisted_files_per_entry() {
    let d = tempfile::tempdir().unwrap();
    let pool = search(d.path(), None).pool().clone();
    for e in &pool.entries {
        let base = d.path().join("rewards").join(e.name());
        let has = |ext: &str| base.with_file_name(format!("{}.{ext}", e.name())).exists();
        assert!(has("rwd") && has("json"));
        assert_eq!(has("vec.json"), e.is_usable());
        assert_eq!(has("steps.jsonl"), e.is_usable());
        if e.is_usable() {
            assert_eq!(PoolDir::new(d.path()).read_steps(e.name()).unwrap().len(), 50);
            assert_eq!(e.result.as_ref().unwrap().correct.len(), 300);
        }
    }
    assert!(d.path().join("rounds/round_1.json").exists());
}

#[test]
fn failing_generator_shrinks_round() {
    struct Broken;
    impl rewardsmith_search::Generator for Broken {
        fn generate(
            &self,
            _: &rewardsmith_search::generator::GeneratorRequest,
        ) -> Result<Vec<Candidate>, rewardsmith_search::generator::GenError> {
            Err(rewardsmith_search::generator::GenError::Transport { attempts: 3, message: "down".into() })
        }
    }
    let (train, test) = data();
    let c = cfg();
    let grpo = GrpoConfig::default();
    let eval = EvalConfig::default();
    let run = SearchRun { cfg: &c, grpo: &grpo, eval: &eval, limits: SandboxLimits::default(), train: &train, test: &test };
    let d = tempfile::tempdir().unwrap();
    let mut failures = 0;
    let out = run_search(&run, &Broken, d.path(), None, &mut |e| {
        if matches!(e, rewardsmith_search::SearchEvent::GeneratorFailed { .. }) {
            failures += 1;
        }
    })
    .unwrap();
    assert!(matches!(out, SearchOutcome::Complete(ref p) if p.entries.is_empty()));
    assert_eq!(failures, 2);
}

#[test]
fn invalid_candidates_occupy_rejected_slots() {
    struct Bad;
    impl rewardsmith_search::Generator for Bad {
        fn generate(
            &self,
            req: &rewardsmith_search::generator::GeneratorRequest,
        ) -> Result<Vec<Candidate>, rewardsmith_search::generator::GenError> {
            Ok(vec![Candidate {
                name: format!("sneaky_{}", req.round),
                code: format!("import os\ndef sneaky_{}(prompts, completions, answer, **kwargs):\n    return []\n", req.round),
                description: String::new(),
            }])
        }
    }
    let (train, test) = data();
    let c = cfg();
    let grpo = GrpoConfig::default();
    let eval = EvalConfig::default();
    let run = SearchRun { cfg: &c, grpo: &grpo, eval: &eval, limits: SandboxLimits::default(), train: &train, test: &test };
    let d = tempfile::tempdir().unwrap();
    let pool = run_search(&run, &Bad, d.path(), None, &mut |_| {}).unwrap().pool().clone();
    assert_eq!(pool.entries.len(), 2);
    for e in &pool.entries {
        assert_eq!(e.status_label(), "rejected(stage1)");
        assert!(!d.path().join("rewards").join(format!("{}.vec.json", e.name())).exists());
    }
}

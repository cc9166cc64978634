use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rewardsmith_cli::store::Store;
use rewardsmith_cli::RunConfig;
use rewardsmith_core::trial::{TrialOutcome, TrialResult};
use rewardsmith_core::GrpoConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rewardsmith"))
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("c.toml");
    fs::write(
        &p,
        format!(
            "output_dir = {:?}
[dataset]
n_train = 400
n_test = 200
[grpo]
steps = 60
[search]
generator = \"mock\"
rounds = 2
per_round = 3
steps = 50
seed = 1
[[ensembles]]
name = \"top2\"
selection = {{ strategy = \"top_k\", k = 2 }}
",
            dir.join("out")
        ),
    )
    .unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn shipped_configs_parse() {
    let d = RunConfig::load(&repo().join("configs/default.toml")).unwrap();
    assert_eq!(d, RunConfig::default());
    let m = RunConfig::load(&repo().join("configs/mock-search.toml")).unwrap();
    assert_eq!(m.ensembles.len(), 3);
}

#[test]
fn unknown_keys_are_all_listed() {
    let e = RunConfig::parse("typo = 1\n[grpo]\nlr = 0.1\nlrr = 2\n[search.http]\nurl2 = \"x\"\n").unwrap_err();
    let msg = e.to_string();
    for k in ["typo", "grpo.lrr", "search.http.url2"] {
        assert!(msg.contains(k), "{msg}");
    }
    assert!(RunConfig::parse("[grpo]\ngroup_size = 1\n").is_err());
    assert!(RunConfig::parse("[grpo]\nclip_eps = 1.5\n").is_err());
    assert!(RunConfig::parse("[search]\nrounds = 0\n").is_err());
}

#[test]
fn validate_listing_and_hostile_file() {
    let listing = repo().join("crates/lang/listings/thinking_steps_count.rwd");
    let o = run(&["validate", listing.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(json(&o)["status"], "valid");

    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("sneaky.rwd");
    fs::write(&f, "import os\ndef sneaky(prompts, completions, answer, **kwargs):\n    return [0.0]\n").unwrap();
    let o = run(&["validate", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&o)["stage"], 1);
}

#[test]
fn bad_config_exits_nonzero_with_keys() {
    let d = tempfile::tempdir().unwrap();
    let c = d.path().join("bad.toml");
    fs::write(&c, "bogus = 1\n").unwrap();
    let o = run(&["--config", c.to_str().unwrap(), "gen-data"]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("bogus"));
}

#[test]
fn gen_data_round_trips_through_ingest() {
    let d = tempfile::tempdir().unwrap();
    let c = small_config(d.path());
    assert!(run(&["--config", c.to_str().unwrap(), "gen-data"]).status.success());
    let out = d.path().join("out/data");
    let cfg = RunConfig::load(&c).unwrap();
    let (train, test) = cfg.dataset.load().unwrap();
    let mut ingest = cfg.dataset.clone();
    ingest.train_path = Some(out.join("train.jsonl"));
    ingest.test_path = Some(out.join("test.jsonl"));
    let (tr2, te2) = ingest.load().unwrap();
    assert_eq!(tr2.len(), train.len());
    let a: Vec<_> = test.tasks.iter().map(|t| (&t.question, t.answer.to_string())).collect();
    let b: Vec<_> = te2.tasks.iter().map(|t| (&t.question, t.answer.to_string())).collect();
    assert_eq!(a, b);
}

#[test]
fn trial_stats_audit_report_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let c = small_config(d.path());
    let cs = c.to_str().unwrap();
    for r in ["base", "thinking_steps_count", "thinking_length_range"] {
        let o = run(&["--config", cs, "trial", r]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let runs = d.path().join("out/runs/base");
    for f in ["result.json", "correct.json", "steps.jsonl", "params.json", "questions.jsonl"] {
        assert!(runs.join(f).exists(), "{f}");
    }
    let o = run(&["--config", cs, "stats", "base", "thinking_steps_count", "thinking_length_range"]);
    assert!(o.status.success());
    let s = json(&o);
    assert_eq!(s["mcnemar"]["pairs"], 3);
    assert_eq!(s["runs"].as_array().unwrap().len(), 3);
    let again = run(&["--config", cs, "stats", "base", "thinking_steps_count", "thinking_length_range"]);
    assert_eq!(o.stdout, again.stdout);

    let o = run(&["--config", cs, "audit", "thinking_steps_count"]);
    assert!(o.status.success());
    assert!(json(&o)["correct"]["lines"]["mean"].is_number());

    let o = run(&["--config", cs, "report", "base"]);
    assert!(o.status.success());
    let csv = fs::read_to_string(d.path().join("out/reports/base/metrics.csv")).unwrap();
    assert!(csv.starts_with("run,parse,tp,fp,fn"));

    let params = runs.join("params.json");
    let o = run(&["--config", cs, "evaluate", params.to_str().unwrap()]);
    let e = json(&o);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(runs.join("result.json")).unwrap()).unwrap();
    assert_eq!(e["metrics"], r["result"]["metrics"]);

    let manifest = fs::read_to_string(d.path().join("out/manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.contains("\"kind\":\"trial\"")).count(), 3);
    assert_eq!(fs::read_to_string(d.path().join("out/results.jsonl")).unwrap().lines().count(), 3);

    let o = run(&["--config", cs, "stats", "missing"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn search_then_ensemble() {
    let d = tempfile::tempdir().unwrap();
    let c = small_config(d.path());
    let cs = c.to_str().unwrap();
    let o = run(&["--config", cs, "search", "--max-trials", "2"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(run(&["--config", cs, "search"]).status.success());
    let o = run(&["--config", cs, "ensemble", "top2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["members"].as_array().unwrap().len(), 2);
    assert!(run(&["--config", cs, "report", "pool"]).status.success());
    assert!(d.path().join("out/reports/pool/rounds.csv").exists());
    assert_eq!(run(&["--config", cs, "ensemble", "nope"]).status.code(), Some(1));
}

#[test]
fn failed_trial_has_metadata_only() {
    let d = tempfile::tempdir().unwrap();
    let store = Store::new(d.path());
    let cfg = GrpoConfig::default();
    let out = TrialOutcome {
        result: TrialResult::failed("boom", &cfg, "step-limit".into()),
        params: None,
        step_log: Vec::new(),
        eval: None,
    };
    let written = store.persist_trial("boom", &["boom".into()], &out).unwrap();
    assert_eq!(written, vec![d.path().join("runs/boom/result.json")]);
    assert!(!d.path().join("runs/boom/correct.json").exists());
    let rec = store.load_run("boom").unwrap();
    assert!(!rec.result.is_ok());
}

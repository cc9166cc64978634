//! Command-line driver for reward search experiments.

pub mod config;
pub mod store;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rewardsmith_core::audit::hacking_audit;
use rewardsmith_core::eval::evaluate_policy;
use rewardsmith_core::rewards::{base_rewards, builtin, RewardFn};
use rewardsmith_core::stats::{bonferroni_matrix, bootstrap_ci, mean};
use rewardsmith_core::trial::run_trial;
use rewardsmith_core::{Dataset, Split};
use rewardsmith_lang::{validate, Report, RewardProgram};
use rewardsmith_search::ensemble::train_ensemble;
use rewardsmith_search::generator::generator_for;
use rewardsmith_search::pool::write_atomic;
use rewardsmith_search::{run_search, PoolDir, SearchEvent, SearchOutcome, SearchRun};
use serde_json::json;

pub use config::{ConfigError, RunConfig};
use store::Store;

#[derive(Debug, Parser)]
#[command(name = "rewardsmith", version, about = "Search, screen and ensemble reward functions")]
pub struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the training and search seed (the dataset seed for gen-data).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `output_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the train and test splits as JSONL.
    GenData,
    /// Run the four validation stages on a reward file.
    Validate { file: PathBuf },
    /// Train with the base rewards plus one reward (built-in name, file, or `base`).
    Trial {
        reward: String,
        #[arg(long)]
        id: Option<String>,
    },
    /// Run or resume the reward search.
    Search {
        /// Stop after screening this many candidates (for staged runs).
        #[arg(long)]
        max_trials: Option<usize>,
    },
    /// Train an ensemble declared in the config.
    Ensemble { name: String },
    /// Evaluate saved policy parameters on the test split.
    Evaluate {
        params: PathBuf,
        #[arg(long)]
        greedy: bool,
    },
    /// Line-count and arithmetic-density audit of a run's completions.
    Audit { run: String },
    /// Bootstrap intervals and pairwise McNemar tests across runs.
    Stats {
        #[arg(required = true)]
        runs: Vec<String>,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Write CSV reports for a run, or for the pool with `pool`.
    Report { run: String },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset: {0}")]
    Dataset(#[from] rewardsmith_core::tasks::DatasetError),
    #[error("trial: {0}")]
    Trial(String),
    #[error("reward {} rejected at stage {}: {}", .0.name, .0.stage.unwrap_or(0), .0.reason.as_deref().unwrap_or(""))]
    Rejected(Report),
    #[error("search interrupted after the trial budget; rerun to resume")]
    Interrupted,
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::NotFound(_) => "not-found",
            CliError::Io(_) => "storage",
            CliError::Dataset(_) => "dataset",
            CliError::Trial(_) => "trial",
            CliError::Rejected(_) => "rejected",
            CliError::Interrupted => "interrupted",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Rejected(_) => 2,
            CliError::Interrupted => 3,
            _ => 1,
        }
    }
}

fn not_found(e: std::io::Error) -> CliError {
    if e.kind() == std::io::ErrorKind::NotFound {
        CliError::NotFound(e.to_string())
    } else {
        CliError::Io(e)
    }
}

/// Prints to stdout, ignoring a closed pipe.
fn print(v: &serde_json::Value) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(v).expect("json"));
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Command::GenData = cli.command {
        if let Some(s) = cli.seed {
            cfg.dataset.seed = s;
        }
    } else {
        cfg = cfg.with_seed(cli.seed);
    }
    let store = Store::new(&cfg.output_dir);
    match cli.command {
        Command::GenData => gen_data(&cfg, &store),
        Command::Validate { file } => validate_file(&cfg, &file),
        Command::Trial { reward, id } => trial(&cfg, &store, &reward, id),
        Command::Search { max_trials } => search(&cfg, &store, max_trials),
        Command::Ensemble { name } => ensemble(&cfg, &store, &name),
        Command::Evaluate { params, greedy } => evaluate(&cfg, &params, greedy),
        Command::Audit { run } => audit(&store, &run),
        Command::Stats { runs, resamples, alpha } => stats(&cfg, &store, &runs, resamples, alpha),
        Command::Report { run } => report(&store, &run),
    }
}

fn invocation(cfg: &RunConfig, store: &Store, command: &str) -> Result<(), CliError> {
    store.manifest(&json!({
        "kind": "invocation",
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
    }))?;
    Ok(())
}

fn finished(store: &Store, command: &str, status: &str) -> Result<(), CliError> {
    store.manifest(&json!({"kind": "finished", "command": command, "status": status}))?;
    Ok(())
}

fn gen_data(cfg: &RunConfig, store: &Store) -> Result<(), CliError> {
    let (train, test) = cfg.dataset.load()?;
    for d in [&train, &test] {
        let mut s = String::new();
        for t in &d.tasks {
            s.push_str(&serde_json::to_string(t).map_err(std::io::Error::other)?);
            s.push('\n');
        }
        let name = match d.split {
            Split::Train => "train.jsonl",
            Split::Test => "test.jsonl",
        };
        write_atomic(&store.root.join("data").join(name), s.as_bytes())?;
    }
    print(&json!({"train": train.len(), "test": test.len(), "dir": store.root.join("data")}));
    Ok(())
}

fn program_from_file(file: &Path) -> Result<RewardProgram, CliError> {
    let source = std::fs::read_to_string(file).map_err(|e| CliError::NotFound(format!("{}: {e}", file.display())))?;
    let name = file
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::Usage(format!("cannot derive a reward name from {}", file.display())))?;
    Ok(RewardProgram::new(name, source, "", 0))
}

fn validate_file(cfg: &RunConfig, file: &Path) -> Result<(), CliError> {
    let mut p = program_from_file(file)?;
    validate(&mut p, cfg.sandbox);
    let report = Report::of(&p);
    print(&serde_json::to_value(&report).map_err(std::io::Error::other)?);
    if p.is_valid() {
        Ok(())
    } else {
        Err(CliError::Rejected(report))
    }
}

fn datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset), CliError> {
    Ok(cfg.dataset.load()?)
}

fn trial(cfg: &RunConfig, store: &Store, reward: &str, id: Option<String>) -> Result<(), CliError> {
    let path = Path::new(reward);
    let (name, extra): (String, Option<Arc<dyn RewardFn>>) = if path.is_file() {
        let mut p = program_from_file(path)?;
        let Some(g) = validate(&mut p, cfg.sandbox) else {
            return Err(CliError::Rejected(Report::of(&p)));
        };
        (p.name.clone(), Some(Arc::new(g)))
    } else if reward == "base" {
        ("base".into(), None)
    } else {
        let r = builtin(reward).ok_or_else(|| CliError::NotFound(format!("no built-in reward or file named {reward}")))?;
        (reward.to_string(), Some(r))
    };
    let id = id.unwrap_or_else(|| name.clone());
    let (train, test) = datasets(cfg)?;
    invocation(cfg, store, "trial")?;
    let mut bundle = base_rewards();
    bundle.extend(extra);
    let start = Instant::now();
    let out = run_trial(&id, &bundle, &cfg.grpo, &cfg.eval, &train, &test).map_err(|e| CliError::Trial(e.to_string()))?;
    let wall = start.elapsed().as_millis();
    let members = if name == "base" { Vec::new() } else { vec![name] };
    store.persist_trial(&id, &members, &out)?;
    store.manifest(&json!({"kind": "trial", "id": id, "seed": cfg.grpo.seed, "wall_ms": wall, "status": out.result.status}))?;
    finished(store, "trial", "ok")?;
    let r = &out.result;
    print(&json!({"id": id, "status": r.status, "metrics": r.metrics, "metrics_flex": r.metrics_flex, "counts": r.counts}));
    Ok(())
}

fn search(cfg: &RunConfig, store: &Store, max_trials: Option<usize>) -> Result<(), CliError> {
    let (train, test) = datasets(cfg)?;
    invocation(cfg, store, "search")?;
    let run = SearchRun {
        cfg: &cfg.search,
        grpo: &cfg.grpo,
        eval: &cfg.eval,
        limits: cfg.sandbox,
        train: &train,
        test: &test,
    };
    let generator = generator_for(&cfg.search);
    let mut manifest_err = None;
    let mut on_event = |e: &SearchEvent| {
        let line = match e {
            SearchEvent::Round(r) => format!("round {r}"),
            SearchEvent::GeneratorFailed { round, message } => format!("round {round}: generator failed: {message}"),
            SearchEvent::Dropped { name, reason } => format!("  dropped {name}: {reason}"),
            SearchEvent::Rejected { name, stage, reason } => {
                record(store, &mut manifest_err, json!({"kind": "trial", "id": name, "status": "rejected", "stage": stage}));
                format!("  rejected {name} at stage {stage}: {reason}")
            }
            SearchEvent::Screened { name, ok, f1, accuracy, seed, wall_ms } => {
                let status = if *ok { "ok" } else { "rejected(runtime)" };
                record(store, &mut manifest_err, json!({"kind": "trial", "id": name, "seed": seed, "wall_ms": wall_ms, "status": status}));
                format!("  screened {name}: F1={f1:.3} acc={accuracy:.3} {status}")
            }
            SearchEvent::Skipped { name } => format!("  {name} already screened"),
        };
        eprintln!("{line}");
    };
    let outcome = run_search(&run, generator.as_ref(), &store.pool_dir(), max_trials, &mut on_event)
        .map_err(|e| CliError::Trial(e.to_string()))?;
    if let Some(e) = manifest_err {
        return Err(CliError::Io(e));
    }
    match outcome {
        SearchOutcome::Complete(pool) => {
            finished(store, "search", "complete")?;
            print(&serde_json::to_value(pool.index()).map_err(std::io::Error::other)?);
            Ok(())
        }
        SearchOutcome::Interrupted(_) => {
            finished(store, "search", "interrupted")?;
            Err(CliError::Interrupted)
        }
    }
}

fn record(store: &Store, err: &mut Option<std::io::Error>, v: serde_json::Value) {
    if err.is_none() {
        if let Err(e) = store.manifest(&v) {
            *err = Some(e);
        }
    }
}

fn ensemble(cfg: &RunConfig, store: &Store, name: &str) -> Result<(), CliError> {
    let ens = cfg
        .ensembles
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| CliError::NotFound(format!("no ensemble named {name} in the config")))?;
    let pool = PoolDir::new(store.pool_dir()).load()?;
    let (train, test) = datasets(cfg)?;
    invocation(cfg, store, "ensemble")?;
    let start = Instant::now();
    let run = train_ensemble(ens, &pool, cfg.sandbox, &cfg.grpo, &cfg.eval, &train, &test)
        .map_err(|e| CliError::Trial(e.to_string()))?;
    let wall = start.elapsed().as_millis();
    store.persist_trial(name, &run.members, &run.outcome)?;
    store.manifest(&json!({"kind": "trial", "id": name, "seed": cfg.grpo.seed, "wall_ms": wall, "status": run.outcome.result.status}))?;
    finished(store, "ensemble", "ok")?;
    let r = &run.outcome.result;
    print(&json!({"id": name, "members": run.members, "status": r.status, "metrics": r.metrics, "metrics_flex": r.metrics_flex}));
    Ok(())
}

fn evaluate(cfg: &RunConfig, params: &Path, greedy: bool) -> Result<(), CliError> {
    let p = Store::load_params(params).map_err(not_found)?;
    let (_, test) = datasets(cfg)?;
    let mut eval = cfg.eval.clone();
    if greedy {
        eval.decoding = rewardsmith_core::eval::Decoding::Greedy;
    }
    let report = evaluate_policy(&p, &test, &eval);
    print(&json!({
        "counts": report.strict.counts,
        "metrics": report.strict.metrics,
        "metrics_flex": report.flexible.metrics,
    }));
    Ok(())
}

fn audit(store: &Store, run: &str) -> Result<(), CliError> {
    let q = store.load_questions(run).map_err(not_found)?;
    let completions: Vec<String> = q.iter().map(|l| l.completion.clone()).collect();
    let correct: Vec<bool> = q.iter().map(|l| l.correct_strict).collect();
    let report = hacking_audit(&completions, &correct);
    let v = serde_json::to_value(&report).map_err(std::io::Error::other)?;
    rewardsmith_search::pool::write_json(&store.run_dir(run).join("audit.json"), &v)?;
    print(&v);
    Ok(())
}

fn stats(cfg: &RunConfig, store: &Store, runs: &[String], resamples: usize, alpha: f64) -> Result<(), CliError> {
    let mut named = Vec::new();
    for id in runs {
        let rec = store.load_run(id).map_err(not_found)?;
        if !rec.result.is_ok() {
            return Err(CliError::Usage(format!("run {id} failed and has no correctness vector")));
        }
        named.push((id.clone(), rec.result.correct));
    }
    let seed = cfg.grpo.seed;
    let per_run: Vec<serde_json::Value> = named
        .iter()
        .map(|(id, v)| {
            let (lo, hi) = bootstrap_ci(v, resamples, 0.95, seed);
            json!({"run": id, "n": v.len(), "accuracy": mean(v), "ci95": [lo, hi]})
        })
        .collect();
    let mut out = json!({"runs": per_run, "resamples": resamples, "seed": seed});
    if named.len() >= 2 {
        let n = named[0].1.len();
        if named.iter().any(|(_, v)| v.len() != n) {
            return Err(CliError::Usage("runs were evaluated on test sets of different sizes".into()));
        }
        let m = bonferroni_matrix(&named, alpha);
        let mut pairs = Vec::new();
        for i in 0..m.names.len() {
            for j in i + 1..m.names.len() {
                pairs.push(json!({"a": m.names[i], "b": m.names[j], "p": m.p[i][j], "significant": m.significant[i][j]}));
            }
        }
        out["mcnemar"] = json!({"pairs": m.pairs, "alpha": alpha, "threshold": m.threshold, "tests": pairs});
    }
    let name = runs.join("+");
    rewardsmith_search::pool::write_json(&store.root.join("stats").join(format!("{name}.json")), &out)?;
    print(&out);
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn report(store: &Store, run: &str) -> Result<(), CliError> {
    let dir = store.root.join("reports").join(run);
    let mut written = Vec::new();
    if run == "pool" {
        let pool = PoolDir::new(store.pool_dir()).load()?;
        if pool.entries.is_empty() {
            return Err(CliError::NotFound("pool is empty".into()));
        }
        let mut rounds = String::from("round,name,status,f1,accuracy\n");
        let mut pr = String::from("name,precision,recall,f1\n");
        for row in pool.index() {
            rounds.push_str(&format!("{},{},{},{},{}\n", row.round, csv_field(&row.name), row.status, row.f1, row.accuracy));
            if row.status == "valid" {
                pr.push_str(&format!("{},{},{},{}\n", csv_field(&row.name), row.precision, row.recall, row.f1));
            }
        }
        for (f, body) in [("rounds.csv", rounds), ("precision_recall.csv", pr)] {
            write_atomic(&dir.join(f), body.as_bytes())?;
            written.push(dir.join(f));
        }
    } else {
        let rec = store.load_run(run).map_err(not_found)?;
        let r = &rec.result;
        let (m, f) = (r.metrics, r.metrics_flex);
        let metrics = format!(
            "run,parse,tp,fp,fn,precision,recall,f1,accuracy\n{id},strict,{},{},{},{},{},{},{}\n{id},flexible,,,,{},{},{},{}\n",
            r.counts.tp,
            r.counts.fp,
            r.counts.r#fn,
            m.precision,
            m.recall,
            m.f1,
            m.accuracy,
            f.precision,
            f.recall,
            f.f1,
            f.accuracy,
            id = csv_field(run),
        );
        write_atomic(&dir.join("metrics.csv"), metrics.as_bytes())?;
        written.push(dir.join("metrics.csv"));
        let mut q = String::from("index,correct_strict,correct_flex\n");
        for (i, (a, b)) in r.correct.iter().zip(&r.correct_flex).enumerate() {
            q.push_str(&format!("{i},{},{}\n", u8::from(*a), u8::from(*b)));
        }
        write_atomic(&dir.join("questions.csv"), q.as_bytes())?;
        written.push(dir.join("questions.csv"));
    }
    print(&json!({"written": written}));
    Ok(())
}

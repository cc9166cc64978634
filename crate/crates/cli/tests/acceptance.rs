//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL but do not fail
//! the process; any other failure does.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rewardsmith_core::eval::{ConfusionCounts, EvalConfig, Metrics};
use rewardsmith_core::grpo::{compute_advantages, k3_kl, surrogate_with_advantages};
use rewardsmith_core::policy::{log_softmax, render, SlotSchema, SLOT_ANSWER};
use rewardsmith_core::rewards::{base_rewards, builtin, score_native, RewardFn};
use rewardsmith_core::stats::{bonferroni_matrix, bootstrap_ci, discordant, exact_binomial_p, mcnemar_with};
use rewardsmith_core::tasks::generate_dataset;
use rewardsmith_core::trial::run_trial;
use rewardsmith_core::{Decimal, GrpoConfig, PolicyParams, Rollout};
use rewardsmith_lang::{listings, validate, GuardedProgram, RewardProgram, SandboxLimits, Status};

#[path = "../../lang/tests/fixtures/malicious_corpus.rs"]
mod malicious;

/// Criteria whose failure is expected and analysed in the README.
const KNOWN_FAILURES: &[u32] = &[7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "bootstrap intervals", bootstrap),
        (2, "F1 from accuracy and recall", metric_consistency),
        (3, "scoring tables", scoring_tables),
        (4, "gradient fidelity", gradient_fidelity),
        (5, "interpreter equivalence", interpreter_equivalence),
        (6, "sandbox safety", sandbox_safety),
        (7, "directional end-to-end", end_to_end),
        (8, "search determinism and resume", search_determinism),
        (9, "McNemar correctness", mcnemar_correctness),
    ];
    let mut unexpected = Vec::new();
    for (id, label, check) in criteria {
        let start = Instant::now();
        let o = match std::panic::catch_unwind(check) {
            Ok(o) => o,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            }
        };
        let took = start.elapsed().as_secs_f64();
        let known = !o.pass && KNOWN_FAILURES.contains(&id);
        println!(
            "{} {id}: {label} [{took:.1}s] {}{}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            if known { " (known failure)" } else { "" }
        );
        if !o.pass && !known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

fn vector(successes: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| i < successes).collect()
}

fn bootstrap() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    for (k, lo, hi) in [(871, 0.635, 0.686), (578, 0.412, 0.466)] {
        let (a, b) = bootstrap_ci(&vector(k, 1319), 10_000, 0.95, 3407);
        pass &= (a - lo).abs() <= 0.003 && (b - hi).abs() <= 0.003;
        notes.push(format!("{k}/1319 -> [{a:.4}, {b:.4}]"));
    }
    let took = start.elapsed();
    pass &= took < Duration::from_secs(5);
    outcome(pass, format!("{}; {:.2}s", notes.join(", "), took.as_secs_f64()))
}

fn metric_consistency() -> Outcome {
    // every FN count whose rounded recall is 0.892 at 871 correct of 1319
    let n = 1319;
    let tp = 871;
    let mut f1s = Vec::new();
    for fn_ in 0..(n - tp) {
        let recall = tp as f64 / (tp + fn_) as f64;
        if (recall * 1000.0).round() as i64 != 892 {
            continue;
        }
        let m = Metrics::from_counts(ConfusionCounts { tp, fp: n - tp - fn_, r#fn: fn_ }, n);
        assert!((m.accuracy - 0.660).abs() < 0.0005);
        f1s.push(m.f1);
    }
    let pass = !f1s.is_empty() && f1s.iter().all(|f| (f - 0.795).abs() <= 0.005);
    let s: Vec<String> = f1s.iter().map(|f| format!("{f:.4}")).collect();
    outcome(pass, format!("F1 in {{{}}}", s.join(", ")))
}

fn sol(s: &str) -> String {
    format!("<thinking>\nwork\n</thinking>\n<solution>{s}</solution>")
}

fn guarded(name: &str) -> GuardedProgram {
    let mut p = listings::program(name).expect("listing");
    validate(&mut p, SandboxLimits::default()).expect("listing validates")
}

fn scoring_tables() -> Outcome {
    let two = "<thinking>\n3 + 4 = 7\n7 * 2 = 14\n</thinking>";
    let one = "<thinking>\n3 + 4 = 7\n</thinking>";
    let none = "<thinking>\nadd them\n</thinking>";
    let cases: Vec<(&str, String, &str, f64)> = vec![
        ("check_answer", sol("7"), "7", 3.0),
        ("check_answer", sol("7 0"), "70", 1.5),
        ("check_answer", sol("105"), "100", 0.9),
        ("check_answer", sol("115"), "100", 0.5),
        ("check_answer", sol("121"), "100", -1.5),
        ("check_answer", sol("abc"), "100", -2.5),
        ("check_answer", "<thinking>x</thinking>".into(), "100", -2.5),
        ("match_format_exactly", "<thinking>x</thinking><solution>7</solution>".into(), "7", 3.0),
        ("match_format_exactly", "<thinking>x</thinking><solution>7".into(), "7", 0.0),
        ("match_format_approximately", "<thinking>x</thinking><solution>7</solution>".into(), "7", 2.0),
        ("match_format_approximately", "<thinking><thinking>x</thinking><solution>7</solution>".into(), "7", 0.5),
        ("match_format_approximately", "<thinking>x</thinking>".into(), "7", -1.0),
        ("match_format_approximately", "<thinking>".into(), "7", -2.5),
        ("match_format_approximately", "plain text".into(), "7", -4.0),
        ("thinking_steps_count", "<thinking>\na\nb\nc\n</thinking>".into(), "1", 3.0),
        ("thinking_steps_count", "<thinking>a\nb\nc\nd</thinking>".into(), "1", 3.0),
        ("thinking_steps_count", "<thinking>a\n\n\nb</thinking>".into(), "1", 2.0),
        ("thinking_steps_count", "<thinking>  only one  </thinking>".into(), "1", 1.0),
        ("thinking_steps_count", "<thinking> \n \n</thinking>".into(), "1", -1.0),
        ("thinking_steps_count", "no tags at all".into(), "1", -1.0),
        ("thinking_has_calc", "<thinking>3 + 4 = 7</thinking>".into(), "7", 2.0),
        ("thinking_has_calc", "<thinking>no math here</thinking>".into(), "7", 0.0),
        ("thinking_has_calc", "<solution>7</solution>".into(), "7", -1.0),
        ("step_by_step_accuracy", format!("{two}<solution>14</solution>"), "14", 4.0),
        ("step_by_step_accuracy", format!("{one}<solution>14</solution>"), "14", 3.0),
        ("step_by_step_accuracy", format!("{none}<solution>14</solution>"), "14", 2.0),
        ("step_by_step_accuracy", format!("{none}<solution>1,234</solution>"), "1234", 2.0),
        ("step_by_step_accuracy", format!("{two}<solution>15</solution>"), "14", 0.0),
        ("step_by_step_accuracy", format!("{one}<solution>15</solution>"), "14", -1.0),
        ("step_by_step_accuracy", format!("{two}<solution>14"), "14", -1.0),
    ];
    let mut bad = Vec::new();
    for (i, (name, text, answer, want)) in cases.iter().enumerate() {
        let a: Decimal = answer.parse().expect("answer");
        let native = score_native(name, std::slice::from_ref(text), &[a])[0];
        if native != *want {
            bad.push(format!("#{i} {name} native {native} != {want}"));
        }
        if listings::ALL.iter().any(|(n, _)| n == name) {
            let got = guarded(name)
                .call(&[String::new()], std::slice::from_ref(text), &[answer.to_string()])
                .map(|v| v[0]);
            if got != Ok(*want) {
                bad.push(format!("#{i} {name} interpreted {got:?} != {want}"));
            }
        }
    }
    outcome(bad.is_empty(), format!("{} completions; {}", cases.len(), if bad.is_empty() { "all exact".into() } else { bad.join("; ") }))
}

fn random_params(rng: &mut ChaCha8Rng) -> PolicyParams {
    let mut p = PolicyParams::zeros(&SlotSchema::default());
    let flat: Vec<f64> = (0..p.num_params()).map(|_| rng.random_range(-1.5..1.5)).collect();
    p.set_flat(&flat);
    p
}

fn gradient_fidelity() -> Outcome {
    let (eps, beta, h) = (0.2, 0.04, 1e-5);
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let arities = SlotSchema::default().arities();
    let mut worst: f64 = 0.0;
    let mut states = 0;
    while states < 50 {
        let params = random_params(&mut rng);
        let reference = random_params(&mut rng);
        let mut group = Vec::new();
        let mut near_kink = false;
        for _ in 0..4 {
            let choices: Vec<usize> = arities.iter().map(|&a| rng.random_range(0..a)).collect();
            let old: Vec<f64> = params
                .slots
                .iter()
                .zip(&choices)
                .map(|(s, &c)| log_softmax(&s.logits)[c] + rng.random_range(-0.4..0.4))
                .collect();
            for (s, (&c, o)) in params.slots.iter().zip(choices.iter().zip(&old)) {
                let r = (log_softmax(&s.logits)[c] - o).exp();
                near_kink |= (r - (1.0 - eps)).abs() < 1e-3 || (r - (1.0 + eps)).abs() < 1e-3;
            }
            group.push(Rollout { task_id: "t".into(), slot_choices: choices, logprobs_old: old, text: String::new() });
        }
        if near_kink {
            continue;
        }
        let rewards: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..8.0)).collect();
        let adv = compute_advantages(&rewards);
        let analytic = surrogate_with_advantages(&params, &reference, &group, &adv, eps, beta).grad.flatten();
        let flat = params.flatten();
        let fd: Vec<f64> = (0..flat.len())
            .map(|i| {
                let f = |d: f64| {
                    let mut x = flat.clone();
                    x[i] += d;
                    let mut p = params.clone();
                    p.set_flat(&x);
                    surrogate_with_advantages(&p, &reference, &group, &adv, eps, beta).value
                };
                (f(h) - f(-h)) / (2.0 * h)
            })
            .collect();
        let diff = analytic.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(diff / norm);
        states += 1;
    }
    let mut k3_ok = true;
    for _ in 0..1000 {
        let (a, b) = (rng.random_range(-12.0..0.0), rng.random_range(-12.0..0.0));
        k3_ok &= k3_kl(a, b) >= 0.0;
    }
    let mut adv_err: f64 = 0.0;
    let mut shift_err: f64 = 0.0;
    for _ in 0..1000 {
        let r: Vec<f64> = (0..4).map(|_| rng.random_range(-10.0..10.0)).collect();
        let a = compute_advantages(&r);
        adv_err = adv_err.max((a.iter().sum::<f64>() / a.len() as f64).abs());
        let c = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
        let b = compute_advantages(&shifted);
        shift_err = shift_err.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    let pass = worst <= 1e-5 && k3_ok && adv_err <= 1e-12 && shift_err <= 1e-9;
    outcome(
        pass,
        format!("worst rel err {worst:.2e} over 50 states; k3>=0 on 1000 pairs: {k3_ok}; |mean adv| <= {adv_err:.1e}; shift diff <= {shift_err:.1e}"),
    )
}

fn interpreter_equivalence() -> Outcome {
    let (_, test) = generate_dataset(11, 0, 400);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let arities = SlotSchema::default().arities();
    let mut texts = Vec::new();
    let mut answers = Vec::new();
    for _ in 0..1200 {
        let t = &test.tasks[rng.random_range(0..test.tasks.len())];
        let c: Vec<usize> = arities.iter().map(|&a| rng.random_range(0..a)).collect();
        texts.push(render(t, &c));
        answers.push(t.answer);
    }
    let answer_text: Vec<String> = answers.iter().map(|a| a.to_string()).collect();
    let prompts = vec![String::new(); texts.len()];
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, _) in listings::ALL {
        let g = guarded(name);
        let mut agree = 0;
        for lo in (0..texts.len()).step_by(100) {
            let hi = (lo + 100).min(texts.len());
            let got = g.call(&prompts[lo..hi], &texts[lo..hi], &answer_text[lo..hi]).expect("listing runs");
            let want = score_native(name, &texts[lo..hi], &answers[lo..hi]);
            agree += got.iter().zip(&want).filter(|(a, b)| a == b).count();
        }
        pass &= agree == texts.len();
        notes.push(format!("{name} {agree}/{}", texts.len()));
    }
    outcome(pass, notes.join(", "))
}

fn sandbox_safety() -> Outcome {
    let corpus = malicious::corpus();
    let mut bad = Vec::new();
    let mut by_stage = [0usize; 4];
    for (label, name, src, stage, needle) in &corpus {
        let mut p = RewardProgram::new(name.clone(), src.clone(), "", 1);
        let accepted = validate(&mut p, SandboxLimits::default()).is_some();
        match &p.status {
            Status::Rejected { stage: s, reason } if !accepted && s == stage && reason.contains(needle) => {
                by_stage[stage.number() as usize - 1] += 1;
            }
            other => bad.push(format!("{label}: {other:?}")),
        }
    }
    let pass = corpus.len() >= 20 && bad.is_empty();
    outcome(
        pass,
        format!(
            "{} programs stopped (stage1 {}, stage2 {}, stage3 {}, stage4 {}){}",
            corpus.len() - bad.len(),
            by_stage[0],
            by_stage[1],
            by_stage[2],
            by_stage[3],
            if bad.is_empty() { String::new() } else { format!("; wrong: {}", bad.join("; ")) }
        ),
    )
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let (train, test) = generate_dataset(3407, 7473, 1319);
    let grpo = GrpoConfig::default();
    let eval = EvalConfig::default();
    let run = |extra: &[&str]| {
        let mut b: Vec<Arc<dyn RewardFn>> = base_rewards();
        b.extend(extra.iter().map(|n| builtin(n).expect("builtin")));
        run_trial("t", &b, &grpo, &eval, &train, &test).expect("trial")
    };
    let base = run(&[]);
    let init = PolicyParams::zeros(&SlotSchema::default()).probabilities()[SLOT_ANSWER][0];
    let trained = base.params.as_ref().expect("params").probabilities()[SLOT_ANSWER][0];
    let steps = run(&["thinking_steps_count"]).result.metrics.f1;
    let ens = run(&["thinking_length_range", "thinking_no_answer_leak"]).result.metrics.f1;
    let f1 = base.result.metrics.f1;
    let (a, b, c) = (trained > init, steps >= f1, ens < f1);
    let took = start.elapsed();
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    outcome(
        a && b && c && took < Duration::from_secs(900),
        format!(
            "(a) p(exact) {init:.3} -> {trained:.3} {}; (b) steps F1 {steps:.4} vs base {f1:.4} {}; (c) length-range ensemble F1 {ens:.4} {}",
            mark(a),
            mark(b),
            mark(c)
        ),
    )
}

fn rewardsmith(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rewardsmith")).args(args).output().expect("binary runs")
}

fn search_config(dir: &Path) -> PathBuf {
    let p = dir.join("search.toml");
    fs::write(
        &p,
        format!(
            "output_dir = {:?}\n[search]\ngenerator = \"mock\"\nrounds = 2\nper_round = 3\nsteps = 50\nseed = 1\n",
            dir.join("out")
        ),
    )
    .expect("write config");
    p
}

fn index(dir: &Path) -> Vec<u8> {
    fs::read(dir.join("out/pool/index.json")).unwrap_or_default()
}

fn search_determinism() -> Outcome {
    let start = Instant::now();
    let mk = || tempfile::tempdir().expect("tempdir");
    let full = |d: &Path| {
        let c = search_config(d);
        rewardsmith(&["--config", c.to_str().unwrap(), "search"]).status.success()
    };
    let (d1, d2) = (mk(), mk());
    let ok = full(d1.path()) && full(d2.path());
    let want = index(d1.path());
    let entries = serde_json::from_slice::<Vec<serde_json::Value>>(&want).map(|v| v.len()).unwrap_or(0);
    let twice = ok && !want.is_empty() && want == index(d2.path());

    let mut resumed = 0;
    let mut boundaries = 0;
    for k in 0..=entries {
        let d = mk();
        let c = search_config(d.path());
        let cs = c.to_str().unwrap();
        let first = rewardsmith(&["--config", cs, "search", "--max-trials", &k.to_string()]);
        let expect_code = if k < entries { 3 } else { 0 };
        let second = rewardsmith(&["--config", cs, "search"]);
        boundaries += 1;
        if first.status.code() == Some(expect_code) && second.status.success() && index(d.path()) == want {
            resumed += 1;
        }
    }

    // a hard kill at an arbitrary point, then resume
    let d = mk();
    let c = search_config(d.path());
    let cs = c.to_str().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_rewardsmith"))
        .args(["--config", cs, "search"])
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .expect("spawn");
    let rewards = d.path().join("out/pool/rewards");
    let deadline = Instant::now() + Duration::from_secs(120);
    while Instant::now() < deadline {
        let n = fs::read_dir(&rewards).map(|r| r.count()).unwrap_or(0);
        if n >= 3 || child.try_wait().ok().flatten().is_some() {
            break;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    let _ = child.kill();
    let _ = child.wait();
    let killed_ok = rewardsmith(&["--config", cs, "search"]).status.success() && index(d.path()) == want;

    let took = start.elapsed();
    let pass = twice && resumed == boundaries && killed_ok && took < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "two runs identical: {twice} ({entries} entries); budget-stop resume identical at {resumed}/{boundaries} boundaries; hard kill + resume identical: {killed_ok}"
        ),
    )
}

/// Two-sided exact tail by summing the binomial(b + c, 1/2) pmf with Pascal's triangle.
fn brute_force_p(b: usize, c: usize) -> f64 {
    let n = b + c;
    let mut row = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    let total = 2f64.powi(n as i32);
    let k = b.min(c);
    let tail: f64 = row[..=k].iter().sum::<f64>() / total;
    (2.0 * tail).min(1.0)
}

fn mcnemar_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut matched = 0;
    let mut cases = 0;
    while cases < 10 {
        let n = 60;
        let v1: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let v2: Vec<bool> = v1.iter().map(|&x| if rng.random_bool(0.25) { !x } else { x }).collect();
        let (b, c) = discordant(&v1, &v2);
        if b + c >= 25 || b == c {
            continue;
        }
        cases += 1;
        let p = mcnemar_with(&v1, &v2, 25);
        let want = brute_force_p(b, c);
        if (p - want).abs() <= 1e-12 * want.max(1.0) && (exact_binomial_p(b, c) - want).abs() <= 1e-12 {
            matched += 1;
        }
    }
    let named: Vec<(String, Vec<bool>)> = (0..7)
        .map(|i| (format!("run{i}"), (0..200).map(|_| rng.random_bool(0.5 + 0.03 * i as f64)).collect()))
        .collect();
    let m = bonferroni_matrix(&named, 0.05);
    let rounded = (m.threshold * 1e5).round() / 1e5;
    let pass = matched == 10 && m.pairs == 21 && rounded == 0.00238;
    outcome(pass, format!("exact branch matches brute force {matched}/10; 7 vectors -> {} pairs, threshold {:.5}", m.pairs, m.threshold))
}

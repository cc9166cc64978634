//! Hostile programs are rejected at the expected stage, and nothing they do
//! escapes as a crash of the host.

use std::time::{Duration, Instant};

use rewardsmith_lang::{validate, RewardProgram, SandboxLimits, Status};

#[path = "fixtures/malicious_corpus.rs"]
mod fixture;
use fixture::{body, corpus, ok_tail};

#[test]
fn every_hostile_program_is_stopped_at_its_stage() {
    let corpus = corpus();
    assert!(corpus.len() >= 20);
    let mut bad = Vec::new();
    for (label, name, src, stage, needle) in corpus {
        let mut p = RewardProgram::new(name, src, "", 1);
        let start = Instant::now();
        let g = validate(&mut p, SandboxLimits::default());
        let took = start.elapsed();
        assert!(g.is_none(), "{label} was accepted");
        match &p.status {
            Status::Rejected { stage: s, reason } if *s == stage && reason.contains(needle) => {}
            other => bad.push(format!("{label}: expected {stage:?} containing {needle:?}, got {other:?}")),
        }
        // a timed-out call returns within twice the timeout
        assert!(took < Duration::from_secs(4), "{label} took {took:?}");
    }
    assert!(bad.is_empty(), "\n{}", bad.join("\n"));
}

#[test]
fn reports_serialize_with_stage_numbers() {
    let mut p = RewardProgram::new("check_answer", body("check_answer", ok_tail()), "", 1);
    validate(&mut p, SandboxLimits::default());
    let json = serde_json::to_value(rewardsmith_lang::Report::of(&p)).unwrap();
    assert_eq!(json["status"], "rejected");
    assert_eq!(json["stage"], 2);
    assert_eq!(json["name"], "check_answer");
}

#[test]
fn plain_valid_program_passes() {
    let src = body(
        "good",
        "import re\nscores = []\nfor c, a in zip(completions, answer):\n    t = c[0]['content']\n    scores.append(1.0 if re.search(SOLUTION_OPEN, t) else 0.0)\nreturn scores",
    );
    let mut p = RewardProgram::new("good", src, "", 1);
    assert!(validate(&mut p, SandboxLimits::default()).is_some(), "{:?}", p.status);
}

use std::fmt::Write;

use rewardsmith_core::rewards::PROTECTED_NAMES;
use rewardsmith_core::Task;
use rewardsmith_lang::listings;
use serde::{Deserialize, Serialize};

/// One line of ranked feedback shown to the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub round: u32,
    pub f1: f64,
    pub accuracy: f64,
}

impl Summary {
    pub fn line(&self) -> String {
        format!("name={}, round={}, F1={}, acc={}", self.name, self.round, short(self.f1), short(self.accuracy))
    }
}

/// Three decimals, trailing zeros dropped.
fn short(x: f64) -> String {
    let r = (x * 1000.0).round() / 1000.0;
    format!("{r}")
}

pub fn rank_summaries(history: &[Summary]) -> Vec<&Summary> {
    let mut v: Vec<&Summary> = history.iter().collect();
    v.sort_by(|a, b| {
        b.f1.total_cmp(&a.f1)
            .then(b.accuracy.total_cmp(&a.accuracy))
            .then_with(|| a.name.cmp(&b.name))
    });
    v
}

const SIGNATURE: &str = "\
Each reward is a single Python function `def <name>(prompts, completions, answer, **kwargs)`.
`completions[i][0]['content']` is the i-th model output; `answer[i]` is its reference answer as a string.
It must return a list of floats with one score per completion. Only `re` and `math` may be imported.
Outputs use <thinking>...</thinking> followed by <solution>...</solution>.";

const SCHEMA: &str = r#"Reply with a JSON array only:
[{"name": "<function name>", "code": "<full function source>", "description": "<one sentence>"}]"#;

/// Generation prompt for one round.
///
/// `accepted` lists names already in the pool; the protected base names are
/// always added.
pub fn build_prompt(history: &[Summary], samples: &[Task], accepted: &[String], count: usize) -> String {
    let mut p = String::new();
    let _ = writeln!(p, "Write {count} new reward functions for training a model on grade-school math word problems.\n");
    p.push_str("Sample problems:\n");
    for t in samples {
        let _ = writeln!(p, "Q: {}\nA: {}", t.question, t.answer_text());
    }
    p.push_str("\nExample reward:\n");
    p.push_str(listings::THINKING_STEPS_COUNT);
    if !p.ends_with('\n') {
        p.push('\n');
    }
    p.push('\n');
    p.push_str(SIGNATURE);
    p.push_str("\n\nThese names already exist. Do not duplicate them or reuse their names:\n");
    let mut names: Vec<&str> = PROTECTED_NAMES.to_vec();
    for n in accepted {
        if !names.contains(&n.as_str()) {
            names.push(n);
        }
    }
    for n in names {
        let _ = writeln!(p, "- {n}");
    }
    if !history.is_empty() {
        p.push_str("\nPrevious rewards ranked by F1 (higher is better):\n");
        for s in rank_summaries(history) {
            p.push_str(&s.line());
            p.push('\n');
        }
    }
    p.push('\n');
    p.push_str(SCHEMA);
    p.push('\n');
    p
}

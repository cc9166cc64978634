//! Native reward functions: the three protected base rewards, the published
//! discovered rewards, and the three known-catastrophic rewards.
//!
//! Every reward maps a batch of completions (with aligned ground-truth
//! answers) to one score per completion.

use std::sync::{Arc, LazyLock};

use regex::Regex;

use crate::decimal::Decimal;
use crate::text::{parse_float, strip};

/// Names that generated rewards may never take.
pub const PROTECTED_NAMES: [&str; 3] = [
    "match_format_exactly",
    "match_format_approximately",
    "check_answer",
];

pub fn is_protected(name: &str) -> bool {
    PROTECTED_NAMES.contains(&name)
}

/// Aligned reward inputs. `prompts` may be empty when no reward needs them.
#[derive(Debug, Clone, Copy)]
pub struct RewardBatch<'a> {
    pub prompts: &'a [String],
    pub completions: &'a [String],
    pub answers: &'a [Decimal],
}

impl<'a> RewardBatch<'a> {
    pub fn new(prompts: &'a [String], completions: &'a [String], answers: &'a [Decimal]) -> Self {
        debug_assert_eq!(completions.len(), answers.len());
        RewardBatch {
            prompts,
            completions,
            answers,
        }
    }

    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }
}

/// A reward evaluation that could not produce scores.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("reward {reward} faulted: {reason}")]
pub struct RewardFault {
    pub reward: String,
    pub reason: String,
}

pub trait RewardFn: Send + Sync {
    fn name(&self) -> &str;

    fn score(&self, batch: &RewardBatch<'_>) -> Result<Vec<f64>, RewardFault>;

    /// Names of the individual rewards this evaluator adds up.
    fn component_names(&self) -> Vec<String> {
        vec![self.name().to_string()]
    }
}

type NativeFn = fn(&str, &Decimal) -> f64;

/// A pure per-completion reward implemented in Rust.
pub struct NativeReward {
    name: &'static str,
    f: NativeFn,
}

impl NativeReward {
    pub fn score_one(&self, completion: &str, answer: &Decimal) -> f64 {
        (self.f)(completion, answer)
    }
}

impl RewardFn for NativeReward {
    fn name(&self) -> &str {
        self.name
    }

    fn score(&self, batch: &RewardBatch<'_>) -> Result<Vec<f64>, RewardFault> {
        Ok(batch
            .completions
            .iter()
            .zip(batch.answers)
            .map(|(c, a)| (self.f)(c, a))
            .collect())
    }
}

static THINKING_BLOCK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<thinking>(.*?)</thinking>").unwrap());
static SOLUTION_BLOCK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<solution>(.*?)</solution>").unwrap());
static NEWLINE_RUN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n+").unwrap());
static CALC_HINT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[0-9]+\s*[+\-*/]").unwrap());
static STEP_TRIPLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(\d+(?:\.\d+)?)\s*([+*\-/])\s*(\d+(?:\.\d+)?)").unwrap());

pub fn thinking_block(text: &str) -> Option<&str> {
    THINKING_BLOCK.captures(text).map(|c| c.get(1).unwrap().as_str())
}

pub fn solution_block(text: &str) -> Option<&str> {
    SOLUTION_BLOCK.captures(text).map(|c| c.get(1).unwrap().as_str())
}

/// Non-empty lines of a thinking block, split on newline runs.
pub fn thinking_lines(block: &str) -> Vec<&str> {
    NEWLINE_RUN.split(strip(block)).filter(|s| !strip(s).is_empty()).collect()
}

/// `|pred - true| < 1e-6` after comma removal; false when either side does
/// not parse.
pub fn numerically_correct(solution: &str, answer: &Decimal) -> bool {
    let pred = parse_float(&strip(solution).replace(',', ""));
    let truth = parse_float(&answer.to_string().replace(',', ""));
    matches!((pred, truth), (Some(p), Some(t)) if (p - t).abs() < 1e-6)
}

fn match_format_exactly(text: &str, _: &Decimal) -> f64 {
    if THINKING_BLOCK.is_match(text) && SOLUTION_BLOCK.is_match(text) {
        3.0
    } else {
        0.0
    }
}

fn match_format_approximately(text: &str, _: &Decimal) -> f64 {
    ["<thinking>", "</thinking>", "<solution>", "</solution>"]
        .iter()
        .map(|tag| if text.matches(tag).count() == 1 { 0.5 } else { -1.0 })
        .sum()
}

fn check_answer(text: &str, answer: &Decimal) -> f64 {
    let Some(raw) = solution_block(text) else {
        return -2.5;
    };
    let canonical = answer.to_string();
    let extracted = strip(raw);
    if extracted == canonical {
        return 3.0;
    }
    let squeezed: String = extracted.chars().filter(|c| !crate::text::is_space(*c)).collect();
    if squeezed == canonical {
        return 1.5;
    }
    let Some(pred) = parse_float(&squeezed.replace(',', "")).filter(|p| p.is_finite()) else {
        return -2.5;
    };
    let truth = answer.to_f64();
    if truth.abs() < 1e-9 {
        return -1.5;
    }
    let dev = (pred - truth).abs() / truth.abs();
    if dev <= 0.10 {
        0.9
    } else if dev <= 0.20 {
        0.5
    } else {
        -1.5
    }
}

fn thinking_steps_count(text: &str, _: &Decimal) -> f64 {
    let Some(block) = thinking_block(text) else {
        return -1.0;
    };
    match thinking_lines(block).len() {
        n if n >= 3 => 3.0,
        2 => 2.0,
        1 => 1.0,
        _ => -1.0,
    }
}

fn thinking_has_calc(text: &str, _: &Decimal) -> f64 {
    match thinking_block(text) {
        None => -1.0,
        Some(b) if CALC_HINT.is_match(b) => 2.0,
        Some(_) => 0.0,
    }
}

fn step_by_step_accuracy(text: &str, answer: &Decimal) -> f64 {
    let (Some(thinking), Some(solution)) = (thinking_block(text), solution_block(text)) else {
        return -1.0;
    };
    let steps = STEP_TRIPLE.find_iter(strip(thinking)).count();
    let correct = numerically_correct(solution, answer);
    match (correct, steps) {
        (true, s) if s >= 2 => 4.0,
        (true, s) if s >= 1 => 3.0,
        (true, _) => 2.0,
        (false, s) if s >= 2 => 0.0,
        _ => -1.0,
    }
}

/// Graded brevity bonus for correct answers. Only the top tier (+5 at no
/// more than 30 words) is fixed; the +3 / +1 steps below it are our choice.
fn efficiency_vs_accuracy(text: &str, answer: &Decimal) -> f64 {
    let correct = solution_block(text).is_some_and(|s| numerically_correct(s, answer));
    if !correct {
        return 0.0;
    }
    let words = thinking_block(text).map_or(0, |b| b.split_whitespace().count());
    if words <= 30 {
        5.0
    } else if words <= 60 {
        3.0
    } else {
        1.0
    }
}

fn thinking_no_answer_leak(text: &str, answer: &Decimal) -> f64 {
    match thinking_block(text) {
        Some(b) if b.contains(&answer.to_string()) => -1.0,
        _ => 1.0,
    }
}

fn thinking_length_range(text: &str, _: &Decimal) -> f64 {
    match thinking_block(text) {
        Some(b) if (100..=400).contains(&strip(b).chars().count()) => 3.0,
        _ => -1.0,
    }
}

const NATIVE: [(&str, NativeFn); 9] = [
    ("match_format_exactly", match_format_exactly),
    ("match_format_approximately", match_format_approximately),
    ("check_answer", check_answer),
    ("thinking_steps_count", thinking_steps_count),
    ("thinking_has_calc", thinking_has_calc),
    ("step_by_step_accuracy", step_by_step_accuracy),
    ("efficiency_vs_accuracy", efficiency_vs_accuracy),
    ("thinking_no_answer_leak", thinking_no_answer_leak),
    ("thinking_length_range", thinking_length_range),
];

/// Rewards known to collapse training when used without care.
pub const CATASTROPHIC_NAMES: [&str; 3] = [
    "efficiency_vs_accuracy",
    "thinking_no_answer_leak",
    "thinking_length_range",
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    NATIVE.iter().map(|(n, _)| *n)
}

pub fn native(name: &str) -> Option<NativeReward> {
    NATIVE
        .iter()
        .find(|(n, _)| *n == name)
        .map(|&(name, f)| NativeReward { name, f })
}

/// Looks up a built-in reward by name.
pub fn builtin(name: &str) -> Option<Arc<dyn RewardFn>> {
    native(name).map(|r| Arc::new(r) as Arc<dyn RewardFn>)
}

/// The three protected rewards in canonical order.
pub fn base_rewards() -> Vec<Arc<dyn RewardFn>> {
    PROTECTED_NAMES.iter().map(|n| builtin(n).unwrap()).collect()
}

/// Convenience: score a batch with one native reward.
pub fn score_native(name: &str, completions: &[String], answers: &[Decimal]) -> Vec<f64> {
    let r = native(name).unwrap_or_else(|| panic!("unknown built-in {name}"));
    completions.iter().zip(answers).map(|(c, a)| r.score_one(c, a)).collect()
}

/// Element-wise sum of several rewards.
pub struct SumReward {
    name: String,
    members: Vec<Arc<dyn RewardFn>>,
}

impl SumReward {
    pub fn new(name: impl Into<String>, members: Vec<Arc<dyn RewardFn>>) -> Self {
        SumReward {
            name: name.into(),
            members,
        }
    }

    pub fn members(&self) -> &[Arc<dyn RewardFn>] {
        &self.members
    }
}

impl RewardFn for SumReward {
    fn name(&self) -> &str {
        &self.name
    }

    fn component_names(&self) -> Vec<String> {
        self.members.iter().flat_map(|m| m.component_names()).collect()
    }

    fn score(&self, batch: &RewardBatch<'_>) -> Result<Vec<f64>, RewardFault> {
        let mut total = vec![0.0; batch.len()];
        for m in &self.members {
            let s = m.score(batch)?;
            if s.len() != total.len() {
                return Err(RewardFault {
                    reward: m.name().to_string(),
                    reason: format!("returned {} scores for a batch of {}", s.len(), total.len()),
                });
            }
            for (t, v) in total.iter_mut().zip(s) {
                *t += v;
            }
        }
        Ok(total)
    }
}

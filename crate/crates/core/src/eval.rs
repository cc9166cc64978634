//! Answer extraction and confusion-count metrics over a test split.

use std::sync::LazyLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::decimal::Decimal;
use crate::policy::{greedy_rollout, sample_rollout, PolicyParams};
use crate::rewards::solution_block;
use crate::scalar::Real;
use crate::tasks::{Dataset, Task};
use crate::text::strip;

/// Two answers match when they differ by less than this.
pub const MATCH_TOLERANCE: f64 = 1e-6;

static NUMERIC_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[-+]?(?:\d[\d,]*(?:\.\d+)?|\.\d+)").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractMode {
    Strict,
    FlexibleFallback,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub qid: String,
    pub extracted: Option<String>,
    pub numeric: Option<Decimal>,
    pub mode: ExtractMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    Strict,
    Flexible,
}

/// Content of the first `<solution>...</solution>` span, trimmed, parsed
/// after comma removal.
pub fn extract_strict(qid: &str, text: &str) -> ExtractionResult {
    let extracted = solution_block(text).map(|s| strip(s).to_string());
    let numeric = extracted.as_deref().and_then(|s| Decimal::parse_lenient(s).ok());
    let mode = if numeric.is_some() {
        ExtractMode::Strict
    } else {
        ExtractMode::None
    };
    ExtractionResult {
        qid: qid.to_string(),
        extracted,
        numeric,
        mode,
    }
}

/// Strict extraction, falling back to the last numeric token of the text.
pub fn extract_flexible(qid: &str, text: &str) -> ExtractionResult {
    let strict = extract_strict(qid, text);
    if strict.mode == ExtractMode::Strict {
        return strict;
    }
    let last = NUMERIC_TOKEN
        .find_iter(text)
        .filter_map(|m| {
            let tok = m.as_str().replace(',', "");
            Decimal::parse_lenient(&tok).ok().map(|d| (tok, d))
        })
        .last();
    match last {
        Some((tok, d)) => ExtractionResult {
            qid: qid.to_string(),
            extracted: Some(tok),
            numeric: Some(d),
            mode: ExtractMode::FlexibleFallback,
        },
        None => ExtractionResult {
            qid: qid.to_string(),
            extracted: None,
            numeric: None,
            mode: ExtractMode::None,
        },
    }
}

pub fn extract(mode: ParseMode, qid: &str, text: &str) -> ExtractionResult {
    match mode {
        ParseMode::Strict => extract_strict(qid, text),
        ParseMode::Flexible => extract_flexible(qid, text),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

impl Metrics {
    /// Precision TP/(TP+FP), recall TP/(TP+FN) where FN counts unparseable
    /// answers, F1 their harmonic mean, accuracy TP/n.
    pub fn from_counts(c: ConfusionCounts, n: usize) -> Metrics {
        let tp = c.tp as f64;
        let precision = ratio(tp, (c.tp + c.fp) as f64);
        let recall = ratio(tp, (c.tp + c.r#fn) as f64);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        Metrics {
            precision,
            recall,
            f1,
            accuracy: ratio(tp, n as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub counts: ConfusionCounts,
    pub correct: Vec<bool>,
    pub metrics: Metrics,
    pub extractions: Vec<ExtractionResult>,
}

pub fn answers_match(pred: &Decimal, truth: &Decimal) -> bool {
    (pred.to_f64() - truth.to_f64()).abs() < MATCH_TOLERANCE
}

pub fn score_run(completions: &[String], tasks: &[Task], mode: ParseMode) -> RunScore {
    assert_eq!(completions.len(), tasks.len(), "completions and tasks must align");
    let mut counts = ConfusionCounts::default();
    let mut correct = Vec::with_capacity(tasks.len());
    let mut extractions = Vec::with_capacity(tasks.len());
    for (text, task) in completions.iter().zip(tasks) {
        let ex = extract(mode, &task.id, text);
        let ok = match &ex.numeric {
            Some(v) if answers_match(v, &task.answer) => {
                counts.tp += 1;
                true
            }
            Some(_) => {
                counts.fp += 1;
                false
            }
            None => {
                counts.r#fn += 1;
                false
            }
        };
        correct.push(ok);
        extractions.push(ex);
    }
    RunScore {
        metrics: Metrics::from_counts(counts, tasks.len()),
        counts,
        correct,
        extractions,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoding {
    /// Seeded sampling; the same seed yields coupled draws across policies.
    Sampled,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub decoding: Decoding,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            decoding: Decoding::Sampled,
            seed: 1319,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub completions: Vec<String>,
    pub strict: RunScore,
    pub flexible: RunScore,
}

/// Per-question record of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub qid: String,
    pub extracted: Option<String>,
    pub mode: ExtractMode,
    pub correct_strict: bool,
    pub correct_flex: bool,
}

impl EvalReport {
    pub fn question_records(&self) -> Vec<QuestionRecord> {
        self.flexible
            .extractions
            .iter()
            .zip(&self.strict.correct)
            .zip(&self.flexible.correct)
            .map(|((ex, &s), &f)| QuestionRecord {
                qid: ex.qid.clone(),
                extracted: ex.extracted.clone(),
                mode: ex.mode,
                correct_strict: s,
                correct_flex: f,
            })
            .collect()
    }
}

/// Decodes one completion per test task and scores it both ways.
pub fn evaluate_policy<F: Real>(params: &PolicyParams<F>, test: &Dataset, cfg: &EvalConfig) -> EvalReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let completions: Vec<String> = test
        .tasks
        .iter()
        .map(|t| match cfg.decoding {
            Decoding::Sampled => sample_rollout(params, t, &mut rng).text,
            Decoding::Greedy => greedy_rollout(params, t).text,
        })
        .collect();
    let strict = score_run(&completions, &test.tasks, ParseMode::Strict);
    let flexible = score_run(&completions, &test.tasks, ParseMode::Flexible);
    EvalReport {
        completions,
        strict,
        flexible,
    }
}

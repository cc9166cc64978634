//! Factored categorical "slot" policy with a deterministic text renderer.
//!
//! A completion is built from one categorical decision per slot. Each slot
//! plays the role of a token in the GRPO objective, so log-probabilities and
//! their gradients are exact and cheap.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decimal::Decimal;
use crate::scalar::Real;
use crate::tasks::Task;

pub const THINKING_OPEN: &str = "<thinking>";
pub const THINKING_CLOSE: &str = "</thinking>";
pub const SOLUTION_OPEN: &str = "<solution>";
pub const SOLUTION_CLOSE: &str = "</solution>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub options: Vec<String>,
}

impl SlotSpec {
    pub fn arity(&self) -> usize {
        self.options.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSchema {
    pub slots: Vec<SlotSpec>,
}

pub const SLOT_LINES: usize = 0;
pub const SLOT_CALC: usize = 1;
pub const SLOT_ANSWER: usize = 2;
pub const SLOT_FORMAT: usize = 3;

impl Default for SlotSchema {
    fn default() -> Self {
        let slot = |name: &str, opts: &[&str]| SlotSpec {
            name: name.to_string(),
            options: opts.iter().map(|s| s.to_string()).collect(),
        };
        SlotSchema {
            slots: vec![
                slot("lines", &["0", "1", "2", "3", "4"]),
                slot("calc_density", &["none", "half", "all"]),
                slot("answer_tier", &["exact", "within10", "within20", "wrong", "missing"]),
                slot("format", &["canonical", "missing_close_tag", "duplicated_tag"]),
            ],
        }
    }
}

impl SlotSchema {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn arities(&self) -> Vec<usize> {
        self.slots.iter().map(SlotSpec::arity).collect()
    }

    /// Every joint slot configuration in lexicographic order.
    pub fn joint_outcomes(&self) -> Vec<Vec<usize>> {
        let arities = self.arities();
        let mut out = vec![Vec::new()];
        for a in arities {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..a).map(move |c| {
                        let mut v = prefix.clone();
                        v.push(c);
                        v
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalcDensity {
    None,
    Half,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnswerTier {
    Exact,
    Within10,
    Within20,
    Wrong,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatChoice {
    Canonical,
    MissingCloseTag,
    DuplicatedTag,
}

impl AnswerTier {
    pub const ALL: [AnswerTier; 5] = [
        AnswerTier::Exact,
        AnswerTier::Within10,
        AnswerTier::Within20,
        AnswerTier::Wrong,
        AnswerTier::Missing,
    ];
}

/// Decoded choices for the default schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotChoices {
    pub lines: usize,
    pub calc: CalcDensity,
    pub tier: AnswerTier,
    pub format: FormatChoice,
}

impl SlotChoices {
    pub fn decode(choices: &[usize]) -> Option<SlotChoices> {
        let [lines, calc, tier, format] = *choices else {
            return None;
        };
        if lines > 4 {
            return None;
        }
        Some(SlotChoices {
            lines,
            calc: *[CalcDensity::None, CalcDensity::Half, CalcDensity::All].get(calc)?,
            tier: *AnswerTier::ALL.get(tier)?,
            format: *[
                FormatChoice::Canonical,
                FormatChoice::MissingCloseTag,
                FormatChoice::DuplicatedTag,
            ]
            .get(format)?,
        })
    }

    /// Number of lines that carry an arithmetic expression.
    pub fn calc_lines(&self) -> usize {
        match self.calc {
            CalcDensity::None => 0,
            CalcDensity::Half => self.lines.div_ceil(2),
            CalcDensity::All => self.lines,
        }
    }
}

/// Trainable logits, one vector per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: Deserialize<'de>"))]
pub struct PolicyParams<F> {
    pub slots: Vec<NamedLogits<F>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedLogits<F> {
    pub name: String,
    pub logits: Vec<F>,
}

impl<F: Real> PolicyParams<F> {
    /// Uniform policy: all logits zero.
    pub fn zeros(schema: &SlotSchema) -> Self {
        PolicyParams {
            slots: schema
                .slots
                .iter()
                .map(|s| NamedLogits {
                    name: s.name.clone(),
                    logits: vec![F::zero(); s.arity()],
                })
                .collect(),
        }
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn logits(&self, slot: usize) -> &[F] {
        &self.slots[slot].logits
    }

    pub fn logits_mut(&mut self, slot: usize) -> &mut [F] {
        &mut self.slots[slot].logits
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().all(|s| s.logits.iter().all(|x| x.is_finite()))
    }

    pub fn num_params(&self) -> usize {
        self.slots.iter().map(|s| s.logits.len()).sum()
    }

    /// Flat view in slot order.
    pub fn flatten(&self) -> Vec<F> {
        self.slots.iter().flat_map(|s| s.logits.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[F]) {
        let mut it = flat.iter();
        for s in &mut self.slots {
            for x in &mut s.logits {
                *x = *it.next().expect("flat vector too short");
            }
        }
    }

    /// Per-slot probability vectors.
    pub fn probabilities(&self) -> Vec<Vec<F>> {
        self.slots.iter().map(|s| softmax(&s.logits)).collect()
    }

    /// Same shape, all zeros.
    pub fn zeros_like(&self) -> Self {
        PolicyParams {
            slots: self
                .slots
                .iter()
                .map(|s| NamedLogits {
                    name: s.name.clone(),
                    logits: vec![F::zero(); s.logits.len()],
                })
                .collect(),
        }
    }

    pub fn matches_schema(&self, schema: &SlotSchema) -> bool {
        self.slots.len() == schema.len()
            && self
                .slots
                .iter()
                .zip(&schema.slots)
                .all(|(p, s)| p.name == s.name && p.logits.len() == s.arity())
    }
}

pub fn log_softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = max + logits.iter().map(|&x| (x - max).exp()).sum::<F>().ln();
    logits.iter().map(|&x| x - lse).collect()
}

pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    log_softmax(logits).into_iter().map(F::exp).collect()
}

/// Sampled (or decoded) completion for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout<F> {
    pub task_id: String,
    pub slot_choices: Vec<usize>,
    pub logprobs_old: Vec<F>,
    pub text: String,
}

/// Inverse-CDF draw; uniforms are consumed in slot order so equal seeds
/// give coupled samples across different parameters.
fn inverse_cdf<F: Real>(probs: &[F], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.to_f64_lossy();
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn sample_rollout<F: Real, R: Rng + ?Sized>(
    params: &PolicyParams<F>,
    task: &Task,
    rng: &mut R,
) -> Rollout<F> {
    let mut slot_choices = Vec::with_capacity(params.num_slots());
    let mut logprobs_old = Vec::with_capacity(params.num_slots());
    for s in &params.slots {
        let lp = log_softmax(&s.logits);
        let probs: Vec<F> = lp.iter().map(|x| x.exp()).collect();
        let c = inverse_cdf(&probs, rng.random::<f64>());
        slot_choices.push(c);
        logprobs_old.push(lp[c]);
    }
    let text = render(task, &slot_choices);
    Rollout {
        task_id: task.id.clone(),
        slot_choices,
        logprobs_old,
        text,
    }
}

/// Most likely option per slot (first index on ties).
pub fn greedy_rollout<F: Real>(params: &PolicyParams<F>, task: &Task) -> Rollout<F> {
    let mut slot_choices = Vec::new();
    let mut logprobs_old = Vec::new();
    for s in &params.slots {
        let lp = log_softmax(&s.logits);
        let mut best = 0;
        for (i, v) in lp.iter().enumerate() {
            if *v > lp[best] {
                best = i;
            }
        }
        slot_choices.push(best);
        logprobs_old.push(lp[best]);
    }
    let text = render(task, &slot_choices);
    Rollout {
        task_id: task.id.clone(),
        slot_choices,
        logprobs_old,
        text,
    }
}

/// Per-slot log-probabilities of `choices` and the gradient of each with
/// respect to that slot's logits (`onehot - softmax`).
pub fn logprob_and_grad<F: Real>(params: &PolicyParams<F>, choices: &[usize]) -> (Vec<F>, Vec<Vec<F>>) {
    let mut lps = Vec::with_capacity(choices.len());
    let mut grads = Vec::with_capacity(choices.len());
    for (s, &c) in params.slots.iter().zip(choices) {
        let lp = log_softmax(&s.logits);
        lps.push(lp[c]);
        grads.push(
            lp.iter()
                .enumerate()
                .map(|(i, l)| if i == c { F::one() - l.exp() } else { -l.exp() })
                .collect(),
        );
    }
    (lps, grads)
}

const FILLER_LINES: [&str; 4] = [
    "Read the problem carefully.",
    "Identify the quantities involved.",
    "Decide which operations are needed.",
    "Work through the computation in order.",
];

/// The value a tier states as the final answer; `None` for `Missing`.
pub fn stated_answer(answer: &Decimal, tier: AnswerTier) -> Option<String> {
    let scaled = |n: i64, d: i64, add: i64| {
        answer
            .checked_mul(&Decimal::from_ratio(n, d))
            .and_then(|v| v.checked_add(&Decimal::from_int(add)))
            .map(|v| v.to_string())
            .unwrap_or_else(|| format!("{}", answer.to_f64() * n as f64 / d as f64 + add as f64))
    };
    match tier {
        AnswerTier::Exact => Some(answer.to_string()),
        AnswerTier::Within10 => Some(scaled(21, 20, 0)),
        AnswerTier::Within20 => Some(scaled(23, 20, 0)),
        AnswerTier::Wrong => Some(scaled(3, 2, 13)),
        AnswerTier::Missing => None,
    }
}

/// Renders slot choices (default schema) into tagged completion text.
///
/// The thinking block holds exactly `lines` non-empty lines; the last
/// `calc_lines()` of them replay the task's derivation, ending at the value
/// the answer tier states.
pub fn render(task: &Task, choices: &[usize]) -> String {
    let c = SlotChoices::decode(choices).expect("slot choices outside the default schema");
    let stated = stated_answer(&task.answer, c.tier);
    let conclusion = stated.clone().unwrap_or_else(|| task.answer.to_string());

    let steps = task.steps();
    let mut derivation: Vec<String> = steps
        .iter()
        .map(|s| format!("{} {} {} = {}", s.lhs, s.op, s.rhs, s.result))
        .collect();
    if let (Some(last), Some(step)) = (derivation.last_mut(), steps.last()) {
        *last = format!("{} {} {} = {}", step.lhs, step.op, step.rhs, conclusion);
    }

    let n_calc = c.calc_lines();
    let mut lines: Vec<String> = (0..c.lines - n_calc)
        .map(|i| FILLER_LINES[i % FILLER_LINES.len()].to_string())
        .collect();
    if n_calc > derivation.len() {
        let extra = n_calc - derivation.len();
        lines.extend((0..extra).map(|i| format!("Check: {}", derivation[i % derivation.len()])));
        lines.extend(derivation.iter().cloned());
    } else {
        lines.extend(derivation[derivation.len() - n_calc..].iter().cloned());
    }

    let mut out = String::new();
    out.push_str(THINKING_OPEN);
    out.push('\n');
    for l in &lines {
        out.push_str(l);
        out.push('\n');
    }
    out.push_str(THINKING_CLOSE);
    out.push('\n');
    if c.format == FormatChoice::DuplicatedTag {
        out.push_str(THINKING_OPEN);
        out.push('\n');
    }
    out.push_str(SOLUTION_OPEN);
    out.push_str(stated.as_deref().unwrap_or(""));
    if c.format != FormatChoice::MissingCloseTag {
        out.push_str(SOLUTION_CLOSE);
    }
    out
}

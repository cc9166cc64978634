//! Synthetic arithmetic word problems and GSM8K-style ingestion.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decimal::Decimal;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: record has no {field:?} field")]
    MissingField { line: usize, field: &'static str },
    #[error("record {id}: unparseable answer {text:?}")]
    BadAnswer { id: String, text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
}

impl Op {
    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
        }
    }

    fn apply(self, a: i64, b: i64) -> i64 {
        match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
        }
    }

    fn checked_apply(self, a: i64, b: i64) -> Option<i64> {
        match self {
            Op::Add => a.checked_add(b),
            Op::Sub => a.checked_sub(b),
            Op::Mul => a.checked_mul(b),
        }
    }
}

/// One left-to-right evaluation step `lhs op rhs = result`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub lhs: Decimal,
    pub op: char,
    pub rhs: Decimal,
    pub result: Decimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub question: String,
    pub answer: Decimal,
    /// Operand count; 0 for ingested tasks whose structure is unknown.
    pub difficulty: u8,
    /// Operand expression such as `"3 + 4 * 2"`, evaluated left to right.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
}

impl Task {
    /// Canonical answer text, e.g. `"1234"` or `"7.5"`.
    pub fn answer_text(&self) -> String {
        self.answer.to_string()
    }

    /// Derivation steps used by the completion renderer.
    ///
    /// Generated tasks replay their expression. Ingested tasks pair up the
    /// first two integers of the question, falling back to `answer * 1`.
    pub fn steps(&self) -> Vec<Step> {
        if let Some(expr) = &self.expression {
            if let Some((first, rest)) = parse_expression(expr) {
                let mut acc = first;
                return rest
                    .into_iter()
                    .map(|(op, v)| {
                        let result = op.apply(acc, v);
                        let step = Step {
                            lhs: acc.into(),
                            op: op.symbol(),
                            rhs: v.into(),
                            result: result.into(),
                        };
                        acc = result;
                        step
                    })
                    .collect();
            }
        }
        let nums: Vec<i64> = self
            .question
            .split(|c: char| !c.is_ascii_digit())
            .filter(|s| !s.is_empty() && s.len() < 12)
            .filter_map(|s| s.parse().ok())
            .take(2)
            .collect();
        // ingested word problems: use the first two numbers when some
        // operator turns them into the answer, else an identity step
        if let [a, b] = nums[..] {
            for op in [Op::Add, Op::Sub, Op::Mul] {
                let Some(r) = op.checked_apply(a, b) else { continue };
                if Decimal::from_int(r) == self.answer {
                    return vec![Step {
                        lhs: a.into(),
                        op: op.symbol(),
                        rhs: b.into(),
                        result: r.into(),
                    }];
                }
            }
        }
        vec![Step {
            lhs: self.answer,
            op: '*',
            rhs: 1.into(),
            result: self.answer,
        }]
    }
}

fn parse_expression(expr: &str) -> Option<(i64, Vec<(Op, i64)>)> {
    let mut toks = expr.split_whitespace();
    let first = toks.next()?.parse().ok()?;
    let mut rest = Vec::new();
    while let Some(op) = toks.next() {
        let op = match op {
            "+" => Op::Add,
            "-" => Op::Sub,
            "*" => Op::Mul,
            _ => return None,
        };
        rest.push((op, toks.next()?.parse().ok()?));
    }
    Some((first, rest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub split: Split,
    pub tasks: Vec<Task>,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Share of three-operand problems in generated splits.
pub const DEFAULT_THREE_OPERAND_SHARE: f64 = 0.5;

const NAMES: [&str; 8] = ["Ava", "Ben", "Chloe", "Dev", "Elena", "Farid", "Grace", "Hugo"];
const ITEMS: [&str; 6] = ["apples", "marbles", "stickers", "pencils", "cards", "shells"];

fn two_operand_question(rng: &mut ChaCha8Rng, op: Op, a: i64, b: i64) -> String {
    let name = NAMES[rng.random_range(0..NAMES.len())];
    let item = ITEMS[rng.random_range(0..ITEMS.len())];
    match (op, rng.random_range(0..2u8)) {
        (Op::Add, 0) => format!("{name} has {a} {item} and gets {b} more. How many {item} does {name} have now?"),
        (Op::Add, _) => format!("What is {a} plus {b}?"),
        (Op::Sub, 0) => format!("{name} had {a} {item} and gave away {b}. How many {item} are left?"),
        (Op::Sub, _) => format!("What is {a} minus {b}?"),
        (Op::Mul, 0) => format!("{name} fills {a} bags with {b} {item} each. How many {item} are there in total?"),
        (Op::Mul, _) => format!("What is {a} times {b}?"),
    }
}

fn op_phrase(op: Op) -> &'static str {
    match op {
        Op::Add => "add",
        Op::Sub => "subtract",
        Op::Mul => "multiply by",
    }
}

fn random_op(rng: &mut ChaCha8Rng) -> Op {
    match rng.random_range(0..3u8) {
        0 => Op::Add,
        1 => Op::Sub,
        _ => Op::Mul,
    }
}

/// Draws one task with a strictly positive answer and intermediate values.
fn draw_task(rng: &mut ChaCha8Rng, three_share: f64) -> (String, String, i64, u8) {
    loop {
        let n = if rng.random::<f64>() < three_share { 3 } else { 2 };
        let operands: Vec<i64> = (0..n).map(|_| rng.random_range(1..=99)).collect();
        let ops: Vec<Op> = (1..n).map(|_| random_op(rng)).collect();
        let mut acc = operands[0];
        let mut ok = true;
        for (op, v) in ops.iter().zip(&operands[1..]) {
            acc = op.apply(acc, *v);
            if acc < 1 {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let mut expr = operands[0].to_string();
        for (op, v) in ops.iter().zip(&operands[1..]) {
            expr.push_str(&format!(" {} {v}", op.symbol()));
        }
        let question = if n == 2 {
            two_operand_question(rng, ops[0], operands[0], operands[1])
        } else {
            format!(
                "Start with {}, {} {}, then {} {}. What number do you get?",
                operands[0],
                op_phrase(ops[0]),
                operands[1],
                op_phrase(ops[1]),
                operands[2]
            )
        };
        return (question, expr, acc, n as u8);
    }
}

/// Generates disjoint train and test splits; a pure function of its arguments.
pub fn generate_dataset(seed: u64, n_train: usize, n_test: usize) -> (Dataset, Dataset) {
    generate_dataset_with(seed, n_train, n_test, DEFAULT_THREE_OPERAND_SHARE)
}

pub fn generate_dataset_with(
    seed: u64,
    n_train: usize,
    n_test: usize,
    three_operand_share: f64,
) -> (Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut make = |split: Split, n: usize, rng: &mut ChaCha8Rng| {
        let mut tasks = Vec::with_capacity(n);
        while tasks.len() < n {
            let (question, expr, answer, difficulty) = draw_task(rng, three_operand_share);
            if !seen.insert(question.clone()) {
                continue;
            }
            tasks.push(Task {
                id: format!("{split}-{:05}", tasks.len()),
                question,
                answer: answer.into(),
                difficulty,
                expression: Some(expr),
            });
        }
        Dataset { split, tasks, seed }
    };
    let train = make(Split::Train, n_train, &mut rng);
    let test = make(Split::Test, n_test, &mut rng);
    (train, test)
}

#[derive(Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    question: Option<String>,
    answer: Option<serde_json::Value>,
}

/// Reads one JSON object per line with `question` and `answer` fields.
///
/// GSM8K answers of the form `"... #### 72"` keep only the text after the
/// last `####`. Blank lines are skipped.
pub fn ingest_dataset(path: &Path, split: Split) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut tasks = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            line: lineno,
            reason: e.to_string(),
        })?;
        let question = rec.question.ok_or(DatasetError::MissingField {
            line: lineno,
            field: "question",
        })?;
        let raw_answer = rec.answer.ok_or(DatasetError::MissingField {
            line: lineno,
            field: "answer",
        })?;
        let id = match rec.id {
            Some(serde_json::Value::String(s)) => s,
            Some(v) => v.to_string(),
            None => format!("{split}-{:05}", tasks.len()),
        };
        let text = match raw_answer {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => other.to_string(),
        };
        let final_part = text.rsplit("####").next().unwrap_or(&text);
        let answer = Decimal::parse_lenient(final_part).map_err(|_| DatasetError::BadAnswer {
            id: id.clone(),
            text: text.clone(),
        })?;
        if !ids.insert(id.clone()) {
            return Err(DatasetError::Malformed {
                line: lineno,
                reason: format!("duplicate id {id}"),
            });
        }
        tasks.push(Task {
            id,
            question,
            answer,
            difficulty: 0,
            expression: None,
        });
    }
    Ok(Dataset {
        split,
        tasks,
        seed: 0,
    })
}

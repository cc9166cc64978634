//! Run directory layout.
//!
//! ```text
//! <out>/data/{train,test}.jsonl
//! <out>/pool/...                       reward pool (see rewardsmith_search::pool)
//! <out>/runs/<id>/result.json          trial metrics and status (written last)
//! <out>/runs/<id>/correct.json         per-question correctness, strict and flexible
//! <out>/runs/<id>/steps.jsonl          training log
//! <out>/runs/<id>/params.json          trained policy
//! <out>/runs/<id>/questions.jsonl      completion and extraction per question
//! <out>/results.jsonl                  every trial result, appended
//! <out>/manifest.jsonl                 invocations and per-trial bookkeeping, appended
//! ```

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rewardsmith_core::eval::{EvalReport, ExtractMode};
use rewardsmith_core::trial::TrialOutcome;
use rewardsmith_core::{PolicyParams, TrialResult};
use rewardsmith_search::pool::{read_json, write_atomic, write_json};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vectors {
    pub correct: Vec<bool>,
    pub correct_flex: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionLine {
    pub qid: String,
    pub completion: String,
    pub extracted: Option<String>,
    pub mode: ExtractMode,
    pub correct_strict: bool,
    pub correct_flex: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<String>,
    pub result: TrialResult,
}

pub struct Store {
    pub root: PathBuf,
}

pub fn append_line<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_string(value).map_err(io::Error::other)?;
    line.push('\n');
    f.write_all(line.as_bytes())?;
    f.sync_all()
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Store { root: root.into() }
    }

    pub fn pool_dir(&self) -> PathBuf {
        self.root.join("pool")
    }

    pub fn run_dir(&self, id: &str) -> PathBuf {
        self.root.join("runs").join(id)
    }

    pub fn manifest(&self, record: &serde_json::Value) -> io::Result<()> {
        append_line(&self.root.join("manifest.jsonl"), record)
    }

    /// Writes a trial's artifacts; `result.json` goes last and marks the run
    /// complete. Failed trials get metadata only.
    pub fn persist_trial(&self, id: &str, members: &[String], outcome: &TrialOutcome) -> io::Result<Vec<PathBuf>> {
        let dir = self.run_dir(id);
        fs::create_dir_all(&dir)?;
        let mut written = Vec::new();
        let mut meta = outcome.result.clone();
        if meta.is_ok() {
            let p = dir.join("correct.json");
            write_json(
                &p,
                &Vectors {
                    correct: std::mem::take(&mut meta.correct),
                    correct_flex: std::mem::take(&mut meta.correct_flex),
                },
            )?;
            written.push(p);
            let p = dir.join("steps.jsonl");
            let mut s = String::new();
            for l in &outcome.step_log {
                s.push_str(&serde_json::to_string(l).map_err(io::Error::other)?);
                s.push('\n');
            }
            write_atomic(&p, s.as_bytes())?;
            written.push(p);
            if let Some(params) = &outcome.params {
                let p = dir.join("params.json");
                write_json(&p, params)?;
                written.push(p);
            }
            if let Some(report) = &outcome.eval {
                let p = dir.join("questions.jsonl");
                write_atomic(&p, questions_jsonl(report)?.as_bytes())?;
                written.push(p);
            }
        } else {
            for stale in ["correct.json", "steps.jsonl", "params.json", "questions.jsonl"] {
                let _ = fs::remove_file(dir.join(stale));
            }
        }
        let record = RunRecord {
            id: id.to_string(),
            members: members.to_vec(),
            result: meta,
        };
        let p = dir.join("result.json");
        write_json(&p, &record)?;
        written.push(p);
        append_line(
            &self.root.join("results.jsonl"),
            &RunRecord {
                result: outcome.result.clone(),
                ..record
            },
        )?;
        Ok(written)
    }

    /// A run's record with its correctness vectors restored. Falls back to
    /// pool entries of the same name.
    pub fn load_run(&self, id: &str) -> io::Result<RunRecord> {
        let dir = self.run_dir(id);
        if dir.join("result.json").exists() {
            let mut rec: RunRecord = read_json(&dir.join("result.json"))?;
            if rec.result.is_ok() {
                let v: Vectors = read_json(&dir.join("correct.json"))?;
                rec.result.correct = v.correct;
                rec.result.correct_flex = v.correct_flex;
            }
            return Ok(rec);
        }
        let pool = rewardsmith_search::PoolDir::new(self.pool_dir()).load()?;
        match pool.get(id).and_then(|e| e.result.clone()) {
            Some(result) => Ok(RunRecord {
                id: id.to_string(),
                members: Vec::new(),
                result,
            }),
            None => Err(io::Error::new(io::ErrorKind::NotFound, format!("no run or pool entry named {id}"))),
        }
    }

    pub fn load_questions(&self, id: &str) -> io::Result<Vec<QuestionLine>> {
        let p = self.run_dir(id).join("questions.jsonl");
        let text = fs::read_to_string(&p).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", p.display())))?;
        text.lines()
            .map(|l| serde_json::from_str(l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
            .collect()
    }

    pub fn load_params(path: &Path) -> io::Result<PolicyParams> {
        read_json(path)
    }
}

fn questions_jsonl(report: &EvalReport) -> io::Result<String> {
    let mut s = String::new();
    for (rec, completion) in report.question_records().into_iter().zip(&report.completions) {
        let line = QuestionLine {
            qid: rec.qid,
            completion: completion.clone(),
            extracted: rec.extracted,
            mode: rec.mode,
            correct_strict: rec.correct_strict,
            correct_flex: rec.correct_flex,
        };
        s.push_str(&serde_json::to_string(&line).map_err(io::Error::other)?);
        s.push('\n');
    }
    Ok(s)
}

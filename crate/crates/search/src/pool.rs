//! Ranked reward pool and its on-disk layout.
//!
//! ```text
//! <pool>/index.json                 ranked index
//! <pool>/rounds/round_<r>.json      prompt and raw candidates of a round
//! <pool>/rewards/<name>.rwd         source
//! <pool>/rewards/<name>.json        metadata and trial metrics (written last)
//! <pool>/rewards/<name>.vec.json    per-question correctness
//! <pool>/rewards/<name>.steps.jsonl training log
//! ```
//!
//! An entry exists once its metadata file does; every file is written to a
//! temporary path and renamed into place.

use std::cmp::Ordering;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rewardsmith_core::{StepLog, TrialResult};
use rewardsmith_lang::{RewardProgram, Status};
use serde::{Deserialize, Serialize};

use crate::prompt::Summary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub program: RewardProgram,
    /// Absent when validation rejected the program.
    pub result: Option<TrialResult>,
    pub rank: usize,
}

impl PoolEntry {
    pub fn name(&self) -> &str {
        &self.program.name
    }

    /// Validated and screened without a runtime fault.
    pub fn is_usable(&self) -> bool {
        self.program.is_valid() && self.result.as_ref().is_some_and(|r| r.is_ok())
    }

    pub fn f1(&self) -> f64 {
        self.result.as_ref().map_or(0.0, |r| r.metrics.f1)
    }

    pub fn accuracy(&self) -> f64 {
        self.result.as_ref().map_or(0.0, |r| r.metrics.accuracy)
    }

    pub fn status_label(&self) -> String {
        match (&self.program.status, &self.result) {
            (Status::Rejected { stage, .. }, _) => format!("rejected(stage{})", stage.number()),
            (Status::Valid, Some(r)) if !r.is_ok() => "rejected(runtime)".into(),
            (Status::Valid, Some(_)) => "valid".into(),
            _ => "unscreened".into(),
        }
    }
}

/// Usable entries first, then F1 desc, accuracy desc, name asc.
pub fn rank_order(a: &PoolEntry, b: &PoolEntry) -> Ordering {
    b.is_usable()
        .cmp(&a.is_usable())
        .then(b.f1().total_cmp(&a.f1()))
        .then(b.accuracy().total_cmp(&a.accuracy()))
        .then_with(|| a.name().cmp(b.name()))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardPool {
    pub entries: Vec<PoolEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub rank: usize,
    pub name: String,
    pub round: u32,
    pub status: String,
    pub f1: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

impl RewardPool {
    pub fn rerank(&mut self) {
        self.entries.sort_by(rank_order);
        for (i, e) in self.entries.iter_mut().enumerate() {
            e.rank = i + 1;
        }
    }

    pub fn get(&self, name: &str) -> Option<&PoolEntry> {
        self.entries.iter().find(|e| e.name() == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name().to_string()).collect()
    }

    /// Usable entries in rank order.
    pub fn usable(&self) -> Vec<&PoolEntry> {
        let mut v: Vec<&PoolEntry> = self.entries.iter().filter(|e| e.is_usable()).collect();
        v.sort_by(|a, b| rank_order(a, b));
        v
    }

    /// Feedback lines for every screened entry from rounds before `round`.
    pub fn history_before(&self, round: u32) -> Vec<Summary> {
        self.entries
            .iter()
            .filter(|e| e.program.round < round && e.is_usable())
            .map(|e| Summary {
                name: e.name().to_string(),
                round: e.program.round,
                f1: e.f1(),
                accuracy: e.accuracy(),
            })
            .collect()
    }

    pub fn index(&self) -> Vec<IndexRow> {
        let mut v: Vec<&PoolEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| rank_order(a, b));
        v.iter()
            .enumerate()
            .map(|(i, e)| {
                let m = e.result.as_ref().map(|r| r.metrics).unwrap_or_default();
                IndexRow {
                    rank: i + 1,
                    name: e.name().to_string(),
                    round: e.program.round,
                    status: e.status_label(),
                    f1: m.f1,
                    accuracy: m.accuracy,
                    precision: m.precision,
                    recall: m.recall,
                }
            })
            .collect()
    }
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<T> {
    let s = fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
struct Meta {
    name: String,
    description: String,
    round: u32,
    validation: Status,
    trial: Option<TrialResult>,
}

#[derive(Serialize, Deserialize)]
struct Vectors {
    correct: Vec<bool>,
    correct_flex: Vec<bool>,
}

/// Paths written for one entry.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredPaths {
    pub source: PathBuf,
    pub meta: PathBuf,
    pub vectors: Option<PathBuf>,
    pub steps: Option<PathBuf>,
}

pub struct PoolDir {
    root: PathBuf,
}

impl PoolDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        PoolDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    pub fn round_path(&self, round: u32) -> PathBuf {
        self.root.join("rounds").join(format!("round_{round}.json"))
    }

    fn reward_path(&self, name: &str, ext: &str) -> PathBuf {
        self.root.join("rewards").join(format!("{name}.{ext}"))
    }

    /// Persists an entry. Vectors and the step log go first so the metadata
    /// file marks a complete entry.
    pub fn persist(&self, entry: &PoolEntry, steps: &[StepLog]) -> io::Result<StoredPaths> {
        let name = entry.name();
        let source = self.reward_path(name, "rwd");
        write_atomic(&source, entry.program.source.as_bytes())?;
        let mut vectors = None;
        let mut step_path = None;
        let mut trial = entry.result.clone();
        if let Some(r) = trial.as_mut().filter(|r| r.is_ok()) {
            let p = self.reward_path(name, "vec.json");
            write_json(
                &p,
                &Vectors {
                    correct: std::mem::take(&mut r.correct),
                    correct_flex: std::mem::take(&mut r.correct_flex),
                },
            )?;
            vectors = Some(p);
            let p = self.reward_path(name, "steps.jsonl");
            let mut log = String::new();
            for s in steps {
                log.push_str(&serde_json::to_string(s).map_err(io::Error::other)?);
                log.push('\n');
            }
            write_atomic(&p, log.as_bytes())?;
            step_path = Some(p);
        }
        let meta = self.reward_path(name, "json");
        write_json(
            &meta,
            &Meta {
                name: name.to_string(),
                description: entry.program.description.clone(),
                round: entry.program.round,
                validation: entry.program.status.clone(),
                trial,
            },
        )?;
        Ok(StoredPaths {
            source,
            meta,
            vectors,
            steps: step_path,
        })
    }

    /// Loads every complete entry; leftovers of interrupted writes are ignored.
    pub fn load(&self) -> io::Result<RewardPool> {
        let dir = self.root.join("rewards");
        let mut pool = RewardPool::default();
        if !dir.exists() {
            return Ok(pool);
        }
        let mut metas: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let n = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                n.ends_with(".json") && !n.ends_with(".vec.json")
            })
            .collect();
        metas.sort();
        for path in metas {
            let meta: Meta = read_json(&path)?;
            let source = fs::read_to_string(self.reward_path(&meta.name, "rwd"))?;
            let mut trial = meta.trial;
            if let Some(r) = trial.as_mut().filter(|r| r.is_ok()) {
                let v: Vectors = read_json(&self.reward_path(&meta.name, "vec.json"))?;
                r.correct = v.correct;
                r.correct_flex = v.correct_flex;
            }
            let mut program = RewardProgram::new(meta.name, source, meta.description, meta.round);
            program.status = meta.validation;
            pool.entries.push(PoolEntry {
                program,
                result: trial,
                rank: 0,
            });
        }
        pool.rerank();
        Ok(pool)
    }

    pub fn write_index(&self, pool: &RewardPool) -> io::Result<()> {
        write_json(&self.index_path(), &pool.index())
    }

    pub fn read_steps(&self, name: &str) -> io::Result<Vec<StepLog>> {
        let s = fs::read_to_string(self.reward_path(name, "steps.jsonl"))?;
        s.lines()
            .map(|l| serde_json::from_str(l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
            .collect()
    }
}

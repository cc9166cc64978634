//! Line-padding audit of thinking blocks, split by answer correctness.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::rewards::{thinking_block, thinking_lines};
use crate::stats::quantile_sorted;

static ARITH_STEP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+\s*[+\-*/]\s*\d+").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Summary {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: quantile_sorted(&s, 0.5),
            p10: quantile_sorted(&s, 0.1),
            p90: quantile_sorted(&s, 0.9),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub lines: Option<Summary>,
    /// Fraction of thinking lines holding an arithmetic step; 0 for empty blocks.
    pub arithmetic_density: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub overall: GroupStats,
    pub correct: GroupStats,
    pub incorrect: GroupStats,
}

/// Non-empty thinking lines and the share matching an arithmetic step.
pub fn line_profile(text: &str) -> (usize, f64) {
    let Some(block) = thinking_block(text) else {
        return (0, 0.0);
    };
    let lines = thinking_lines(block);
    if lines.is_empty() {
        return (0, 0.0);
    }
    let hits = lines.iter().filter(|l| ARITH_STEP.is_match(l)).count();
    (lines.len(), hits as f64 / lines.len() as f64)
}

fn group(profiles: &[(usize, f64)]) -> GroupStats {
    let lines: Vec<f64> = profiles.iter().map(|p| p.0 as f64).collect();
    let dens: Vec<f64> = profiles.iter().map(|p| p.1).collect();
    GroupStats {
        count: profiles.len(),
        lines: Summary::of(&lines),
        arithmetic_density: Summary::of(&dens),
    }
}

pub fn hacking_audit(completions: &[String], correct: &[bool]) -> AuditReport {
    assert_eq!(completions.len(), correct.len(), "audit inputs must align");
    let profiles: Vec<(usize, f64)> = completions.iter().map(|c| line_profile(c)).collect();
    let pick = |want: bool| -> Vec<(usize, f64)> {
        profiles
            .iter()
            .zip(correct)
            .filter(|(_, &c)| c == want)
            .map(|(p, _)| *p)
            .collect()
    };
    AuditReport {
        overall: group(&profiles),
        correct: group(&pick(true)),
        incorrect: group(&pick(false)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_corpus() {
        let c = "<thinking>\n1 + 2 = 3\n3 * 2 = 6\n6 - 1 = 5\n</thinking><solution>5</solution>".to_string();
        let report = hacking_audit(&[c.clone(), c.clone(), c], &[true, false, true]);
        let lines = report.overall.lines.unwrap();
        assert_eq!(lines.mean, 3.0);
        assert_eq!(report.overall.arithmetic_density.unwrap().mean, 1.0);
        assert_eq!(report.correct.lines, report.incorrect.lines);
        assert_eq!(report.correct.arithmetic_density, report.incorrect.arithmetic_density);
    }

    #[test]
    fn ordering_is_reflected() {
        let long = "<thinking>\na\nb\nc\nd\n</thinking>".to_string();
        let short = "<thinking>\na\n</thinking>".to_string();
        let r = hacking_audit(&[long.clone(), short.clone(), long], &[true, false, true]);
        assert!(r.correct.lines.unwrap().mean > r.incorrect.lines.unwrap().mean);
        assert_eq!(r.correct.count, 2);
    }

    #[test]
    fn missing_block_counts_zero() {
        assert_eq!(line_profile("no tags"), (0, 0.0));
        let r = hacking_audit(&["x".to_string()], &[false]);
        assert!(r.correct.lines.is_none());
        assert_eq!(r.incorrect.lines.unwrap().p90, 0.0);
    }
}

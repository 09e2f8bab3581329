use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Score of one segment under one backend and prompt-strategy setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScore {
    pub segment_id: String,
    pub backend: String,
    pub strategy: bool,
    pub narration: f64,
    pub reasoning: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub backend: String,
    pub strategy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub backend: String,
    pub strategy: bool,
    pub segments: usize,
    pub narration: f64,
    pub reasoning: f64,
    pub narration_percent: String,
    pub reasoning_percent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub groups: Vec<GroupSummary>,
}

pub fn format_percent(value: f64) -> String {
    format!("{:.1}%", value * 100.0)
}

fn mean(values: impl Iterator<Item = f64>) -> (f64, usize) {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (sum / n as f64, n)
}

/// Mean narration and reasoning value for each requested group.
pub fn aggregate(scores: &[SegmentScore], groups: &[GroupKey]) -> Result<AccuracyReport, EvalError> {
    let groups = groups
        .iter()
        .map(|key| {
            let members = || {
                scores
                    .iter()
                    .filter(|s| s.backend == key.backend && s.strategy == key.strategy)
            };
            let (narration, n) = mean(members().map(|s| s.narration));
            if n == 0 {
                return Err(EvalError::EmptyGroup {
                    backend: key.backend.clone(),
                    strategy: if key.strategy { "on" } else { "off" }.to_string(),
                });
            }
            let (reasoning, _) = mean(members().map(|s| s.reasoning));
            Ok(GroupSummary {
                backend: key.backend.clone(),
                strategy: key.strategy,
                segments: n,
                narration,
                reasoning,
                narration_percent: format_percent(narration),
                reasoning_percent: format_percent(reasoning),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(AccuracyReport { groups })
}

/// Aggregates every group present in `scores`, in order of first appearance.
pub fn aggregate_all(scores: &[SegmentScore]) -> Result<AccuracyReport, EvalError> {
    let mut keys: Vec<GroupKey> = Vec::new();
    for s in scores {
        let key = GroupKey {
            backend: s.backend.clone(),
            strategy: s.strategy,
        };
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    aggregate(scores, &keys)
}

impl AccuracyReport {
    fn backends(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for g in &self.groups {
            if !out.contains(&g.backend.as_str()) {
                out.push(&g.backend);
            }
        }
        out
    }

    fn cell(&self, backend: &str, strategy: bool, narration: bool) -> &str {
        self.groups
            .iter()
            .find(|g| g.backend == backend && g.strategy == strategy)
            .map_or("-", |g| {
                if narration {
                    g.narration_percent.as_str()
                } else {
                    g.reasoning_percent.as_str()
                }
            })
    }

    /// Task (Nar./Rea.) by prompt strategy (✓/×) rows, one column per backend.
    pub fn render_table(&self) -> String {
        let backends = self.backends();
        let widths: Vec<usize> = backends.iter().map(|b| b.chars().count().max("100.0%".len())).collect();
        let mut out = String::new();
        let _ = write!(out, "{:<5} {:<2} |", "Task", "PS");
        for (b, w) in backends.iter().zip(&widths) {
            let _ = write!(out, " {b:>w$} |");
        }
        out.push('\n');
        out.push_str(&"-".repeat(9));
        out.push('+');
        for w in &widths {
            out.push_str(&"-".repeat(w + 2));
            out.push('+');
        }
        out.push('\n');
        for (task, narration) in [("Nar.", true), ("Rea.", false)] {
            for (mark, strategy) in [("✓", true), ("×", false)] {
                let _ = write!(out, "{task:<5} {mark:<2} |");
                for (b, w) in backends.iter().zip(&widths) {
                    let _ = write!(out, " {:>w$} |", self.cell(b, strategy, narration));
                }
                out.push('\n');
            }
        }
        out
    }
}

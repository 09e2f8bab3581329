//! Scoring of backend output against human annotations.
//!
//! Narration is keyword overlap with misses-only penalty. Reasoning is
//! keyword overlap gated on causal direction: any statement that runs the
//! wrong way makes the whole reasoning output score zero.

mod narration;
mod reasoning;
mod report;

use thiserror::Error;

pub use narration::{render_item, render_items, score_narration, KeywordFrequency, NarrationScore};
pub use reasoning::{
    extract_causal_statements, is_flawed, render_statements, score_reasoning, validate_reasoning, ReasoningScore,
};
pub use report::{aggregate, aggregate_all, format_percent, AccuracyReport, GroupKey, GroupSummary, SegmentScore};

use crate::exec::{self, ExecMode};
use crate::segments::AnnotationItem;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("nothing to score")]
    NothingToScore,
    #[error("empty group {backend}/{strategy}")]
    EmptyGroup { backend: String, strategy: String },
}

/// Scores many (output, annotation) pairs; results are in input order.
pub fn score_narration_batch<S: AsRef<str> + Sync>(
    mode: ExecMode,
    cases: &[(S, Vec<AnnotationItem>)],
    taxonomy: &Taxonomy,
) -> Vec<Result<NarrationScore, EvalError>> {
    exec::map(mode, cases, |(text, ann)| score_narration(text.as_ref(), ann, taxonomy))
}

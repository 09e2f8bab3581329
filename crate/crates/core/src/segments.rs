//! Segment manifests: line-delimited JSON records of pre-extracted frames
//! with their tagged observations and the human annotation of the clip.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{Category, EntryId, Taxonomy};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("record {record}: malformed: {message}")]
    Malformed { record: usize, message: String },
    #[error("record {record}: segment {id:?}: non-contiguous at index {expected}")]
    NonContiguous { record: usize, id: String, expected: usize },
    #[error("record {record}: segment {id:?}: timestamp decreases at index {index}")]
    TimestampOrder { record: usize, id: String, index: usize },
    #[error("record {record}: unknown annotation category {name:?}")]
    UnknownCategory { record: usize, name: String },
    #[error("record {record}: duplicate segment id {id:?}")]
    DuplicateId { record: usize, id: String },
    #[error("segment {id:?}: annotation label {label:?} is not a {category} keyword")]
    UnresolvedLabel {
        id: String,
        label: String,
        category: Category,
    },
    #[error("cannot split {frames} frames into {parts} parts")]
    InvalidSplit { frames: usize, parts: usize },
    #[error("keyframe stride must be positive")]
    ZeroStride,
    #[error("reading manifest: {0}")]
    Io(#[from] std::io::Error),
}

/// A tagged free-text snippet attached to a frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameObservation {
    pub category: Category,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp_ms: u64,
    pub image_ref: String,
    #[serde(default)]
    pub observations: Vec<FrameObservation>,
}

/// One ground-truth keyword of a clip. `count` is only meaningful for agents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotationItem {
    pub category: Category,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
}

impl AnnotationItem {
    pub fn new(category: Category, label: impl Into<String>) -> Self {
        AnnotationItem {
            category,
            label: label.into(),
            count: None,
        }
    }

    pub fn counted(category: Category, label: impl Into<String>, count: u32) -> Self {
        AnnotationItem {
            category,
            label: label.into(),
            count: Some(count),
        }
    }

    /// Entry this item refers to, when the label is a phrase of the same category.
    pub fn resolve(&self, taxonomy: &Taxonomy) -> Option<EntryId> {
        taxonomy
            .lookup(&self.label)
            .filter(|id| taxonomy.entry(*id).category == self.category)
    }
}

impl fmt::Display for AnnotationItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.count {
            Some(n) => write!(f, "{}x{} ({})", self.label, n, self.category),
            None => write!(f, "{} ({})", self.label, self.category),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalStatement {
    pub causes: Vec<AnnotationItem>,
    pub effects: Vec<AnnotationItem>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(default)]
    pub items: Vec<AnnotationItem>,
    #[serde(default)]
    pub reasoning: Vec<CausalStatement>,
}

impl Annotation {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty() && self.reasoning.is_empty()
    }
}

/// Position of a split part inside its parent clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartInfo {
    /// 0-based part number.
    pub index: usize,
    pub of: usize,
    /// Original index of this part's frame 0.
    pub frame_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub source_clip: String,
    pub frames: Vec<FrameRecord>,
    #[serde(default)]
    pub annotation: Annotation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<PartInfo>,
}

impl Segment {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn is_annotated(&self) -> bool {
        !self.annotation.is_empty()
    }

    /// Checks that every annotation label is a keyword of its own category.
    pub fn check_labels(&self, taxonomy: &Taxonomy) -> Result<(), SegmentError> {
        let items = self.annotation.items.iter().chain(
            self.annotation
                .reasoning
                .iter()
                .flat_map(|s| s.causes.iter().chain(&s.effects)),
        );
        for item in items {
            if item.resolve(taxonomy).is_none() {
                return Err(SegmentError::UnresolvedLabel {
                    id: self.id.clone(),
                    label: item.label.clone(),
                    category: item.category,
                });
            }
        }
        Ok(())
    }

    /// Copy of this segment restricted to the first `n` frames.
    pub fn prefix(&self, n: usize) -> Segment {
        self.slice(0..n.min(self.frames.len()))
    }

    /// Copy holding `range` of the frames, re-indexed from 0.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Segment {
        let start = range.start;
        Segment {
            id: self.id.clone(),
            source_clip: self.source_clip.clone(),
            frames: self.frames[range]
                .iter()
                .enumerate()
                .map(|(i, f)| FrameRecord { index: i, ..f.clone() })
                .collect(),
            annotation: self.annotation.clone(),
            part: Some(PartInfo {
                index: self.part.map_or(0, |p| p.index),
                of: self.part.map_or(1, |p| p.of),
                frame_offset: self.part.map_or(0, |p| p.frame_offset) + start,
            }),
        }
    }
}

// Wire-level shapes. Categories are read as strings so an unknown one can be
// reported as such instead of as a generic parse failure.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    id: String,
    source_clip: String,
    frames: Vec<RawFrame>,
    #[serde(default)]
    annotation: RawAnnotation,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    index: usize,
    timestamp_ms: u64,
    image_ref: String,
    #[serde(default)]
    observations: Vec<RawTagged>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTagged {
    category: String,
    text: String,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawAnnotation {
    #[serde(default)]
    items: Vec<RawItem>,
    #[serde(default)]
    reasoning: Vec<RawStatement>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    category: String,
    label: String,
    #[serde(default)]
    count: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStatement {
    causes: Vec<RawItem>,
    effects: Vec<RawItem>,
}

fn category(record: usize, name: &str) -> Result<Category, SegmentError> {
    Category::from_str(name).map_err(|_| SegmentError::UnknownCategory {
        record,
        name: name.to_string(),
    })
}

fn malformed(record: usize, message: impl Into<String>) -> SegmentError {
    SegmentError::Malformed {
        record,
        message: message.into(),
    }
}

fn convert_item(record: usize, raw: RawItem) -> Result<AnnotationItem, SegmentError> {
    let category = category(record, &raw.category)?;
    if raw.label.trim().is_empty() {
        return Err(malformed(record, "empty annotation label"));
    }
    match raw.count {
        Some(0) => return Err(malformed(record, format!("count of {:?} must be positive", raw.label))),
        Some(_) if category != Category::Agent => {
            return Err(malformed(record, format!("count on non-agent item {:?}", raw.label)))
        }
        _ => {}
    }
    Ok(AnnotationItem {
        category,
        label: raw.label,
        count: raw.count,
    })
}

fn convert(record: usize, raw: RawSegment) -> Result<Segment, SegmentError> {
    if raw.id.trim().is_empty() {
        return Err(malformed(record, "empty segment id"));
    }
    if raw.frames.is_empty() {
        return Err(malformed(record, format!("segment {:?} has no frames", raw.id)));
    }
    let mut frames = Vec::with_capacity(raw.frames.len());
    let mut last_ts = 0;
    for (expected, frame) in raw.frames.into_iter().enumerate() {
        if frame.index != expected {
            return Err(SegmentError::NonContiguous {
                record,
                id: raw.id,
                expected,
            });
        }
        if frame.timestamp_ms < last_ts {
            return Err(SegmentError::TimestampOrder {
                record,
                id: raw.id,
                index: expected,
            });
        }
        last_ts = frame.timestamp_ms;
        let observations = frame
            .observations
            .into_iter()
            .map(|o| {
                Ok(FrameObservation {
                    category: category(record, &o.category)?,
                    text: o.text,
                })
            })
            .collect::<Result<_, SegmentError>>()?;
        frames.push(FrameRecord {
            index: frame.index,
            timestamp_ms: frame.timestamp_ms,
            image_ref: frame.image_ref,
            observations,
        });
    }
    let items = raw
        .annotation
        .items
        .into_iter()
        .map(|i| convert_item(record, i))
        .collect::<Result<_, _>>()?;
    let reasoning = raw
        .annotation
        .reasoning
        .into_iter()
        .map(|s| {
            if s.causes.is_empty() || s.effects.is_empty() {
                return Err(malformed(record, "causal statement needs causes and effects"));
            }
            Ok(CausalStatement {
                causes: s
                    .causes
                    .into_iter()
                    .map(|i| convert_item(record, i))
                    .collect::<Result<_, _>>()?,
                effects: s
                    .effects
                    .into_iter()
                    .map(|i| convert_item(record, i))
                    .collect::<Result<_, _>>()?,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Segment {
        id: raw.id,
        source_clip: raw.source_clip,
        frames,
        annotation: Annotation { items, reasoning },
        part: None,
    })
}

/// Parses a manifest: one JSON segment record per non-blank line.
/// Record numbers in errors are 1-based line numbers.
pub fn parse_manifest(source: &str) -> Result<Vec<Segment>, SegmentError> {
    let mut segments = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in source.lines().enumerate() {
        let record = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSegment = serde_json::from_str(line).map_err(|e| malformed(record, e.to_string()))?;
        let segment = convert(record, raw)?;
        if !seen.insert(segment.id.clone()) {
            return Err(SegmentError::DuplicateId { record, id: segment.id });
        }
        segments.push(segment);
    }
    Ok(segments)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Segment>, SegmentError> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

/// Serializes segments back to manifest lines (split parts keep their `part` info
/// out of the record so the output is itself a valid manifest).
pub fn write_manifest(segments: &[Segment]) -> String {
    #[derive(Serialize)]
    struct Record<'a> {
        id: &'a str,
        source_clip: &'a str,
        frames: &'a [FrameRecord],
        annotation: &'a Annotation,
    }
    let mut out = String::new();
    for s in segments {
        let record = Record {
            id: &s.id,
            source_clip: &s.source_clip,
            frames: &s.frames,
            annotation: &s.annotation,
        };
        out.push_str(&serde_json::to_string(&record).expect("segment serializes"));
        out.push('\n');
    }
    out
}

/// Splits a clip into `parts` contiguous pieces. Sizes differ by at most one,
/// earlier parts take the remainder, frame indices restart at 0 in each part
/// and the whole-clip annotation is copied onto every part.
pub fn split_segment(segment: &Segment, parts: usize) -> Result<Vec<Segment>, SegmentError> {
    let total = segment.frames.len();
    if parts == 0 || parts > total {
        return Err(SegmentError::InvalidSplit { frames: total, parts });
    }
    let base = total / parts;
    let extra = total % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for index in 0..parts {
        let len = base + usize::from(index < extra);
        let frames = segment.frames[start..start + len]
            .iter()
            .enumerate()
            .map(|(i, f)| FrameRecord { index: i, ..f.clone() })
            .collect();
        let offset = segment.part.map_or(0, |p| p.frame_offset);
        out.push(Segment {
            id: format!("{}.p{}", segment.id, index + 1),
            source_clip: segment.source_clip.clone(),
            frames,
            annotation: segment.annotation.clone(),
            part: Some(PartInfo {
                index,
                of: parts,
                frame_offset: offset + start,
            }),
        });
        start += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KeyframePolicy {
    /// Frames 0, k, 2k, ...
    Stride(usize),
    /// Frame 0 only.
    First,
}

impl Default for KeyframePolicy {
    fn default() -> Self {
        KeyframePolicy::Stride(15)
    }
}

impl fmt::Display for KeyframePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyframePolicy::Stride(k) => write!(f, "stride:{k}"),
            KeyframePolicy::First => f.write_str("first"),
        }
    }
}

impl FromStr for KeyframePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "first" {
            return Ok(KeyframePolicy::First);
        }
        let k = s
            .strip_prefix("stride:")
            .or_else(|| s.strip_prefix("stride(").and_then(|r| r.strip_suffix(')')))
            .ok_or_else(|| format!("unknown keyframe policy {s:?} (expected `first` or `stride:K`)"))?;
        k.trim()
            .parse()
            .map(KeyframePolicy::Stride)
            .map_err(|e| format!("bad stride {k:?}: {e}"))
    }
}

impl TryFrom<String> for KeyframePolicy {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<KeyframePolicy> for String {
    fn from(value: KeyframePolicy) -> Self {
        value.to_string()
    }
}

pub fn select_keyframes(segment: &Segment, policy: KeyframePolicy) -> Result<Vec<usize>, SegmentError> {
    keyframe_indices(segment.frames.len(), policy)
}

/// Keyframe indices for a clip of `frames` frames (at least one frame).
pub fn keyframe_indices(frames: usize, policy: KeyframePolicy) -> Result<Vec<usize>, SegmentError> {
    match policy {
        KeyframePolicy::Stride(0) => Err(SegmentError::ZeroStride),
        KeyframePolicy::Stride(k) => Ok((0..frames.max(1)).step_by(k).collect()),
        KeyframePolicy::First => Ok(vec![0]),
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn segment(id: &str, frames: usize) -> Segment {
        Segment {
            id: id.to_string(),
            source_clip: format!("{id}.mp4"),
            frames: (0..frames)
                .map(|i| FrameRecord {
                    index: i,
                    timestamp_ms: i as u64 * 33,
                    image_ref: format!("{id}/{i:04}.jpg"),
                    observations: Vec::new(),
                })
                .collect(),
            annotation: Annotation::default(),
            part: None,
        }
    }
}

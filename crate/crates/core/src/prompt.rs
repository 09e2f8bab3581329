//! Three-stream prompt construction.
//!
//! The environment stream is described from keyframes only. Agent and motion
//! streams take every frame inside a window of `window_half_width` frames on
//! either side of each keyframe, so short trajectories around the keyframe
//! are visible to the backend.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segments::{keyframe_indices, KeyframePolicy, Segment, SegmentError};
use crate::taxonomy::{Category, EntryId, KeywordEntry, Taxonomy};

pub const ENVIRONMENT_HEADER: &str = "[ENVIRONMENT]";
pub const AGENT_HEADER: &str = "[AGENT]";
pub const MOTION_HEADER: &str = "[MOTION]";
pub const CONTEXT_HEADER: &str = "[CONTEXT]";
pub const NONE_OBSERVED: &str = "none observed";

pub const DEFAULT_TEMPLATE: &str = "three-stream";
pub const DEFAULT_WINDOW_HALF_WIDTH: usize = 8;

pub fn header(category: Category) -> &'static str {
    match category {
        Category::Environment => ENVIRONMENT_HEADER,
        Category::Agent => AGENT_HEADER,
        Category::Motion => MOTION_HEADER,
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    Keyframes(#[from] SegmentError),
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template {id:?}: {reason}")]
    InvalidTemplate { id: String, reason: String },
    #[error("reading template: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub keyframe_policy: KeyframePolicy,
    pub window_half_width: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            keyframe_policy: KeyframePolicy::default(),
            window_half_width: DEFAULT_WINDOW_HALF_WIDTH,
        }
    }
}

/// Inclusive frame range around a keyframe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub keyframe: usize,
    pub lo: usize,
    pub hi: usize,
}

impl Window {
    pub fn around(keyframe: usize, last: usize, half_width: usize) -> Window {
        Window {
            keyframe,
            lo: keyframe.saturating_sub(half_width),
            hi: (keyframe + half_width).min(last),
        }
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.lo..=self.hi).contains(&frame)
    }
}

/// One prompt section: its observation lines and the frames they came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stream {
    pub category: Category,
    pub lines: Vec<String>,
    /// Frames whose observations contributed at least one line.
    pub source_frames: Vec<usize>,
}

impl Stream {
    fn new(category: Category) -> Stream {
        Stream {
            category,
            lines: Vec::new(),
            source_frames: Vec::new(),
        }
    }

    fn push_line(&mut self, text: &str) {
        let text = text.trim();
        if !text.is_empty() && !self.lines.iter().any(|l| l == text) {
            self.lines.push(text.to_string());
        }
    }

    /// Header line followed by the observation lines, or by `none observed`.
    pub fn text(&self) -> String {
        let mut out = String::from(header(self.category));
        if self.lines.is_empty() {
            out.push('\n');
            out.push_str(NONE_OBSERVED);
        }
        for line in &self.lines {
            out.push('\n');
            out.push_str(line);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub environment: Stream,
    pub agent: Stream,
    pub motion: Stream,
    pub frame_refs: Vec<String>,
    pub keyframes: Vec<usize>,
    pub windows: Vec<Window>,
    /// Taxonomy entries mentioned anywhere in the streams.
    pub keywords: Vec<EntryId>,
}

impl PromptBundle {
    pub fn stream(&self, category: Category) -> &Stream {
        match category {
            Category::Environment => &self.environment,
            Category::Agent => &self.agent,
            Category::Motion => &self.motion,
        }
    }

    fn stream_mut(&mut self, category: Category) -> &mut Stream {
        match category {
            Category::Environment => &mut self.environment,
            Category::Agent => &mut self.agent,
            Category::Motion => &mut self.motion,
        }
    }

    pub fn environment_stream(&self) -> String {
        self.environment.text()
    }

    pub fn agent_stream(&self) -> String {
        self.agent.text()
    }

    pub fn motion_stream(&self) -> String {
        self.motion.text()
    }

    /// Adds an out-of-band observation (an edge-user upload) to a stream.
    pub fn append_observation(&mut self, category: Category, text: &str, taxonomy: &Taxonomy) {
        self.stream_mut(category).push_line(text);
        self.refresh_keywords(taxonomy);
    }

    fn refresh_keywords(&mut self, taxonomy: &Taxonomy) {
        let mut seen = BTreeSet::new();
        let mut keywords = Vec::new();
        for stream in [&self.environment, &self.agent, &self.motion] {
            for line in &stream.lines {
                for k in taxonomy.match_keywords(line) {
                    if seen.insert(k.id) {
                        keywords.push(k.id);
                    }
                }
            }
        }
        self.keywords = keywords;
    }
}

pub fn build_prompt(
    segment: &Segment,
    taxonomy: &Taxonomy,
    config: &PromptConfig,
) -> Result<PromptBundle, PromptError> {
    let frame_count = segment.frames.len();
    let keyframes = keyframe_indices(frame_count, config.keyframe_policy)?;
    let last = frame_count.saturating_sub(1);
    let windows: Vec<Window> = keyframes
        .iter()
        .map(|&k| Window::around(k, last, config.window_half_width))
        .collect();

    let mut environment = Stream::new(Category::Environment);
    let mut agent = Stream::new(Category::Agent);
    let mut motion = Stream::new(Category::Motion);
    let mut frame_refs = Vec::new();

    let mut kf = keyframes.iter().peekable();
    for frame in &segment.frames {
        let i = frame.index;
        while kf.next_if(|&&k| k < i).is_some() {}
        let is_keyframe = kf.peek() == Some(&&i);
        let in_window = windows.iter().any(|w| w.contains(i));
        if !is_keyframe && !in_window {
            continue;
        }
        frame_refs.push(frame.image_ref.clone());
        let mut contributed = [false; 3];
        for obs in &frame.observations {
            let (stream, slot) = match obs.category {
                Category::Environment if is_keyframe => (&mut environment, 0),
                Category::Agent if in_window => (&mut agent, 1),
                Category::Motion if in_window => (&mut motion, 2),
                _ => continue,
            };
            stream.push_line(&obs.text);
            if !contributed[slot] {
                stream.source_frames.push(i);
                contributed[slot] = true;
            }
        }
    }

    let mut bundle = PromptBundle {
        environment,
        agent,
        motion,
        frame_refs,
        keyframes,
        windows,
        keywords: Vec::new(),
    };
    bundle.refresh_keywords(taxonomy);
    Ok(bundle)
}

/// Strategy-off prompt: every observation of every frame in order, plus any
/// extra uploads, with no headers and no keyframe or window filtering.
pub fn render_raw<'a>(segment: &'a Segment, extra: impl IntoIterator<Item = &'a str>) -> String {
    let mut lines: Vec<&str> = segment
        .frames
        .iter()
        .flat_map(|f| f.observations.iter().map(|o| o.text.trim()))
        .filter(|t| !t.is_empty())
        .collect();
    lines.extend(extra.into_iter().map(str::trim).filter(|t| !t.is_empty()));
    if lines.is_empty() {
        return NONE_OBSERVED.to_string();
    }
    lines.join("\n")
}

/// A prompt template with `{environment}`, `{agent}` and `{motion}` slots,
/// each appearing exactly once and in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    id: String,
    body: String,
}

impl Template {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Result<Template, PromptError> {
        let id = id.into();
        let body = body.into();
        let mut last = 0;
        for slot in ["{environment}", "{agent}", "{motion}"] {
            let invalid = |reason: String| PromptError::InvalidTemplate { id: id.clone(), reason };
            if body.matches(slot).count() != 1 {
                return Err(invalid(format!("slot {slot} must appear exactly once")));
            }
            let at = body.find(slot).unwrap_or_default();
            if at < last {
                return Err(invalid("slots must be ordered environment, agent, motion".into()));
            }
            last = at;
        }
        Ok(Template { id, body })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn render(&self, bundle: &PromptBundle) -> String {
        self.body
            .replace("{environment}", &bundle.environment_stream())
            .replace("{agent}", &bundle.agent_stream())
            .replace("{motion}", &bundle.motion_stream())
    }
}

#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: HashMap<String, Template>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        TemplateRegistry::builtin()
    }
}

impl TemplateRegistry {
    pub fn builtin() -> TemplateRegistry {
        let mut templates = HashMap::new();
        let builtin = [
            (DEFAULT_TEMPLATE, "{environment}\n\n{agent}\n\n{motion}\n"),
            (
                "narrate-reason",
                "You are the language model of a roadside unit watching traffic.\n\n\
                 {environment}\n\n{agent}\n\n{motion}\n\n\
                 Narration: describe the driving scene and the behavior of each agent.\n\
                 Reasoning: explain which environment or agent conditions caused the observed motion.\n",
            ),
        ];
        for (id, body) in builtin {
            let t = Template::new(id, body).expect("builtin template is valid");
            templates.insert(id.to_string(), t);
        }
        TemplateRegistry { templates }
    }

    pub fn insert(&mut self, template: Template) {
        self.templates.insert(template.id.clone(), template);
    }

    pub fn load_file(&mut self, id: &str, path: impl AsRef<std::path::Path>) -> Result<(), PromptError> {
        let body = std::fs::read_to_string(path)?;
        self.insert(Template::new(id, body)?);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&Template, PromptError> {
        self.templates
            .get(id)
            .ok_or_else(|| PromptError::UnknownTemplate(id.to_string()))
    }

    pub fn render(&self, bundle: &PromptBundle, id: &str) -> Result<String, PromptError> {
        Ok(self.get(id)?.render(bundle))
    }
}

/// Renders with one of the builtin templates.
pub fn render_prompt(bundle: &PromptBundle, template_id: &str) -> Result<String, PromptError> {
    TemplateRegistry::builtin().render(bundle, template_id)
}

/// A cross-category keyword pair used as an in-context example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrichmentPair<'a> {
    pub first: &'a KeywordEntry,
    pub second: &'a KeywordEntry,
    pub first_id: EntryId,
    pub second_id: EntryId,
    pub description_template: &'static str,
}

impl EnrichmentPair<'_> {
    pub fn describe(&self) -> String {
        self.description_template
            .replace("{first}", &self.first.label)
            .replace("{second}", &self.second.label)
    }
}

fn pair_template(first: Category, second: Category) -> &'static str {
    match (first, second) {
        (Category::Environment, Category::Agent) => "{second} observed in {first} conditions",
        (Category::Environment, Category::Motion) => "{second} under {first} conditions",
        _ => "{first} involved in {second}",
    }
}

/// Every unordered cross-category pair: environment x agent, then
/// environment x motion, then agent x motion.
pub fn generate_enrichment_corpus(taxonomy: &Taxonomy) -> Vec<EnrichmentPair<'_>> {
    let counts = taxonomy.counts();
    let mut out = Vec::with_capacity(
        counts.environment * counts.agent + counts.environment * counts.motion + counts.agent * counts.motion,
    );
    let axes = [
        (Category::Environment, Category::Agent),
        (Category::Environment, Category::Motion),
        (Category::Agent, Category::Motion),
    ];
    for (a, b) in axes {
        for (first_id, first) in taxonomy.in_category(a) {
            for (second_id, second) in taxonomy.in_category(b) {
                out.push(EnrichmentPair {
                    first,
                    second,
                    first_id,
                    second_id,
                    description_template: pair_template(a, b),
                });
            }
        }
    }
    out
}

/// Up to `limit` corpus descriptions whose two keywords both occur in the bundle.
pub fn enrichment_context(bundle: &PromptBundle, corpus: &[EnrichmentPair<'_>], limit: usize) -> Vec<String> {
    if limit == 0 {
        return Vec::new();
    }
    let present: BTreeSet<EntryId> = bundle.keywords.iter().copied().collect();
    corpus
        .iter()
        .filter(|p| present.contains(&p.first_id) && present.contains(&p.second_id))
        .take(limit)
        .map(EnrichmentPair::describe)
        .collect()
}

/// Prepends a `[CONTEXT]` block of example descriptions to a rendered prompt.
pub fn with_context(rendered: String, context: &[String]) -> String {
    if context.is_empty() {
        return rendered;
    }
    let mut out = String::from(CONTEXT_HEADER);
    for line in context {
        out.push('\n');
        out.push_str(line);
    }
    out.push_str("\n\n");
    out.push_str(&rendered);
    out
}

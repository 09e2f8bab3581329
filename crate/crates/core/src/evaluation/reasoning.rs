use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::segments::{AnnotationItem, CausalStatement};
use crate::taxonomy::{Category, EntryId, Taxonomy};
use crate::text::{self, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    /// `<effect> because <cause>`
    EffectFirst,
    /// `<cause> leads to <effect>`
    CauseFirst,
}

const CONNECTIVES: &[(&str, Direction)] = &[
    ("as a result of", Direction::EffectFirst),
    ("caused by", Direction::EffectFirst),
    ("due to", Direction::EffectFirst),
    ("because", Direction::EffectFirst),
    ("leads to", Direction::CauseFirst),
    ("led to", Direction::CauseFirst),
    ("leading to", Direction::CauseFirst),
    ("results in", Direction::CauseFirst),
    ("resulted in", Direction::CauseFirst),
    ("resulting in", Direction::CauseFirst),
    ("causes", Direction::CauseFirst),
    ("caused", Direction::CauseFirst),
    ("causing", Direction::CauseFirst),
];

/// First connective in the sentence: (start token, length, direction).
/// At one position the longest connective wins, so `caused by` beats `caused`.
fn find_connective(tokens: &[Token]) -> Option<(usize, usize, Direction)> {
    (0..tokens.len()).find_map(|start| {
        CONNECTIVES
            .iter()
            .filter_map(|(phrase, dir)| {
                let words: Vec<&str> = phrase.split(' ').collect();
                let end = start + words.len();
                (end <= tokens.len() && tokens[start..end].iter().zip(&words).all(|(t, w)| t.text == *w)).then_some((
                    start,
                    words.len(),
                    *dir,
                ))
            })
            .max_by_key(|(_, len, _)| *len)
    })
}

fn side_items(tokens: &[Token], taxonomy: &Taxonomy) -> Vec<AnnotationItem> {
    let mut seen = BTreeSet::new();
    taxonomy
        .find_matches(tokens)
        .into_iter()
        .filter(|m| seen.insert(m.entry))
        .map(|m| {
            let e = taxonomy.entry(m.entry);
            AnnotationItem::new(e.category, e.label.clone())
        })
        .collect()
}

/// Pulls cause/effect keyword sets out of free reasoning text.
///
/// Each sentence with a causal connective is cut at the first connective;
/// keywords on the two sides become causes or effects according to the
/// connective's direction. Sentences lacking a connective, or with no keyword
/// on either side, yield nothing.
pub fn extract_causal_statements(reasoning_text: &str, taxonomy: &Taxonomy) -> Vec<CausalStatement> {
    text::sentences(reasoning_text)
        .filter_map(|sentence| {
            let tokens = text::tokenize(sentence);
            let (at, len, direction) = find_connective(&tokens)?;
            let left = side_items(&tokens[..at], taxonomy);
            let right = side_items(&tokens[at + len..], taxonomy);
            if left.is_empty() || right.is_empty() {
                return None;
            }
            let (causes, effects) = match direction {
                Direction::EffectFirst => (right, left),
                Direction::CauseFirst => (left, right),
            };
            Some(CausalStatement { causes, effects })
        })
        .collect()
}

/// Renders statements as `"<effects> because <causes>"` sentences.
pub fn render_statements(statements: &[CausalStatement], taxonomy: &Taxonomy) -> String {
    statements
        .iter()
        .filter(|s| !s.causes.is_empty() && !s.effects.is_empty())
        .map(|s| {
            let join = |items: &[AnnotationItem]| {
                items
                    .iter()
                    .map(|i| super::narration::render_item(i, taxonomy))
                    .collect::<Vec<_>>()
                    .join(" and ")
            };
            format!("{} because {}", join(&s.effects), join(&s.causes))
        })
        .collect::<Vec<_>>()
        .join(". ")
}

/// Valid causal direction is environment/agent -> motion. A statement is
/// flawed when an environment condition appears as an effect, or when a
/// motion is given as a cause of something that is not itself a motion.
pub fn is_flawed(statement: &CausalStatement) -> bool {
    let effect_env = statement.effects.iter().any(|i| i.category == Category::Environment);
    let cause_motion = statement.causes.iter().any(|i| i.category == Category::Motion);
    let effect_motion = statement.effects.iter().any(|i| i.category == Category::Motion);
    effect_env || (cause_motion && !effect_motion)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningScore {
    pub structurally_valid: bool,
    pub keyword_value: f64,
    /// `keyword_value` when structurally valid, otherwise 0.
    pub value: f64,
    pub matched: usize,
    pub total: usize,
    pub violations: Vec<CausalStatement>,
}

/// Keyword identity used for overlap: the resolved entry, or the raw
/// (category, label) for labels outside the taxonomy, which never match.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Entry(EntryId),
    Unresolved(Category, String),
}

fn keys<'a>(statements: impl IntoIterator<Item = &'a CausalStatement>, taxonomy: &Taxonomy) -> BTreeSet<Key> {
    statements
        .into_iter()
        .flat_map(|s| s.causes.iter().chain(&s.effects))
        .map(|item| match item.resolve(taxonomy) {
            Some(id) => Key::Entry(id),
            None => Key::Unresolved(item.category, item.label.clone()),
        })
        .collect()
}

pub fn validate_reasoning(
    statements: &[CausalStatement],
    annotation_reasoning: &[CausalStatement],
    taxonomy: &Taxonomy,
) -> Result<ReasoningScore, EvalError> {
    if annotation_reasoning.is_empty() {
        return Err(EvalError::NothingToScore);
    }
    let violations: Vec<CausalStatement> = statements.iter().filter(|s| is_flawed(s)).cloned().collect();

    let expected = keys(annotation_reasoning, taxonomy);
    let produced: BTreeSet<Key> = keys(statements, taxonomy)
        .into_iter()
        .filter(|k| matches!(k, Key::Entry(_)))
        .collect();
    let matched = expected.intersection(&produced).count();
    let total = expected.len();
    let keyword_value = matched as f64 / total as f64;
    let structurally_valid = violations.is_empty();
    Ok(ReasoningScore {
        structurally_valid,
        keyword_value,
        value: if structurally_valid { keyword_value } else { 0.0 },
        matched,
        total,
        violations,
    })
}

/// Extracts statements from `reasoning_text` and validates them.
pub fn score_reasoning(
    reasoning_text: &str,
    annotation_reasoning: &[CausalStatement],
    taxonomy: &Taxonomy,
) -> Result<ReasoningScore, EvalError> {
    let statements = extract_causal_statements(reasoning_text, taxonomy);
    validate_reasoning(&statements, annotation_reasoning, taxonomy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Category::*;

    fn labels(items: &[AnnotationItem]) -> Vec<(Category, &str)> {
        items.iter().map(|i| (i.category, i.label.as_str())).collect()
    }

    fn stmt(causes: &[(Category, &str)], effects: &[(Category, &str)]) -> CausalStatement {
        let conv = |v: &[(Category, &str)]| v.iter().map(|(c, l)| AnnotationItem::new(*c, *l)).collect();
        CausalStatement {
            causes: conv(causes),
            effects: conv(effects),
        }
    }

    #[test]
    fn stopped_because_light_turned_red() {
        let t = Taxonomy::builtin();
        let s = extract_causal_statements("The vehicle stopped because the traffic light turned red", &t);
        assert_eq!(s.len(), 1);
        assert_eq!(labels(&s[0].causes), [(Environment, "traffic light red")]);
        let motion: Vec<_> = s[0].effects.iter().filter(|i| i.category == Motion).collect();
        assert_eq!(motion.len(), 1);
        assert_eq!(motion[0].label, "stop");
        // the subject noun is kept on the effect side as an agent keyword
        assert_eq!(labels(&s[0].effects), [(Agent, "vehicle"), (Motion, "stop")]);
        assert!(!is_flawed(&s[0]));
    }

    #[test]
    fn weather_change_caused_by_low_speed() {
        let t = Taxonomy::builtin();
        let s = extract_causal_statements("The weather change is caused by the low speed of vehicles", &t);
        assert_eq!(s.len(), 1);
        assert_eq!(labels(&s[0].effects), [(Environment, "weather change")]);
        assert_eq!(labels(&s[0].causes), [(Motion, "low speed"), (Agent, "vehicle")]);
        assert!(is_flawed(&s[0]));
    }

    #[test]
    fn empty_and_connective_free_text() {
        let t = Taxonomy::builtin();
        assert!(extract_causal_statements("", &t).is_empty());
        assert!(extract_causal_statements("A bus stops in fog.", &t).is_empty());
        assert!(extract_causal_statements("It happened because of reasons.", &t).is_empty());
    }

    #[test]
    fn cause_first_connectives() {
        let t = Taxonomy::builtin();
        let s = extract_causal_statements("Heavy fog leads to low speed. Ice caused the truck to swerve", &t);
        assert_eq!(s.len(), 2);
        assert_eq!(labels(&s[0].causes), [(Environment, "fog")]);
        assert_eq!(labels(&s[0].effects), [(Motion, "low speed")]);
        assert_eq!(labels(&s[1].causes), [(Environment, "icy road")]);
        assert_eq!(labels(&s[1].effects), [(Agent, "truck"), (Motion, "swerving")]);
    }

    #[test]
    fn flawed_statement_zeroes_score() {
        let t = Taxonomy::builtin();
        let ann = [stmt(&[(Motion, "low speed")], &[(Environment, "weather change")])];
        let s = score_reasoning("The weather change is caused by the low speed of vehicles", &ann, &t).unwrap();
        assert!(!s.structurally_valid);
        assert_eq!(s.keyword_value, 1.0);
        assert_eq!(s.value, 0.0);
        assert_eq!(s.violations.len(), 1);
    }

    #[test]
    fn identical_statements_score_one() {
        let t = Taxonomy::builtin();
        let ann = [
            stmt(&[(Environment, "traffic light red")], &[(Motion, "stop")]),
            stmt(&[(Agent, "pedestrian")], &[(Motion, "yielding")]),
        ];
        assert_eq!(validate_reasoning(&ann, &ann, &t).unwrap().value, 1.0);
        let text = render_statements(&ann, &t);
        assert_eq!(text, "stop because traffic light red. yielding because pedestrian");
        assert_eq!(score_reasoning(&text, &ann, &t).unwrap().value, 1.0);
    }

    #[test]
    fn half_overlap() {
        let t = Taxonomy::builtin();
        let ann = [stmt(
            &[(Environment, "fog"), (Agent, "cyclist")],
            &[(Motion, "stop"), (Motion, "yielding")],
        )];
        let got = [stmt(&[(Environment, "fog")], &[(Motion, "stop")])];
        let s = validate_reasoning(&got, &ann, &t).unwrap();
        assert!(s.structurally_valid);
        assert_eq!((s.matched, s.total), (2, 4));
        assert_eq!(s.value, 0.5);
    }

    #[test]
    fn motion_causing_motion_is_valid() {
        assert!(!is_flawed(&stmt(
            &[(Motion, "sudden braking")],
            &[(Motion, "swerving")]
        )));
        assert!(is_flawed(&stmt(&[(Motion, "speeding")], &[(Agent, "pedestrian")])));
    }

    #[test]
    fn empty_annotation_errors() {
        assert!(validate_reasoning(&[], &[], &Taxonomy::builtin()).is_err());
    }
}

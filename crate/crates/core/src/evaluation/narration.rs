use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::segments::AnnotationItem;
use crate::taxonomy::{Category, EntryId, PhraseMatch, Taxonomy};
use crate::text::{self, Token};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordFrequency {
    pub category: Category,
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrationScore {
    pub matched: usize,
    pub total: usize,
    pub value: f64,
    pub missed: Vec<AnnotationItem>,
    /// Output keywords absent from the annotation. Reported, not penalized.
    pub spurious: Vec<String>,
    /// Occurrence count of every keyword found in the output.
    pub frequencies: Vec<KeywordFrequency>,
}

/// The integer token immediately before a match, within the same clause.
fn preceding_count(tokens: &[Token], m: &PhraseMatch) -> Option<u32> {
    let before = tokens.get(m.start.checked_sub(1)?)?;
    if before.clause != tokens[m.start].clause {
        return None;
    }
    before.as_count()
}

/// Keyword-overlap narration accuracy.
///
/// An annotation item counts as matched when the output contains a phrase of
/// the same entry and, for counted items, the integer right before that
/// phrase equals the annotated count. Accuracy is `matched / total`.
pub fn score_narration(
    output_text: &str,
    annotation: &[AnnotationItem],
    taxonomy: &Taxonomy,
) -> Result<NarrationScore, EvalError> {
    if annotation.is_empty() {
        return Err(EvalError::NothingToScore);
    }
    let tokens = text::tokenize(output_text);
    let matches = taxonomy.find_matches(&tokens);

    let mut missed = Vec::new();
    let mut annotated: Vec<EntryId> = Vec::new();
    for item in annotation {
        let id = item.resolve(taxonomy);
        annotated.extend(id);
        let hit = id.is_some_and(|id| {
            matches.iter().any(|m| {
                m.entry == id
                    && match item.count {
                        None => true,
                        Some(n) => preceding_count(&tokens, m) == Some(n),
                    }
            })
        });
        if !hit {
            missed.push(item.clone());
        }
    }

    let counted = taxonomy.count_matches(&matches);
    let spurious = counted
        .iter()
        .filter(|k| !annotated.contains(&k.id))
        .map(|k| k.entry.label.clone())
        .collect();
    let frequencies = counted
        .iter()
        .map(|k| KeywordFrequency {
            category: k.entry.category,
            label: k.entry.label.clone(),
            count: k.count,
        })
        .collect();

    let total = annotation.len();
    let matched = total - missed.len();
    Ok(NarrationScore {
        matched,
        total,
        value: matched as f64 / total as f64,
        missed,
        spurious,
        frequencies,
    })
}

/// Renders items the way a perfect narrator would: `"<count> <plural>"` for
/// counted items, the canonical label otherwise, comma-joined.
pub fn render_items(items: &[AnnotationItem], taxonomy: &Taxonomy) -> String {
    items
        .iter()
        .map(|item| render_item(item, taxonomy))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn render_item(item: &AnnotationItem, taxonomy: &Taxonomy) -> String {
    let entry = item.resolve(taxonomy).map(|id| taxonomy.entry(id));
    match (item.count, entry) {
        (Some(n), Some(e)) => e.with_count(n),
        (Some(n), None) => format!("{n} {}", item.label),
        (None, Some(e)) => e.label.clone(),
        (None, None) => item.label.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Category::*;

    fn worked_annotation() -> Vec<AnnotationItem> {
        vec![
            AnnotationItem::counted(Agent, "pedestrian", 3),
            AnnotationItem::counted(Agent, "cyclist", 1),
            AnnotationItem::counted(Agent, "vehicle", 1),
            AnnotationItem::new(Environment, "rainy weather"),
        ]
    }

    #[test]
    fn three_of_four() {
        let t = Taxonomy::builtin();
        let s = score_narration("3 pedestrians, 1 vehicle in rainy weather", &worked_annotation(), &t).unwrap();
        assert_eq!((s.matched, s.total), (3, 4));
        assert_eq!(s.value, 0.75);
        assert_eq!(s.missed, [AnnotationItem::counted(Agent, "cyclist", 1)]);
        assert!(s.spurious.is_empty());
    }

    #[test]
    fn rendered_annotation_scores_one() {
        let t = Taxonomy::builtin();
        let text = render_items(&worked_annotation(), &t);
        assert_eq!(text, "3 pedestrians, 1 cyclist, 1 vehicle, rainy weather");
        assert_eq!(score_narration(&text, &worked_annotation(), &t).unwrap().value, 1.0);
    }

    #[test]
    fn count_mismatch_fails_item() {
        let t = Taxonomy::builtin();
        let ann = [
            AnnotationItem::counted(Agent, "pedestrian", 3),
            AnnotationItem::new(Environment, "fog"),
            AnnotationItem::counted(Agent, "vehicle", 1),
        ];
        let s = score_narration("2 pedestrians, fog", &ann, &t).unwrap();
        assert_eq!(s.matched, 1);
        assert!((s.value - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn count_must_be_in_same_clause() {
        let t = Taxonomy::builtin();
        let ann = [AnnotationItem::counted(Agent, "pedestrian", 3)];
        assert_eq!(score_narration("lane 3, pedestrians", &ann, &t).unwrap().matched, 0);
        assert_eq!(score_narration("there are 3 pedestrians", &ann, &t).unwrap().matched, 1);
    }

    #[test]
    fn spurious_is_reported_not_penalized() {
        let t = Taxonomy::builtin();
        let ann = [AnnotationItem::new(Environment, "fog")];
        let s = score_narration("fog, a bus and a bus", &ann, &t).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.spurious, ["bus"]);
        assert_eq!(
            s.frequencies[1],
            KeywordFrequency {
                category: Agent,
                label: "bus".into(),
                count: 2
            }
        );
    }

    #[test]
    fn empty_annotation_errors() {
        let err = score_narration("fog", &[], &Taxonomy::builtin()).unwrap_err();
        assert_eq!(err.to_string(), "nothing to score");
    }

    #[test]
    fn category_must_agree() {
        let t = Taxonomy::builtin();
        // "fog" is an environment keyword, so an agent item labelled fog never matches
        let ann = [AnnotationItem::new(Agent, "fog")];
        assert_eq!(score_narration("fog", &ann, &t).unwrap().value, 0.0);
    }
}

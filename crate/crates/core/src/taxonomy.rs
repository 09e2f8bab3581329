//! The keyword vocabulary: three streams of environment, agent and motion
//! phrases, loaded from a tab-separated file and matched longest-first.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{self, Token};

/// Maximum number of words in an entry label.
pub const MAX_LABEL_WORDS: usize = 4;

const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.tsv");

/// One of the three prompt streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Environment,
    Agent,
    Motion,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Environment, Category::Agent, Category::Motion];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Environment => "environment",
            Category::Agent => "agent",
            Category::Motion => "motion",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown category {0:?}")]
pub struct UnknownCategory(pub String);

impl FromStr for Category {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "environment" => Ok(Category::Environment),
            "agent" => Ok(Category::Agent),
            "motion" => Ok(Category::Motion),
            other => Err(UnknownCategory(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("no entries")]
    NoEntries,
    #[error("line {line}: expected `category<TAB>label[<TAB>aliases]`")]
    Parse { line: usize },
    #[error("entry {index} (line {line}): unknown category {name:?}")]
    UnknownCategory { index: usize, line: usize, name: String },
    #[error("entry {index} (line {line}): empty label")]
    EmptyLabel { index: usize, line: usize },
    #[error("entry {index} (line {line}): label {label:?} must be lowercase with 1-{MAX_LABEL_WORDS} words")]
    InvalidLabel { index: usize, line: usize, label: String },
    #[error("entry {index} (line {line}): duplicate phrase {phrase:?} (first defined by entry {first})")]
    DuplicatePhrase {
        index: usize,
        line: usize,
        phrase: String,
        first: usize,
    },
    #[error("reading taxonomy: {0}")]
    Io(#[from] std::io::Error),
}

/// Index of an entry inside its [`Taxonomy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntryId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordEntry {
    pub category: Category,
    pub label: String,
    pub aliases: Vec<String>,
}

impl KeywordEntry {
    /// Label followed by aliases.
    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.label.as_str()).chain(self.aliases.iter().map(String::as_str))
    }

    /// The form to use after a count other than one: `label + "s"` or
    /// `label + "es"` when that is a listed alias, otherwise the first alias
    /// ending in `s`, otherwise the label itself.
    pub fn plural(&self) -> &str {
        for suffix in ["s", "es"] {
            let candidate = format!("{}{}", self.label, suffix);
            if let Some(alias) = self.aliases.iter().find(|a| **a == candidate) {
                return alias;
            }
        }
        self.aliases
            .iter()
            .find(|a| a.ends_with('s'))
            .map(String::as_str)
            .unwrap_or(&self.label)
    }

    /// `"<count> <label>"`, pluralized when count != 1.
    pub fn with_count(&self, count: u32) -> String {
        if count == 1 {
            format!("1 {}", self.label)
        } else {
            format!("{} {}", count, self.plural())
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub environment: usize,
    pub agent: usize,
    pub motion: usize,
}

impl CategoryCounts {
    pub fn get(&self, category: Category) -> usize {
        match category {
            Category::Environment => self.environment,
            Category::Agent => self.agent,
            Category::Motion => self.motion,
        }
    }

    pub fn as_tuple(&self) -> (usize, usize, usize) {
        (self.environment, self.agent, self.motion)
    }
}

/// A disjoint phrase occurrence over a token sequence, `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhraseMatch {
    pub entry: EntryId,
    pub start: usize,
    pub end: usize,
}

/// Entry together with its number of disjoint occurrences in a text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeywordCount<'a> {
    pub id: EntryId,
    pub entry: &'a KeywordEntry,
    pub count: usize,
}

/// Validated, immutable keyword vocabulary.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    entries: Vec<KeywordEntry>,
    counts: CategoryCounts,
    phrase_index: HashMap<String, EntryId>,
    longest_phrase: usize,
}

impl Taxonomy {
    /// The shipped vocabulary (23 environment, 15 agent, 47 motion entries).
    pub fn builtin() -> Taxonomy {
        Taxonomy::parse(DEFAULT_TAXONOMY).expect("shipped taxonomy is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Taxonomy, TaxonomyError> {
        Taxonomy::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(source: &str) -> Result<Taxonomy, TaxonomyError> {
        let mut entries = Vec::new();
        let mut lines = Vec::new();
        for (n, raw) in source.lines().enumerate() {
            let line = n + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let index = entries.len();
            let mut fields = trimmed.split('\t');
            let (Some(category), Some(label)) = (fields.next(), fields.next()) else {
                return Err(TaxonomyError::Parse { line });
            };
            let aliases = fields.next().unwrap_or("");
            if fields.next().is_some() {
                return Err(TaxonomyError::Parse { line });
            }
            let category: Category = category
                .parse()
                .map_err(|UnknownCategory(name)| TaxonomyError::UnknownCategory { index, line, name })?;
            let label = label.trim();
            if label.is_empty() {
                return Err(TaxonomyError::EmptyLabel { index, line });
            }
            let words = text::tokenize(label).len();
            if label != label.to_lowercase() || !(1..=MAX_LABEL_WORDS).contains(&words) {
                return Err(TaxonomyError::InvalidLabel {
                    index,
                    line,
                    label: label.to_string(),
                });
            }
            let aliases = aliases
                .split(',')
                .map(|a| a.trim().to_lowercase())
                .filter(|a| !a.is_empty())
                .collect();
            entries.push(KeywordEntry {
                category,
                label: label.to_string(),
                aliases,
            });
            lines.push(line);
        }
        Taxonomy::from_entries_with_lines(entries, &lines)
    }

    /// Builds a taxonomy from already-parsed entries, applying the same
    /// validation as [`Taxonomy::parse`].
    pub fn from_entries(entries: Vec<KeywordEntry>) -> Result<Taxonomy, TaxonomyError> {
        let lines: Vec<usize> = (1..=entries.len()).collect();
        for (index, entry) in entries.iter().enumerate() {
            let words = text::tokenize(&entry.label).len();
            if entry.label.trim().is_empty() {
                return Err(TaxonomyError::EmptyLabel { index, line: index + 1 });
            }
            if entry.label != entry.label.to_lowercase() || !(1..=MAX_LABEL_WORDS).contains(&words) {
                return Err(TaxonomyError::InvalidLabel {
                    index,
                    line: index + 1,
                    label: entry.label.clone(),
                });
            }
        }
        Taxonomy::from_entries_with_lines(entries, &lines)
    }

    fn from_entries_with_lines(entries: Vec<KeywordEntry>, lines: &[usize]) -> Result<Taxonomy, TaxonomyError> {
        if entries.is_empty() {
            return Err(TaxonomyError::NoEntries);
        }
        let mut phrase_index = HashMap::new();
        let mut longest_phrase = 1;
        let mut counts = CategoryCounts::default();
        for (index, entry) in entries.iter().enumerate() {
            match entry.category {
                Category::Environment => counts.environment += 1,
                Category::Agent => counts.agent += 1,
                Category::Motion => counts.motion += 1,
            }
            for phrase in entry.phrases() {
                let key = text::normalize_phrase(phrase);
                if key.is_empty() {
                    continue;
                }
                longest_phrase = longest_phrase.max(key.split(' ').count());
                if let Some(first) = phrase_index.insert(key.clone(), EntryId(index)) {
                    return Err(TaxonomyError::DuplicatePhrase {
                        index,
                        line: lines[index],
                        phrase: key,
                        first: first.0,
                    });
                }
            }
        }
        Ok(Taxonomy {
            entries,
            counts,
            phrase_index,
            longest_phrase,
        })
    }

    pub fn entries(&self) -> &[KeywordEntry] {
        &self.entries
    }

    pub fn entry(&self, id: EntryId) -> &KeywordEntry {
        &self.entries[id.0]
    }

    pub fn counts(&self) -> CategoryCounts {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries of one category, in file order.
    pub fn in_category(&self, category: Category) -> impl Iterator<Item = (EntryId, &KeywordEntry)> {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.category == category)
            .map(|(i, e)| (EntryId(i), e))
    }

    /// Resolves a label or alias (after normalization) to its entry.
    pub fn lookup(&self, phrase: &str) -> Option<EntryId> {
        self.phrase_index.get(&text::normalize_phrase(phrase)).copied()
    }

    /// Leftmost-longest disjoint phrase matches over a token sequence.
    pub fn find_matches(&self, tokens: &[Token]) -> Vec<PhraseMatch> {
        let mut matches = Vec::new();
        let mut key = String::new();
        let mut i = 0;
        'outer: while i < tokens.len() {
            let max_len = self.longest_phrase.min(tokens.len() - i);
            for len in (1..=max_len).rev() {
                let window = &tokens[i..i + len];
                if window.iter().any(|t| t.clause != window[0].clause) {
                    continue;
                }
                key.clear();
                for (k, t) in window.iter().enumerate() {
                    if k > 0 {
                        key.push(' ');
                    }
                    key.push_str(&t.text);
                }
                if let Some(&entry) = self.phrase_index.get(&key) {
                    matches.push(PhraseMatch {
                        entry,
                        start: i,
                        end: i + len,
                    });
                    i += len;
                    continue 'outer;
                }
            }
            i += 1;
        }
        matches
    }

    /// Matched entries with occurrence counts, in order of first occurrence.
    pub fn match_keywords(&self, text: &str) -> Vec<KeywordCount<'_>> {
        self.count_matches(&self.find_matches(&text::tokenize(text)))
    }

    pub fn count_matches(&self, matches: &[PhraseMatch]) -> Vec<KeywordCount<'_>> {
        let mut out: Vec<KeywordCount<'_>> = Vec::new();
        for m in matches {
            match out.iter_mut().find(|k| k.id == m.entry) {
                Some(k) => k.count += 1,
                None => out.push(KeywordCount {
                    id: m.entry,
                    entry: self.entry(m.entry),
                    count: 1,
                }),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(matches: &[KeywordCount<'_>]) -> Vec<(String, usize)> {
        matches.iter().map(|k| (k.entry.label.clone(), k.count)).collect()
    }

    #[test]
    fn builtin_counts() {
        let t = Taxonomy::builtin();
        assert_eq!(t.counts().as_tuple(), (23, 15, 47));
        assert_eq!(t.len(), 85);
    }

    #[test]
    fn empty_document_has_no_entries() {
        assert!(matches!(Taxonomy::parse(""), Err(TaxonomyError::NoEntries)));
        assert!(matches!(
            Taxonomy::parse("# only a comment\n\n"),
            Err(TaxonomyError::NoEntries)
        ));
    }

    #[test]
    fn duplicate_phrase_across_categories_is_named() {
        let err = Taxonomy::parse("environment\tfog\t\nagent\tfog\t\n").unwrap_err();
        match &err {
            TaxonomyError::DuplicatePhrase {
                phrase, index, first, ..
            } => {
                assert_eq!(phrase, "fog");
                assert_eq!((*index, *first), (1, 0));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("\"fog\""));
    }

    #[test]
    fn duplicate_alias_is_rejected() {
        let err = Taxonomy::parse("agent\tvehicle\tcar\nagent\tcar park\tcar\n").unwrap_err();
        assert!(matches!(err, TaxonomyError::DuplicatePhrase { ref phrase, .. } if phrase == "car"));
    }

    #[test]
    fn unknown_category_reports_index() {
        let err = Taxonomy::parse("agent\tbus\t\nweather\tfog\t\n").unwrap_err();
        assert!(matches!(
            err,
            TaxonomyError::UnknownCategory { index: 1, line: 2, ref name } if name == "weather"
        ));
    }

    #[test]
    fn empty_and_invalid_labels() {
        assert!(matches!(
            Taxonomy::parse("agent\t \t\n").unwrap_err(),
            TaxonomyError::EmptyLabel { index: 0, .. }
        ));
        assert!(matches!(
            Taxonomy::parse("agent\tBus\t\n").unwrap_err(),
            TaxonomyError::InvalidLabel { .. }
        ));
        assert!(matches!(
            Taxonomy::parse("agent\ta very long bus name\t\n").unwrap_err(),
            TaxonomyError::InvalidLabel { .. }
        ));
        assert!(matches!(
            Taxonomy::parse("agent\n").unwrap_err(),
            TaxonomyError::Parse { line: 1 }
        ));
    }

    #[test]
    fn match_pedestrian_crossing_in_fog() {
        let t = Taxonomy::builtin();
        assert_eq!(
            labels(&t.match_keywords("a pedestrian crossing in fog")),
            [
                ("pedestrian".to_string(), 1),
                ("crossing".to_string(), 1),
                ("fog".to_string(), 1)
            ]
        );
    }

    #[test]
    fn empty_text_matches_nothing() {
        assert!(Taxonomy::builtin().match_keywords("").is_empty());
    }

    #[test]
    fn repeated_phrase_counts_disjoint_matches() {
        let t = Taxonomy::builtin();
        assert_eq!(labels(&t.match_keywords("fog fog fog")), [("fog".to_string(), 3)]);
    }

    #[test]
    fn longest_match_wins() {
        let t = Taxonomy::builtin();
        assert_eq!(
            labels(&t.match_keywords("Sudden braking near the junction")),
            [("sudden braking".to_string(), 1), ("intersection".to_string(), 1)]
        );
        // a clause break stops the longer phrase from forming
        assert_eq!(
            labels(&t.match_keywords("running, red light")),
            [("running".to_string(), 1), ("traffic light red".to_string(), 1)]
        );
        assert_eq!(
            labels(&t.match_keywords("running red light")),
            [("running red light".to_string(), 1)]
        );
    }

    #[test]
    fn every_builtin_phrase_resolves_to_its_entry() {
        let t = Taxonomy::builtin();
        for (i, entry) in t.entries().iter().enumerate() {
            for phrase in entry.phrases() {
                let m = t.match_keywords(phrase);
                assert_eq!(m.len(), 1, "{phrase:?} -> {m:?}");
                assert_eq!(m[0].id, EntryId(i), "{phrase:?}");
            }
            let counted = entry.with_count(3);
            let m = t.match_keywords(&counted);
            assert_eq!(m.len(), 1, "{counted:?}");
            assert_eq!(m[0].id, EntryId(i));
        }
    }

    #[test]
    fn plural_forms() {
        let t = Taxonomy::builtin();
        let ped = t.entry(t.lookup("pedestrian").unwrap());
        assert_eq!(ped.with_count(3), "3 pedestrians");
        assert_eq!(ped.with_count(1), "1 pedestrian");
        let bus = t.entry(t.lookup("bus").unwrap());
        assert_eq!(bus.plural(), "buses");
        let child = t.entry(t.lookup("kids").unwrap());
        assert_eq!(child.label, "child");
    }

    #[test]
    fn lookup_normalizes() {
        let t = Taxonomy::builtin();
        assert_eq!(t.lookup("Wrong-Way"), t.lookup("wrong way"));
        assert!(t.lookup("wrong way").is_some());
        assert!(t.lookup("spaceship").is_none());
    }
}

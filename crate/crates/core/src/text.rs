//! Text normalization shared by every matcher.
//!
//! Tokens are lowercase alphanumeric runs. Apostrophes are removed inside a
//! word, every other non-alphanumeric character separates tokens. Clause
//! punctuation (`, . ; : ! ?`, brackets, newlines) additionally starts a new
//! clause; phrase matches never span two clauses.

/// One normalized token and the clause it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub clause: usize,
}

impl Token {
    /// Parses the token as a non-negative integer, if it is one.
    pub fn as_count(&self) -> Option<u32> {
        if self.text.bytes().all(|b| b.is_ascii_digit()) {
            self.text.parse().ok()
        } else {
            None
        }
    }
}

fn is_clause_break(c: char) -> bool {
    matches!(
        c,
        ',' | '.' | ';' | ':' | '!' | '?' | '(' | ')' | '[' | ']' | '\n' | '\r'
    )
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}')
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut clause = 0usize;

    let flush = |word: &mut String, clause: usize, tokens: &mut Vec<Token>| {
        if !word.is_empty() {
            tokens.push(Token {
                text: std::mem::take(word),
                clause,
            });
        }
    };

    for c in text.chars() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else if is_apostrophe(c) {
            continue;
        } else {
            flush(&mut word, clause, &mut tokens);
            if is_clause_break(c) {
                clause += 1;
            }
        }
    }
    flush(&mut word, clause, &mut tokens);
    tokens
}

/// Normalized form of a phrase: its tokens joined by single spaces.
pub fn normalize_phrase(phrase: &str) -> String {
    tokenize(phrase)
        .into_iter()
        .map(|t| t.text)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits text on sentence terminators (`.`, `!`, `?`, `;`, newline).
/// Empty sentences are skipped.
pub fn sentences(text: &str) -> impl Iterator<Item = &str> {
    text.split(['.', '!', '?', ';', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(text: &str) -> Vec<String> {
        tokenize(text).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn lowercases_and_strips_punctuation() {
        assert_eq!(
            words("3 Pedestrians, 1 vehicle in RAINY weather."),
            ["3", "pedestrians", "1", "vehicle", "in", "rainy", "weather"]
        );
    }

    #[test]
    fn apostrophes_join_and_hyphens_split() {
        assert_eq!(words("driver's wrong-way"), ["drivers", "wrong", "way"]);
    }

    #[test]
    fn commas_start_new_clauses() {
        let toks = tokenize("running, red light");
        assert_eq!(toks[0].clause, 0);
        assert_eq!(toks[1].clause, 1);
        assert_eq!(toks[2].clause, 1);
    }

    #[test]
    fn counts_parse_only_digits() {
        let toks = tokenize("3 three 0");
        assert_eq!(toks[0].as_count(), Some(3));
        assert_eq!(toks[1].as_count(), None);
        assert_eq!(toks[2].as_count(), Some(0));
    }

    #[test]
    fn sentence_split() {
        let s: Vec<_> = sentences("A stops. B turns!  ;\nC").collect();
        assert_eq!(s, ["A stops", "B turns", "C"]);
    }
}

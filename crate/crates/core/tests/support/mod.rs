//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rsu_core::segments::{load_manifest, AnnotationItem, Segment};
use rsu_core::{Category, Taxonomy};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_segments() -> Vec<Segment> {
    load_manifest(fixture("manifest.jsonl")).expect("fixture manifest loads")
}

/// Word tokens with the clause they sit in. Written independently of the
/// library tokenizer on purpose.
fn words(text: &str) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    let mut clause = 0;
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
            continue;
        }
        if c == '\'' || c == '\u{2019}' {
            continue;
        }
        if !cur.is_empty() {
            out.push((std::mem::take(&mut cur), clause));
        }
        if ",.;:!?()[]\n\r".contains(c) {
            clause += 1;
        }
    }
    if !cur.is_empty() {
        out.push((cur, clause));
    }
    out
}

fn phrase_words(phrase: &str) -> Vec<String> {
    words(phrase).into_iter().map(|(w, _)| w).collect()
}

struct Mention {
    entry: usize,
    start: usize,
}

/// Scans left to right; at each position the longest phrase of any entry
/// that fits inside one clause wins and consumes its words.
fn mentions(tokens: &[(String, usize)], taxonomy: &Taxonomy) -> Vec<Mention> {
    let phrases: Vec<(usize, Vec<String>)> = taxonomy
        .entries()
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.phrases().map(move |p| (i, phrase_words(p))))
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let best = phrases
            .iter()
            .filter(|(_, p)| {
                i + p.len() <= tokens.len()
                    && p.iter()
                        .enumerate()
                        .all(|(k, w)| tokens[i + k].0 == *w && tokens[i + k].1 == tokens[i].1)
            })
            .max_by_key(|(_, p)| p.len());
        match best {
            Some((entry, p)) => {
                out.push(Mention {
                    entry: *entry,
                    start: i,
                });
                i += p.len();
            }
            None => i += 1,
        }
    }
    out
}

fn entry_of(item: &AnnotationItem, taxonomy: &Taxonomy) -> Option<usize> {
    let want = phrase_words(&item.label);
    taxonomy
        .entries()
        .iter()
        .position(|e| e.category == item.category && e.phrases().any(|p| phrase_words(p) == want))
}

fn satisfies(item: &AnnotationItem, entry: Option<usize>, m: &Mention, tokens: &[(String, usize)]) -> bool {
    if entry != Some(m.entry) {
        return false;
    }
    match item.count {
        None => true,
        Some(n) => {
            m.start > 0 && {
                let (w, clause) = &tokens[m.start - 1];
                *clause == tokens[m.start].1
                    && w.bytes().all(|b| b.is_ascii_digit())
                    && w.parse::<u32>().ok() == Some(n)
            }
        }
    }
}

/// Largest number of annotation items that can be paired with distinct
/// output mentions, found by trying every pairing.
pub fn brute_force_matched(output: &str, items: &[AnnotationItem], taxonomy: &Taxonomy) -> usize {
    let tokens = words(output);
    let found = mentions(&tokens, taxonomy);
    let entries: Vec<Option<usize>> = items.iter().map(|i| entry_of(i, taxonomy)).collect();

    fn best(
        k: usize,
        used: &mut Vec<bool>,
        items: &[AnnotationItem],
        entries: &[Option<usize>],
        found: &[Mention],
        tokens: &[(String, usize)],
    ) -> usize {
        if k == items.len() {
            return 0;
        }
        let mut top = best(k + 1, used, items, entries, found, tokens);
        for (j, m) in found.iter().enumerate() {
            if !used[j] && satisfies(&items[k], entries[k], m, tokens) {
                used[j] = true;
                top = top.max(1 + best(k + 1, used, items, entries, found, tokens));
                used[j] = false;
            }
        }
        top
    }

    best(0, &mut vec![false; found.len()], items, &entries, &found, &tokens)
}

const JOINERS: [&str; 7] = [", ", " and ", " in ", ". ", " with ", "; ", " near "];

/// A random annotation of 1..=6 distinct entries and an output text that
/// mentions some of them, sometimes by alias, sometimes with a wrong or
/// displaced count, plus unrelated keywords.
pub fn random_case(rng: &mut impl Rng, taxonomy: &Taxonomy) -> (String, Vec<AnnotationItem>) {
    let n_items = rng.random_range(1..=6);
    let mut ids: Vec<usize> = (0..taxonomy.len()).collect();
    ids.shuffle(rng);
    let (chosen, rest) = ids.split_at(n_items);

    let items: Vec<AnnotationItem> = chosen
        .iter()
        .map(|&i| {
            let e = &taxonomy.entries()[i];
            if e.category == Category::Agent && rng.random_bool(0.8) {
                AnnotationItem::counted(e.category, e.label.clone(), rng.random_range(1..=5))
            } else {
                AnnotationItem::new(e.category, e.label.clone())
            }
        })
        .collect();

    let mut pieces = Vec::new();
    for (item, &i) in items.iter().zip(chosen) {
        let e = &taxonomy.entries()[i];
        match rng.random_range(0..10) {
            0..=1 => continue,
            2 => {
                let phrases: Vec<&str> = e.phrases().collect();
                pieces.push(phrases[rng.random_range(0..phrases.len())].to_string());
            }
            _ => {}
        }
        let piece = match item.count {
            Some(n) => match rng.random_range(0..6) {
                0 => e.with_count(n + 1),
                1 => format!("{} {n}", e.plural()),
                2 => format!("{n}, {}", e.plural()),
                _ => e.with_count(n),
            },
            None => e.label.clone(),
        };
        pieces.push(piece);
    }
    for _ in 0..rng.random_range(0..3) {
        let e = &taxonomy.entries()[rest[rng.random_range(0..rest.len())]];
        pieces.push(e.label.clone());
    }
    pieces.shuffle(rng);
    let mut output = String::new();
    for (k, p) in pieces.iter().enumerate() {
        if k > 0 {
            output.push_str(JOINERS[rng.random_range(0..JOINERS.len())]);
        }
        output.push_str(p);
    }
    (output, items)
}

use serde::{Deserialize, Serialize};

/// A citation unit: one sentence of a document, with its byte span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub start: usize,
    pub end: usize,
}

const ABBREVIATIONS: &[&str] = &["dr.", "mg.", "cm.", "e.g.", "i.e.", "vs.", "st."];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn ends_with_abbreviation(prefix: &str) -> bool {
    let word = prefix
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or(prefix)
        .trim_start_matches(['(', '[', '"', '\'']);
    ABBREVIATIONS.iter().any(|a| word.eq_ignore_ascii_case(a))
}

/// Splits text at `.`, `!` or `?` followed by whitespace and an uppercase
/// letter, except after a known abbreviation. Sentences exclude surrounding
/// whitespace; the gaps between spans are whitespace only, so the spans and
/// gaps together reproduce the input.
pub fn segment(doc_id: &str, text: &str) -> Vec<Sentence> {
    let mut spans = Vec::new();
    let Some(mut start) = text.find(|c: char| !c.is_whitespace()) else {
        return vec![Sentence {
            doc_id: doc_id.to_string(),
            index: 0,
            text: text.to_string(),
            start: 0,
            end: text.len(),
        }];
    };

    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if i < start || !is_terminator(c) {
            continue;
        }
        let mut end = i + c.len_utf8();
        while let Some(&(j, next)) = chars.peek() {
            if !is_terminator(next) {
                break;
            }
            end = j + next.len_utf8();
            chars.next();
        }
        let rest = &text[end..];
        let gap = rest.len() - rest.trim_start().len();
        let starts_capital = rest[gap..].chars().next().is_some_and(char::is_uppercase);
        if gap == 0 || !starts_capital {
            continue;
        }
        if c == '.' && end == i + 1 && ends_with_abbreviation(&text[start..end]) {
            continue;
        }
        spans.push((start, end));
        start = end + gap;
    }
    let tail_end = text.trim_end().len();
    if start < tail_end {
        spans.push((start, tail_end));
    }

    spans
        .into_iter()
        .enumerate()
        .map(|(index, (start, end))| Sentence {
            doc_id: doc_id.to_string(),
            index,
            text: text[start..end].to_string(),
            start,
            end,
        })
        .collect()
}

//! Longest-first n-gram matching of question tokens against column names.

use serde::{Deserialize, Serialize};

use crate::dataset::TableSchema;

use super::features::column_tokens;

pub const MAX_NGRAM: usize = 6;

const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "and", "as", "at", "by", "for", "from", "in", "is", "of", "on", "or", "the", "to", "with", "what",
    "which",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    Exact,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpan {
    pub start: usize,
    pub length: usize,
    pub col: usize,
    pub kind: LinkKind,
}

impl LinkSpan {
    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn contains(&self, pos: usize) -> bool {
        (self.start..self.end()).contains(&pos)
    }

    /// Token distance from the span to `pos`; zero when inside.
    pub fn distance(&self, pos: usize) -> usize {
        if pos < self.start {
            self.start - pos
        } else if pos >= self.end() {
            pos + 1 - self.end()
        } else {
            0
        }
    }
}

fn is_subsequence(needle: &[String], hay: &[String]) -> bool {
    needle.len() < hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Links question n-grams (length 6 down to 1) to columns. Longer spans claim tokens first;
/// exact name matches beat partial ones at equal length and the lowest column index breaks ties.
/// Spans are returned ordered by start position.
pub fn link_schema(tokens: &[String], schema: &TableSchema) -> Vec<LinkSpan> {
    let cols: Vec<Vec<String>> = schema.headers.iter().map(|h| column_tokens(h)).collect();
    let mut claimed = vec![false; tokens.len()];
    let mut spans = Vec::new();
    for n in (1..=MAX_NGRAM.min(tokens.len())).rev() {
        for start in 0..=tokens.len() - n {
            if claimed[start..start + n].iter().any(|&c| c) {
                continue;
            }
            let gram = &tokens[start..start + n];
            let hit = cols
                .iter()
                .position(|c| c.as_slice() == gram)
                .map(|col| (col, LinkKind::Exact))
                .or_else(|| {
                    if gram.iter().all(|t| FUNCTION_WORDS.contains(&t.as_str())) {
                        return None;
                    }
                    cols.iter()
                        .position(|c| is_subsequence(gram, c))
                        .map(|col| (col, LinkKind::Partial))
                });
            if let Some((col, kind)) = hit {
                claimed[start..start + n].iter_mut().for_each(|c| *c = true);
                spans.push(LinkSpan {
                    start,
                    length: n,
                    col,
                    kind,
                });
            }
        }
    }
    spans.sort_by_key(|s| s.start);
    spans
}

//! Candidate WHERE conditions: cell-value mentions and comparison phrases followed by a number.

use std::collections::BTreeSet;

use crate::balance::{Lexicon, PhraseMatch};
use crate::dataset::{normalize_question, ColumnType, Condition, Op, Table};
use crate::sqlexec::{normalize_text, parse_number};

use super::features::column_tokens;
use super::link::{LinkKind, LinkSpan};

pub const DEFAULT_VALUE_WINDOW: usize = 3;

const STOP_VALUES: &[&str] = &["a", "an", "and", "the", "of", "in", "is", "on", "or", "to"];

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub cond: Condition,
    /// Token span of the value in the question.
    pub start: usize,
    pub len: usize,
    /// Comparison phrase that produced this candidate, if any.
    pub phrase: Option<PhraseMatch>,
}

fn find_all(hay: &[String], needle: &[String]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    hay.windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle)
        .map(|(i, _)| i)
        .collect()
}

fn numeric_share(table: &Table, col: usize) -> f64 {
    if table.rows.is_empty() {
        return 0.0;
    }
    let n = table.column(col).filter(|c| parse_number(c).is_some()).count();
    n as f64 / table.rows.len() as f64
}

/// Column for a comparison value at token `pos`: the nearest linked numeric column, else the
/// numeric column whose name best overlaps the question, else the lowest-index numeric column.
pub fn comparison_column(tokens: &[String], table: &Table, links: &[LinkSpan], pos: usize) -> usize {
    let schema = &table.schema;
    let n = schema.num_columns();
    let mut pool: Vec<usize> = (0..n).filter(|&c| schema.col_types[c] == ColumnType::Real).collect();
    if pool.is_empty() {
        pool = (0..n).filter(|&c| numeric_share(table, c) >= 0.5).collect();
    }
    if pool.is_empty() {
        pool = (0..n).collect();
    }
    let nearest = links
        .iter()
        .filter(|l| pool.contains(&l.col))
        .min_by_key(|l| (l.distance(pos), l.kind == LinkKind::Partial, l.col));
    if let Some(l) = nearest {
        return l.col;
    }
    let overlap = |c: usize| {
        let ct = column_tokens(&schema.headers[c]);
        tokens
            .iter()
            .filter(|t| {
                t.len() >= 4
                    && ct
                        .iter()
                        .any(|h| h.len() >= 4 && h.as_bytes()[..4] == t.as_bytes()[..4])
            })
            .count()
    };
    let mut best = pool[0];
    let mut best_score = overlap(best);
    for &c in &pool[1..] {
        let s = overlap(c);
        if s > best_score {
            best = c;
            best_score = s;
        }
    }
    best
}

/// Extracts candidate conditions ordered by start token (then column).
///
/// Every column contributes `EQ` candidates for maximal question spans equal to one of its
/// normalized cells. Each lexicon phrase followed within `window` tokens by a number adds a
/// candidate with the phrase's operator on [`comparison_column`]; that number token is then
/// no longer available to cell matches.
pub fn extract_conditions(
    tokens: &[String],
    table: &Table,
    links: &[LinkSpan],
    lexicon: &Lexicon,
    window: usize,
) -> Vec<Candidate> {
    let mut phrase_cands = Vec::new();
    let mut taken = vec![false; tokens.len()];
    for m in lexicon.find(tokens) {
        let after = m.start + m.len;
        let hit =
            (after..(after + window).min(tokens.len())).find(|&j| !taken[j] && parse_number(&tokens[j]).is_some());
        if let Some(j) = hit {
            taken[j] = true;
            let col = comparison_column(tokens, table, links, j);
            phrase_cands.push(Candidate {
                cond: Condition::new(col, m.op, tokens[j].clone()),
                start: j,
                len: 1,
                phrase: Some(m),
            });
        }
    }

    let inside_exact_link = |s: usize, len: usize| {
        links
            .iter()
            .any(|l| l.kind == LinkKind::Exact && l.start <= s && s + len <= l.end())
    };
    let mut cell_cands: Vec<Candidate> = Vec::new();
    for col in 0..table.schema.num_columns() {
        let mut seen = BTreeSet::new();
        for cell in table.column(col) {
            let value_tokens = normalize_question(cell);
            if value_tokens.is_empty() || value_tokens.iter().all(|t| STOP_VALUES.contains(&t.as_str())) {
                continue;
            }
            if !seen.insert(value_tokens.clone()) {
                continue;
            }
            for start in find_all(tokens, &value_tokens) {
                let len = value_tokens.len();
                if taken[start..start + len].iter().any(|&t| t) || inside_exact_link(start, len) {
                    continue;
                }
                cell_cands.push(Candidate {
                    cond: Condition::new(col, Op::Eq, normalize_text(cell)),
                    start,
                    len,
                    phrase: None,
                });
            }
        }
    }
    // keep only maximal spans
    let spans: Vec<(usize, usize)> = cell_cands.iter().map(|c| (c.start, c.len)).collect();
    cell_cands.retain(|c| {
        !spans
            .iter()
            .any(|&(s, l)| l > c.len && s <= c.start && c.start + c.len <= s + l)
    });

    let mut out: Vec<Candidate> = phrase_cands.into_iter().chain(cell_cands).collect();
    out.sort_by_key(|c| (c.start, c.cond.col, c.len));
    let mut seen = BTreeSet::new();
    out.retain(|c| seen.insert((c.cond.col, c.cond.op, normalize_text(&c.cond.value))));
    out
}

/// Position of the first occurrence of a literal's normalized tokens in the question.
pub fn locate_value(tokens: &[String], value: &str) -> Option<(usize, usize)> {
    let needle = normalize_question(value);
    find_all(tokens, &needle).first().map(|&s| (s, needle.len()))
}

/// Closest phrase that ends at most `window` tokens before `pos`.
pub fn phrase_before(phrases: &[PhraseMatch], pos: usize, window: usize) -> Option<PhraseMatch> {
    phrases
        .iter()
        .filter(|p| p.start + p.len <= pos && pos < p.start + p.len + window)
        .max_by_key(|p| p.start)
        .copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TableSchema;
    use crate::parser::link::link_schema;

    fn table() -> Table {
        let schema = TableSchema {
            table_id: "t".into(),
            headers: vec!["name".into(), "goals".into(), "club".into()],
            col_types: vec![ColumnType::Text, ColumnType::Real, ColumnType::Text],
        };
        let rows = [["Ada", "3", "Red Star"], ["Bo", "5", "Blue"], ["Cy", "7", "Red"]]
            .iter()
            .map(|r| r.iter().map(|c| c.to_string()).collect())
            .collect();
        Table::new(schema, rows).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn run(q: &str) -> Vec<Candidate> {
        let t = table();
        let tokens = toks(q);
        let links = link_schema(&tokens, &t.schema);
        extract_conditions(&tokens, &t, &links, &Lexicon::extended(), DEFAULT_VALUE_WINDOW)
    }

    #[test]
    fn direct_cell_match() {
        let c = run("which club does ada play for");
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].cond, Condition::new(0, Op::Eq, "ada"));
        assert_eq!((c[0].start, c[0].len), (3, 1));
    }

    #[test]
    fn phrase_then_number() {
        let c = run("goals bigger than 5");
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].cond, Condition::new(1, Op::Gt, "5"));
        assert!(c[0].phrase.is_some());
    }

    #[test]
    fn nothing_to_extract() {
        assert!(run("what is the total").is_empty());
        assert!(run("more than nothing").is_empty());
    }

    #[test]
    fn maximal_spans_win() {
        let c = run("players at red star");
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].cond, Condition::new(2, Op::Eq, "red star"));
    }

    #[test]
    fn window_limits_phrase_reach() {
        // 7 sits four tokens after the phrase, so only the goals cell matches it
        let c = run("less than a b c 7");
        assert_eq!(c.len(), 1);
        assert!(c[0].phrase.is_none());
        let c = run("less than a b 7");
        assert_eq!(c[0].cond, Condition::new(1, Op::Lt, "7"));
    }

    #[test]
    fn locating_values() {
        let t = toks("who scored more than 2.5 goals");
        assert_eq!(locate_value(&t, "2.5"), Some((4, 1)));
        assert_eq!(locate_value(&t, "Scored More"), Some((1, 2)));
        assert_eq!(locate_value(&t, "zzz"), None);
        let phrases = Lexicon::strict().find(&t);
        assert_eq!(phrase_before(&phrases, 4, 3).map(|p| p.start), Some(2));
        assert_eq!(phrase_before(&phrases, 2, 3), None);
    }
}

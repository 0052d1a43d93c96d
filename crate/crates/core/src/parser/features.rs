//! Hashed sparse features for the three slot models.

use serde::{Deserialize, Serialize};

use crate::balance::{Lexicon, PhraseMatch};
use crate::dataset::{ColumnType, TableSchema};
use crate::seed::fnv1a64;

use super::link::{LinkKind, LinkSpan};

pub const DEFAULT_HASH_BITS: u32 = 18;

/// Sparse vector of `(bucket, value)` pairs, sorted by bucket with duplicates merged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn from_entries(mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (b, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == b => last.1 += v,
                _ => merged.push((b, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        FeatureVector { entries: merged }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.1.is_finite())
    }
}

/// Collects named features and hashes them into `2^bits` buckets.
pub struct FeatureBuilder {
    mask: u64,
    entries: Vec<(u32, f64)>,
}

impl FeatureBuilder {
    pub fn new(bits: u32) -> Self {
        FeatureBuilder {
            mask: (1u64 << bits) - 1,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: f64) {
        let bucket = (fnv1a64(name.as_bytes()) & self.mask) as u32;
        self.entries.push((bucket, value));
    }

    pub fn flag(&mut self, name: &str) {
        self.add(name, 1.0);
    }

    pub fn build(self) -> FeatureVector {
        FeatureVector::from_entries(self.entries)
    }
}

pub fn column_tokens(header: &str) -> Vec<String> {
    crate::dataset::normalize_question(header)
}

fn shares_prefix(a: &str, b: &str) -> bool {
    const MIN: usize = 4;
    a == b || (a.len() >= MIN && b.len() >= MIN && a.as_bytes()[..MIN] == b.as_bytes()[..MIN])
}

/// Features of one candidate select column.
pub fn sel_features(
    bits: u32,
    tokens: &[String],
    links: &[LinkSpan],
    schema: &TableSchema,
    col: usize,
    cond_cols: &[usize],
) -> FeatureVector {
    let mut f = FeatureBuilder::new(bits);
    let ty = schema.col_types[col].as_str();
    let ctoks = column_tokens(&schema.headers[col]);
    f.flag(&format!("s:bias|{ty}"));
    for u in tokens {
        for t in &ctoks {
            f.flag(&format!("s:qc|{u}|{t}"));
        }
        f.flag(&format!("s:qt|{u}|{ty}"));
    }
    let lead = tokens.iter().take(2).map(String::as_str).collect::<Vec<_>>().join("_");
    f.flag(&format!("s:lead|{lead}|{ty}"));
    let prefix_hits = tokens
        .iter()
        .filter(|u| ctoks.iter().any(|t| shares_prefix(u, t)))
        .count();
    f.add("s:prefix", prefix_hits.min(3) as f64);

    let is_cond = cond_cols.contains(&col);
    let mut linked_rank = None;
    for (rank, span) in links.iter().enumerate() {
        if span.col == col {
            let kind = match span.kind {
                LinkKind::Exact => "exact",
                LinkKind::Partial => "partial",
            };
            f.flag(&format!("s:link|{kind}|cond={is_cond}"));
            linked_rank.get_or_insert(rank);
        }
    }
    match linked_rank {
        Some(r) => f.flag(&format!("s:linkrank|{}", r.min(2))),
        None => f.flag(&format!("s:unlinked|cond={is_cond}")),
    }
    if is_cond {
        f.flag(&format!("s:cond|{ty}"));
    }
    f.build()
}

/// Features for the aggregator given the chosen select column.
pub fn agg_features(bits: u32, tokens: &[String], schema: &TableSchema, sel: usize) -> FeatureVector {
    let mut f = FeatureBuilder::new(bits);
    let ty = schema.col_types[sel].as_str();
    f.flag("a:bias");
    f.flag(&format!("a:type|{ty}"));
    for (i, u) in tokens.iter().enumerate() {
        f.flag(&format!("a:u|{u}"));
        if let Some(v) = tokens.get(i + 1) {
            f.flag(&format!("a:b|{u}_{v}"));
        }
    }
    let lead = tokens.iter().take(3).map(String::as_str).collect::<Vec<_>>().join("_");
    f.flag(&format!("a:lead|{lead}"));
    for t in column_tokens(&schema.headers[sel]) {
        f.flag(&format!("a:col|{t}"));
    }
    f.build()
}

/// Context features for a condition whose value starts at token `pos`.
pub fn op_features(
    bits: u32,
    tokens: &[String],
    pos: usize,
    phrase: Option<&PhraseMatch>,
    lexicon: &Lexicon,
    col_type: ColumnType,
) -> FeatureVector {
    let mut f = FeatureBuilder::new(bits);
    f.flag("o:bias");
    f.flag(&format!("o:type|{}", col_type.as_str()));
    let before = |k: usize| {
        pos.checked_sub(k)
            .and_then(|i| tokens.get(i))
            .map_or("<s>", String::as_str)
    };
    let (p1, p2, p3) = (before(1), before(2), before(3));
    f.flag(&format!("o:p1|{p1}"));
    f.flag(&format!("o:p2|{p2}"));
    f.flag(&format!("o:p3|{p3}"));
    f.flag(&format!("o:p21|{p2}_{p1}"));
    f.flag(&format!("o:n1|{}", tokens.get(pos + 1).map_or("</s>", String::as_str)));
    if let Some(p) = phrase {
        let words = lexicon.entries[p.entry].phrase.join("_");
        f.flag(&format!("o:phrase|{words}"));
        f.flag(&format!("o:lexop|{}", p.op.name()));
        f.flag(&format!("o:gap|{}", pos - (p.start + p.len)));
    } else {
        f.flag("o:nophrase");
    }
    f.build()
}

//! Logical form accuracy, execution accuracy, per-component matching and slice reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::balance::is_domain_specific;
use crate::dataset::{Dataset, QuerySketch, Table, TableMap};
use crate::error::{Error, Result};
use crate::parallel::{self, Parallelism};
use crate::sqlexec::{canonicalize, execute, literal_key, literals_equal, outcomes_equal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Component {
    SelCol,
    Agg,
    WhereCols,
    WhereOps,
    WhereValues,
    WhereCondCount,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::SelCol,
        Component::Agg,
        Component::WhereCols,
        Component::WhereOps,
        Component::WhereValues,
        Component::WhereCondCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::SelCol => "SEL_COL",
            Component::Agg => "AGG",
            Component::WhereCols => "WHERE_COLS",
            Component::WhereOps => "WHERE_OPS",
            Component::WhereValues => "WHERE_VALUES",
            Component::WhereCondCount => "WHERE_COND_COUNT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Slice {
    All,
    DomainSpecific,
    Normal,
}

impl Slice {
    pub const ALL: [Slice; 3] = [Slice::All, Slice::DomainSpecific, Slice::Normal];

    pub fn name(self) -> &'static str {
        match self {
            Slice::All => "ALL",
            Slice::DomainSpecific => "DOMAIN_SPECIFIC",
            Slice::Normal => "NORMAL",
        }
    }
}

/// Whether logical-form comparison canonicalizes condition order first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LfMode {
    #[default]
    OrderInsensitive,
    OrderSensitive,
}

fn check_lengths(preds: usize, golds: usize) -> Result<()> {
    if preds == golds {
        Ok(())
    } else {
        Err(Error::LengthMismatch { preds, golds })
    }
}

fn fraction(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

pub fn lf_match(pred: &QuerySketch, gold: &QuerySketch, mode: LfMode) -> bool {
    let (p, g) = match mode {
        LfMode::OrderInsensitive => (canonicalize(pred), canonicalize(gold)),
        LfMode::OrderSensitive => (pred.clone(), gold.clone()),
    };
    p.sel == g.sel
        && p.agg == g.agg
        && p.conds.len() == g.conds.len()
        && p.conds
            .iter()
            .zip(&g.conds)
            .all(|(a, b)| a.col == b.col && a.op == b.op && literals_equal(&a.value, &b.value))
}

pub fn ex_match(pred: &QuerySketch, gold: &QuerySketch, table: &Table) -> bool {
    let gold_out = execute(gold, table);
    let pred_out = execute(pred, table);
    outcomes_equal(&pred_out, &gold_out)
}

fn sorted<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v
}

pub fn component_match(pred: &QuerySketch, gold: &QuerySketch, component: Component) -> bool {
    match component {
        Component::SelCol => pred.sel == gold.sel,
        Component::Agg => pred.agg == gold.agg,
        Component::WhereCols => {
            sorted(pred.conds.iter().map(|c| c.col).collect()) == sorted(gold.conds.iter().map(|c| c.col).collect())
        }
        Component::WhereOps => {
            sorted(pred.conds.iter().map(|c| (c.col, c.op)).collect())
                == sorted(gold.conds.iter().map(|c| (c.col, c.op)).collect())
        }
        Component::WhereValues => {
            sorted(pred.conds.iter().map(|c| (c.col, literal_key(&c.value))).collect())
                == sorted(gold.conds.iter().map(|c| (c.col, literal_key(&c.value))).collect())
        }
        Component::WhereCondCount => pred.conds.len() == gold.conds.len(),
    }
}

pub fn logical_form_accuracy(preds: &[QuerySketch], golds: &[QuerySketch], mode: LfMode) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| lf_match(p, g, mode)).count();
    Ok(fraction(hits, preds.len()))
}

/// Resolves one table id per pair; a missing id is an error.
pub fn resolve_tables<'a>(table_ids: &[String], tables: &'a TableMap) -> Result<Vec<&'a Table>> {
    table_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            tables.get(id).ok_or_else(|| Error::UnknownTable {
                example: i,
                line: i + 1,
                table_id: id.clone(),
            })
        })
        .collect()
}

pub fn execution_accuracy(
    preds: &[QuerySketch],
    golds: &[QuerySketch],
    table_ids: &[String],
    tables: &TableMap,
) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    check_lengths(table_ids.len(), golds.len())?;
    let resolved = resolve_tables(table_ids, tables)?;
    let hits = (0..preds.len())
        .filter(|&i| ex_match(&preds[i], &golds[i], resolved[i]))
        .count();
    Ok(fraction(hits, preds.len()))
}

pub fn component_matching(preds: &[QuerySketch], golds: &[QuerySketch]) -> Result<BTreeMap<Component, f64>> {
    check_lengths(preds.len(), golds.len())?;
    Ok(Component::ALL
        .iter()
        .map(|&c| {
            let hits = preds
                .iter()
                .zip(golds)
                .filter(|(p, g)| component_match(p, g, c))
                .count();
            (c, fraction(hits, preds.len()))
        })
        .collect())
}

/// Outcome of scoring one prediction against its gold sketch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairScore {
    pub lf: bool,
    pub ex: bool,
    pub components: [bool; 6],
    pub domain_specific: bool,
}

pub fn score_pair(
    pred: &QuerySketch,
    gold: &QuerySketch,
    table: &Table,
    mode: LfMode,
    domain_specific: bool,
) -> PairScore {
    PairScore {
        lf: lf_match(pred, gold, mode),
        ex: ex_match(pred, gold, table),
        components: Component::ALL.map(|c| component_match(pred, gold, c)),
        domain_specific,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub slice: Slice,
    pub n: usize,
    pub lf_accuracy: f64,
    pub ex_accuracy: f64,
    pub component_accuracy: BTreeMap<Component, f64>,
}

impl MetricReport {
    pub fn from_scores<'a>(slice: Slice, scores: impl IntoIterator<Item = &'a PairScore>) -> Self {
        let mut n = 0;
        let mut lf = 0;
        let mut ex = 0;
        let mut comp = [0usize; 6];
        for s in scores {
            let keep = match slice {
                Slice::All => true,
                Slice::DomainSpecific => s.domain_specific,
                Slice::Normal => !s.domain_specific,
            };
            if !keep {
                continue;
            }
            n += 1;
            lf += usize::from(s.lf);
            ex += usize::from(s.ex);
            for (acc, &hit) in comp.iter_mut().zip(&s.components) {
                *acc += usize::from(hit);
            }
        }
        MetricReport {
            slice,
            n,
            lf_accuracy: fraction(lf, n),
            ex_accuracy: fraction(ex, n),
            component_accuracy: Component::ALL
                .iter()
                .zip(comp)
                .map(|(&c, hits)| (c, fraction(hits, n)))
                .collect(),
        }
    }
}

/// Scores predictions for every example of `dataset`, in order.
pub fn score_dataset(
    preds: &[QuerySketch],
    dataset: &Dataset,
    mode: LfMode,
    par: Parallelism,
) -> Result<Vec<PairScore>> {
    check_lengths(preds.len(), dataset.len())?;
    dataset.validate()?;
    Ok(parallel::map_indexed(par, &dataset.examples, |i, ex| {
        score_pair(&preds[i], &ex.gold, dataset.table_of(ex), mode, is_domain_specific(ex))
    }))
}

/// One report per slice (ALL, DOMAIN_SPECIFIC, NORMAL).
pub fn evaluate(preds: &[QuerySketch], dataset: &Dataset, mode: LfMode, par: Parallelism) -> Result<Vec<MetricReport>> {
    let scores = score_dataset(preds, dataset, mode, par)?;
    Ok(Slice::ALL
        .iter()
        .map(|&s| MetricReport::from_scores(s, &scores))
        .collect())
}

//! First-match error taxonomy over logically incorrect predictions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::QuerySketch;
use crate::error::Result;

use super::metrics::{component_match, lf_match, Component, LfMode};

/// Categories in first-match order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCategory {
    /// Gold has conditions, the prediction has none.
    MissingWhere,
    /// Select column right, aggregator wrong.
    ComponentInterdependency,
    /// Select and WHERE columns swapped.
    Integration,
    WrongColumn,
    WrongValue,
    WrongOp,
    Other,
}

impl ErrorCategory {
    pub const ORDER: [ErrorCategory; 7] = [
        ErrorCategory::MissingWhere,
        ErrorCategory::ComponentInterdependency,
        ErrorCategory::Integration,
        ErrorCategory::WrongColumn,
        ErrorCategory::WrongValue,
        ErrorCategory::WrongOp,
        ErrorCategory::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::MissingWhere => "MISSING_WHERE",
            ErrorCategory::ComponentInterdependency => "COMPONENT_INTERDEPENDENCY",
            ErrorCategory::Integration => "INTEGRATION",
            ErrorCategory::WrongColumn => "WRONG_COLUMN",
            ErrorCategory::WrongValue => "WRONG_VALUE",
            ErrorCategory::WrongOp => "WRONG_OP",
            ErrorCategory::Other => "OTHER",
        }
    }
}

/// Category of a logically incorrect pair; `None` when the pair matches.
pub fn categorize(pred: &QuerySketch, gold: &QuerySketch, mode: LfMode) -> Option<ErrorCategory> {
    if lf_match(pred, gold, mode) {
        return None;
    }
    let swapped = pred.sel != gold.sel
        && (gold.conds.iter().any(|c| c.col == pred.sel) || pred.conds.iter().any(|c| c.col == gold.sel));
    let category = if !gold.conds.is_empty() && pred.conds.is_empty() {
        ErrorCategory::MissingWhere
    } else if pred.sel == gold.sel && pred.agg != gold.agg {
        ErrorCategory::ComponentInterdependency
    } else if swapped {
        ErrorCategory::Integration
    } else if pred.sel != gold.sel || !component_match(pred, gold, Component::WhereCols) {
        ErrorCategory::WrongColumn
    } else if !component_match(pred, gold, Component::WhereValues) {
        ErrorCategory::WrongValue
    } else if !component_match(pred, gold, Component::WhereOps) {
        ErrorCategory::WrongOp
    } else {
        ErrorCategory::Other
    };
    Some(category)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub total_pairs: usize,
    pub total_errors: usize,
    pub counts: BTreeMap<ErrorCategory, usize>,
    /// Each category's share of all errors.
    pub shares: BTreeMap<ErrorCategory, f64>,
}

pub fn categorize_errors(preds: &[QuerySketch], golds: &[QuerySketch], mode: LfMode) -> Result<ErrorBreakdown> {
    if preds.len() != golds.len() {
        return Err(crate::Error::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    let mut counts: BTreeMap<ErrorCategory, usize> = ErrorCategory::ORDER.iter().map(|&c| (c, 0)).collect();
    for (p, g) in preds.iter().zip(golds) {
        if let Some(c) = categorize(p, g, mode) {
            *counts.get_mut(&c).expect("all categories present") += 1;
        }
    }
    let total_errors: usize = counts.values().sum();
    let shares = counts
        .iter()
        .map(|(&c, &n)| {
            (
                c,
                if total_errors == 0 {
                    0.0
                } else {
                    n as f64 / total_errors as f64
                },
            )
        })
        .collect();
    Ok(ErrorBreakdown {
        total_pairs: preds.len(),
        total_errors,
        counts,
        shares,
    })
}

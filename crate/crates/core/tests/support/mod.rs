//! Shared test helpers: random tables and sketches, and a naive executor written without any
//! reference to the library's executor.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sqlbalance::dataset::{Agg, ColumnType, Condition, Op, QuerySketch, Table, TableSchema};
use sqlbalance::sqlexec::{QueryResult, Value};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

const WORDS: [&str; 8] = ["ada", "Bo", "cy ", "dee", "ADA", "echo", "fox", "gil"];

fn random_cell(rng: &mut ChaCha8Rng, numeric: bool) -> String {
    if numeric && rng.gen_bool(0.9) {
        match rng.gen_range(0..4) {
            0 => rng.gen_range(-5..20).to_string(),
            1 => format!("{}.0", rng.gen_range(0..20)),
            2 => format!("{:.2}", rng.gen_range(-10.0..50.0)),
            _ => format!(" {} ", rng.gen_range(0..10)),
        }
    } else {
        WORDS.choose(rng).unwrap().to_string()
    }
}

/// A table of at most 8 rows and 4 columns mixing numeric and text cells.
pub fn random_table(rng: &mut ChaCha8Rng, id: &str) -> Table {
    let cols = rng.gen_range(1..=4);
    let rows = rng.gen_range(0..=8);
    let col_types: Vec<ColumnType> = (0..cols)
        .map(|_| {
            if rng.gen_bool(0.6) {
                ColumnType::Real
            } else {
                ColumnType::Text
            }
        })
        .collect();
    let data = (0..rows)
        .map(|_| {
            col_types
                .iter()
                .map(|&t| random_cell(rng, t == ColumnType::Real))
                .collect()
        })
        .collect();
    let schema = TableSchema {
        table_id: id.to_string(),
        headers: (0..cols).map(|c| format!("col {c}")).collect(),
        col_types,
    };
    Table::new(schema, data).unwrap()
}

/// A valid sketch whose condition values are usually drawn from the table's own cells.
pub fn random_sketch(rng: &mut ChaCha8Rng, table: &Table) -> QuerySketch {
    let cols = table.schema.num_columns();
    let sel = rng.gen_range(0..cols);
    let agg = Agg::ALL[rng.gen_range(0..Agg::ALL.len())];
    let n = rng.gen_range(0..=3);
    let conds = (0..n)
        .map(|_| {
            let col = rng.gen_range(0..cols);
            let op = Op::ALL[rng.gen_range(0..3)];
            let value = if !table.rows.is_empty() && rng.gen_bool(0.7) {
                table.rows[rng.gen_range(0..table.rows.len())][col].clone()
            } else {
                let numeric = rng.gen_bool(0.5);
                random_cell(rng, numeric)
            };
            Condition::new(col, op, value)
        })
        .collect();
    QuerySketch::new(sel, agg, conds)
}

// ---- naive oracle ----

fn num(s: &str) -> Option<f64> {
    match s.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Some(x),
        _ => None,
    }
}

fn text(s: &str) -> String {
    s.trim().to_lowercase()
}

fn holds(cell: &str, op: Op, value: &str) -> bool {
    match (num(cell), num(value)) {
        (Some(a), Some(b)) => match op {
            Op::Eq => a == b,
            Op::Gt => a > b,
            Op::Lt => a < b,
        },
        (a, b) => match op {
            // mixed number/text literals are never equal
            Op::Eq => a.is_none() && b.is_none() && text(cell) == text(value),
            Op::Gt => text(cell) > text(value),
            Op::Lt => text(cell) < text(value),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    Empty,
    Number(f64),
    Text(String),
    Bag { numbers: Vec<f64>, texts: Vec<String> },
}

pub fn matching_cells<'a>(sketch: &QuerySketch, table: &'a Table) -> Vec<&'a str> {
    let mut out = Vec::new();
    for row in &table.rows {
        let mut ok = true;
        for c in &sketch.conds {
            if !holds(&row[c.col], c.op, &c.value) {
                ok = false;
            }
        }
        if ok {
            out.push(row[sketch.sel].as_str());
        }
    }
    out
}

pub fn oracle_execute(sketch: &QuerySketch, table: &Table) -> Oracle {
    let cells = matching_cells(sketch, table);
    let nums: Vec<f64> = cells.iter().filter_map(|c| num(c)).collect();
    match sketch.agg {
        Agg::Count => Oracle::Number(cells.len() as f64),
        Agg::None => {
            let real = table.schema.col_types[sketch.sel] == ColumnType::Real;
            let mut numbers = Vec::new();
            let mut texts = Vec::new();
            for c in cells {
                match num(c) {
                    Some(x) if real => numbers.push(x),
                    _ => texts.push(text(c)),
                }
            }
            numbers.sort_by(|a, b| a.partial_cmp(b).unwrap());
            texts.sort();
            Oracle::Bag { numbers, texts }
        }
        Agg::Sum | Agg::Avg if nums.is_empty() => Oracle::Empty,
        Agg::Sum => Oracle::Number(nums.iter().sum()),
        Agg::Avg => Oracle::Number(nums.iter().sum::<f64>() / nums.len() as f64),
        Agg::Min | Agg::Max => {
            if !nums.is_empty() {
                let mut v = nums.clone();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                Oracle::Number(if sketch.agg == Agg::Min { v[0] } else { v[v.len() - 1] })
            } else if cells.is_empty() {
                Oracle::Empty
            } else {
                let mut t: Vec<String> = cells.iter().map(|c| text(c)).collect();
                t.sort();
                Oracle::Text(if sketch.agg == Agg::Min {
                    t[0].clone()
                } else {
                    t[t.len() - 1].clone()
                })
            }
        }
    }
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

/// Does the library outcome agree with the oracle?
pub fn agrees(got: &sqlbalance::Result<QueryResult>, want: &Oracle) -> bool {
    match (got, want) {
        (Err(sqlbalance::Error::EmptyAggregate), Oracle::Empty) => true,
        (Ok(QueryResult::Scalar(Value::Number(x))), Oracle::Number(y)) => close(*x, *y),
        (Ok(QueryResult::Scalar(Value::Text(x))), Oracle::Text(y)) => x == y,
        (Ok(QueryResult::Bag(vals)), Oracle::Bag { numbers, texts }) => {
            let mut n: Vec<f64> = Vec::new();
            let mut t: Vec<String> = Vec::new();
            for v in vals {
                match v {
                    Value::Number(x) => n.push(*x),
                    Value::Text(s) => t.push(text(s)),
                }
            }
            n.sort_by(|a, b| a.partial_cmp(b).unwrap());
            t.sort();
            n.len() == numbers.len() && n.iter().zip(numbers).all(|(a, b)| close(*a, *b)) && &t == texts
        }
        _ => false,
    }
}

/// Perturbs a gold sketch the way a parser might get it wrong (or leaves it intact).
pub fn perturb(rng: &mut ChaCha8Rng, gold: &QuerySketch, table: &Table) -> QuerySketch {
    let mut p = gold.clone();
    let cols = table.schema.num_columns();
    match rng.gen_range(0..8) {
        0 => p.sel = rng.gen_range(0..cols),
        1 => p.agg = Agg::ALL[rng.gen_range(0..6)],
        2 => p.conds.clear(),
        3 if !p.conds.is_empty() => {
            let i = rng.gen_range(0..p.conds.len());
            p.conds[i].op = Op::ALL[rng.gen_range(0..3)];
        }
        4 if !p.conds.is_empty() => {
            let i = rng.gen_range(0..p.conds.len());
            p.conds[i].value = random_cell(rng, true);
        }
        5 if !p.conds.is_empty() => {
            let i = rng.gen_range(0..p.conds.len());
            p.conds[i].col = rng.gen_range(0..cols);
        }
        6 => p.conds.reverse(),
        _ => {}
    }
    p
}

//! Execution semantics for the dataset's SQL subset.
//!
//! Cells are stored as literal strings and coerced at comparison time. Equality and
//! ordering are numeric whenever both sides parse as finite numbers and fall back to
//! trimmed, lowercased text otherwise.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{Agg, ColumnType, Condition, Op, QuerySketch, Table, TableSchema};
use crate::error::{Error, Result};

/// Relative tolerance used when comparing numeric results.
pub const REL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(n) => write!(f, "{n}"),
            Value::Text(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QueryResult {
    Scalar(Value),
    Bag(Vec<Value>),
}

impl fmt::Display for QueryResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryResult::Scalar(v) => write!(f, "{v}"),
            QueryResult::Bag(vs) => {
                f.write_str("{")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

pub fn normalize_text(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Parses a decimal literal, rejecting NaN and infinities.
pub fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|n| n.is_finite())
}

pub fn coerce(cell: &str, col_type: ColumnType) -> Value {
    match col_type {
        ColumnType::Real => match parse_number(cell) {
            Some(n) => Value::Number(n),
            None => Value::Text(normalize_text(cell)),
        },
        ColumnType::Text => Value::Text(normalize_text(cell)),
    }
}

/// Numeric-first coercion used for comparisons and numeric aggregates.
fn coerce_lenient(cell: &str) -> Value {
    coerce(cell, ColumnType::Real)
}

/// Literal equality used by EQ conditions and logical-form matching.
pub fn literals_equal(a: &str, b: &str) -> bool {
    match (coerce_lenient(a), coerce_lenient(b)) {
        (Value::Number(x), Value::Number(y)) => x == y,
        (Value::Text(x), Value::Text(y)) => x == y,
        _ => false,
    }
}

/// Canonical key of a literal: numbers collapse to their shortest decimal form.
pub fn literal_key(s: &str) -> String {
    match coerce_lenient(s) {
        Value::Number(n) => format!("{n}"),
        Value::Text(t) => t,
    }
}

fn compare_literals(cell: &str, value: &str) -> Ordering {
    match (parse_number(cell), parse_number(value)) {
        (Some(a), Some(b)) => a.partial_cmp(&b).expect("finite numbers are ordered"),
        _ => normalize_text(cell).cmp(&normalize_text(value)),
    }
}

pub fn condition_holds(cell: &str, cond: &Condition) -> bool {
    match cond.op {
        Op::Eq => literals_equal(cell, &cond.value),
        Op::Gt => compare_literals(cell, &cond.value) == Ordering::Greater,
        Op::Lt => compare_literals(cell, &cond.value) == Ordering::Less,
    }
}

/// Sorts conditions by (column, operator code, normalized value).
pub fn canonicalize(sketch: &QuerySketch) -> QuerySketch {
    let mut out = sketch.clone();
    out.conds
        .sort_by_cached_key(|c| (c.col, c.op.code(), normalize_text(&c.value)));
    out
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn quote_value(value: &str) -> String {
    if parse_number(value).is_some() {
        value.trim().to_owned()
    } else {
        format!("'{}'", value.replace('\'', "''"))
    }
}

/// Renders `SELECT AGG("col") FROM table WHERE "col" OP value AND ...`.
pub fn render_sql(sketch: &QuerySketch, schema: &TableSchema) -> Result<String> {
    sketch.validate(schema)?;
    let col = quote_ident(&schema.headers[sketch.sel]);
    let mut sql = match sketch.agg {
        Agg::None => format!("SELECT {col}"),
        agg => format!("SELECT {}({col})", agg.name()),
    };
    sql.push_str(" FROM ");
    sql.push_str(&schema.table_id);
    for (i, c) in sketch.conds.iter().enumerate() {
        sql.push_str(if i == 0 { " WHERE " } else { " AND " });
        sql.push_str(&quote_ident(&schema.headers[c.col]));
        sql.push(' ');
        sql.push_str(c.op.symbol());
        sql.push(' ');
        sql.push_str(&quote_value(&c.value));
    }
    Ok(sql)
}

pub fn execute(sketch: &QuerySketch, table: &Table) -> Result<QueryResult> {
    sketch.validate(&table.schema)?;
    let sel_type = table.schema.col_types[sketch.sel];
    let matching = table
        .rows
        .iter()
        .filter(|row| sketch.conds.iter().all(|c| condition_holds(&row[c.col], c)));
    let cells: Vec<&str> = matching.map(|row| row[sketch.sel].as_str()).collect();
    let result = match sketch.agg {
        Agg::None => QueryResult::Bag(cells.iter().map(|c| coerce(c, sel_type)).collect()),
        Agg::Count => QueryResult::Scalar(Value::Number(cells.len() as f64)),
        Agg::Sum | Agg::Avg => {
            let nums: Vec<f64> = cells.iter().filter_map(|c| parse_number(c)).collect();
            if nums.is_empty() {
                return Err(Error::EmptyAggregate);
            }
            let sum: f64 = nums.iter().sum();
            let v = if sketch.agg == Agg::Sum {
                sum
            } else {
                sum / nums.len() as f64
            };
            QueryResult::Scalar(Value::Number(v))
        }
        Agg::Min | Agg::Max => {
            let want = if sketch.agg == Agg::Max {
                Ordering::Greater
            } else {
                Ordering::Less
            };
            let nums: Vec<f64> = cells.iter().filter_map(|c| parse_number(c)).collect();
            if let Some(&first) = nums.first() {
                let best =
                    nums.iter()
                        .copied()
                        .fold(first, |acc, x| if x.partial_cmp(&acc) == Some(want) { x } else { acc });
                QueryResult::Scalar(Value::Number(best))
            } else {
                let texts: Vec<String> = cells.iter().map(|c| normalize_text(c)).collect();
                let best = texts
                    .into_iter()
                    .reduce(|acc, x| if x.cmp(&acc) == want { x } else { acc })
                    .ok_or(Error::EmptyAggregate)?;
                QueryResult::Scalar(Value::Text(best))
            }
        }
    };
    Ok(result)
}

pub fn numbers_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOLERANCE * 1f64.max(a.abs()).max(b.abs())
}

pub fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => numbers_close(*x, *y),
        (Value::Text(x), Value::Text(y)) => normalize_text(x) == normalize_text(y),
        _ => false,
    }
}

fn split_bag(bag: &[Value]) -> (Vec<f64>, Vec<String>) {
    let mut nums = Vec::new();
    let mut texts = Vec::new();
    for v in bag {
        match v {
            Value::Number(n) => nums.push(*n),
            Value::Text(t) => texts.push(normalize_text(t)),
        }
    }
    nums.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    texts.sort();
    (nums, texts)
}

/// Scalar results compare by value; bags compare as multisets under [`values_equal`].
pub fn results_equal(a: &QueryResult, b: &QueryResult) -> bool {
    match (a, b) {
        (QueryResult::Scalar(x), QueryResult::Scalar(y)) => values_equal(x, y),
        (QueryResult::Bag(xs), QueryResult::Bag(ys)) => {
            if xs.len() != ys.len() {
                return false;
            }
            let (xn, xt) = split_bag(xs);
            let (yn, yt) = split_bag(ys);
            xn.len() == yn.len() && xt == yt && xn.iter().zip(&yn).all(|(p, q)| numbers_close(*p, *q))
        }
        _ => false,
    }
}

/// Compares two execution outcomes; an empty-aggregate error only matches another one.
pub fn outcomes_equal(a: &Result<QueryResult>, b: &Result<QueryResult>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => results_equal(x, y),
        (Err(Error::EmptyAggregate), Err(Error::EmptyAggregate)) => true,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Condition as C, TableSchema};

    fn goals_table() -> Table {
        let schema = TableSchema {
            table_id: "t1".into(),
            headers: vec!["name".into(), "goals".into()],
            col_types: vec![ColumnType::Text, ColumnType::Real],
        };
        let rows = [("ada", "3"), ("bo", "7"), ("cy", "5")]
            .iter()
            .map(|(a, b)| vec![a.to_string(), b.to_string()])
            .collect();
        Table::new(schema, rows).unwrap()
    }

    fn text(s: &str) -> Value {
        Value::Text(s.into())
    }

    #[test]
    fn canonicalize_sorts_conditions() {
        let s = QuerySketch::new(0, Agg::None, vec![]);
        assert_eq!(canonicalize(&s), s);
        let s = QuerySketch::new(1, Agg::Max, vec![C::new(2, Op::Eq, "b"), C::new(0, Op::Gt, "5")]);
        let c = canonicalize(&s);
        assert_eq!(c.conds, vec![C::new(0, Op::Gt, "5"), C::new(2, Op::Eq, "b")]);
        assert_eq!((c.sel, c.agg), (1, Agg::Max));
        assert_eq!(canonicalize(&c), c);
    }

    #[test]
    fn render_examples() {
        let one = TableSchema {
            table_id: "t1".into(),
            headers: vec!["name".into()],
            col_types: vec![ColumnType::Text],
        };
        assert_eq!(
            render_sql(&QuerySketch::new(0, Agg::None, vec![]), &one).unwrap(),
            r#"SELECT "name" FROM t1"#
        );
        let schema = goals_table().schema;
        assert_eq!(
            render_sql(
                &QuerySketch::new(1, Agg::Count, vec![C::new(0, Op::Eq, "ada")]),
                &schema
            )
            .unwrap(),
            r#"SELECT COUNT("goals") FROM t1 WHERE "name" = 'ada'"#
        );
        assert_eq!(
            render_sql(
                &QuerySketch::new(0, Agg::Max, vec![C::new(1, Op::Gt, "5"), C::new(1, Op::Lt, "9")]),
                &schema
            )
            .unwrap(),
            r#"SELECT MAX("name") FROM t1 WHERE "goals" > 5 AND "goals" < 9"#
        );
        assert_eq!(
            render_sql(
                &QuerySketch::new(0, Agg::None, vec![C::new(0, Op::Eq, "o'neil")]),
                &schema
            )
            .unwrap(),
            r#"SELECT "name" FROM t1 WHERE "name" = 'o''neil'"#
        );
        assert!(matches!(
            render_sql(&QuerySketch::new(3, Agg::None, vec![]), &schema),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn coerce_examples() {
        assert_eq!(coerce("3.50", ColumnType::Real), Value::Number(3.5));
        assert_eq!(coerce("  Ada ", ColumnType::Text), text("ada"));
        assert_eq!(coerce("n/a", ColumnType::Real), text("n/a"));
        assert_eq!(coerce("NaN", ColumnType::Real), text("nan"));
        assert_eq!(coerce("inf", ColumnType::Real), text("inf"));
        assert_eq!(coerce("12", ColumnType::Text), text("12"));
    }

    #[test]
    fn execute_examples() {
        let t = goals_table();
        let r = execute(&QuerySketch::new(0, Agg::Count, vec![C::new(0, Op::Eq, "zed")]), &t).unwrap();
        assert_eq!(r, QueryResult::Scalar(Value::Number(0.0)));

        let r = execute(&QuerySketch::new(0, Agg::None, vec![C::new(1, Op::Gt, "4")]), &t).unwrap();
        assert!(results_equal(&r, &QueryResult::Bag(vec![text("bo"), text("cy")])));

        let r = execute(&QuerySketch::new(1, Agg::Max, vec![]), &t).unwrap();
        assert_eq!(r, QueryResult::Scalar(Value::Number(7.0)));
    }

    #[test]
    fn text_equality_ignores_case_and_padding() {
        let t = goals_table();
        let r = execute(&QuerySketch::new(1, Agg::None, vec![C::new(0, Op::Eq, " BO ")]), &t).unwrap();
        assert_eq!(r, QueryResult::Bag(vec![Value::Number(7.0)]));
    }

    #[test]
    fn empty_aggregates_are_errors() {
        let t = goals_table();
        for agg in [Agg::Max, Agg::Min, Agg::Sum, Agg::Avg] {
            let r = execute(&QuerySketch::new(1, agg, vec![C::new(0, Op::Eq, "zed")]), &t);
            assert!(matches!(r, Err(Error::EmptyAggregate)), "{agg:?}");
        }
        // text column: SUM has no usable cells, MAX falls back to text ordering
        assert!(matches!(
            execute(&QuerySketch::new(0, Agg::Sum, vec![]), &t),
            Err(Error::EmptyAggregate)
        ));
        assert_eq!(
            execute(&QuerySketch::new(0, Agg::Max, vec![]), &t).unwrap(),
            QueryResult::Scalar(text("cy"))
        );
    }

    #[test]
    fn min_max_ignore_text_when_numbers_present() {
        let schema = TableSchema {
            table_id: "m".into(),
            headers: vec!["x".into()],
            col_types: vec![ColumnType::Real],
        };
        let rows = ["4", "n/a", "-2", "zz"].iter().map(|c| vec![c.to_string()]).collect();
        let t = Table::new(schema, rows).unwrap();
        assert_eq!(
            execute(&QuerySketch::new(0, Agg::Min, vec![]), &t).unwrap(),
            QueryResult::Scalar(Value::Number(-2.0))
        );
        assert_eq!(
            execute(&QuerySketch::new(0, Agg::Max, vec![]), &t).unwrap(),
            QueryResult::Scalar(Value::Number(4.0))
        );
        assert_eq!(
            execute(&QuerySketch::new(0, Agg::Avg, vec![]), &t).unwrap(),
            QueryResult::Scalar(Value::Number(1.0))
        );
    }

    #[test]
    fn comparison_falls_back_to_text() {
        let c = C::new(0, Op::Gt, "m");
        assert!(condition_holds("Zed", &c));
        assert!(!condition_holds("ada", &c));
        // numeric when both sides parse, regardless of textual order
        assert!(condition_holds("10", &C::new(0, Op::Gt, "9")));
        assert!(condition_holds("10", &C::new(0, Op::Lt, "9x")));
    }

    #[test]
    fn results_equal_examples() {
        let a = QueryResult::Scalar(Value::Number(1.0));
        assert!(results_equal(&a, &a));
        assert!(results_equal(&a, &QueryResult::Scalar(Value::Number(1.0 + 1e-9))));
        assert!(!results_equal(&a, &QueryResult::Scalar(Value::Number(1.01))));
        let b1 = QueryResult::Bag(vec![text("bo"), text("cy")]);
        let b2 = QueryResult::Bag(vec![text("cy"), text("bo")]);
        assert!(results_equal(&b1, &b2));
        assert!(!results_equal(&b1, &QueryResult::Bag(vec![text("bo"), text("bo")])));
        assert!(!results_equal(&QueryResult::Bag(vec![Value::Number(1.0)]), &a));
        assert!(!results_equal(&QueryResult::Scalar(text("1")), &a));
        assert!(results_equal(&QueryResult::Bag(vec![]), &QueryResult::Bag(vec![])));
    }

    #[test]
    fn literal_equality_is_numeric_when_possible() {
        assert!(literals_equal("5", "5.0"));
        assert!(literals_equal(" Ada", "ada "));
        assert!(!literals_equal("5", "five"));
        assert_eq!(literal_key("5.0"), "5");
        assert_eq!(literal_key(" Ada "), "ada");
    }
}

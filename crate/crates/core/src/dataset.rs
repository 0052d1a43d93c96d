//! Example and table ingestion for the WikiSQL JSON-lines distribution, question
//! normalization, structural validation and corpus statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::balance;
use crate::error::{Error, Result};
use crate::sqlexec;

/// The dataset allows at most this many AND-joined conditions.
pub const MAX_CONDS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Real,
}

impl ColumnType {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Real => "real",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub table_id: String,
    pub headers: Vec<String>,
    pub col_types: Vec<ColumnType>,
}

impl TableSchema {
    pub fn num_columns(&self) -> usize {
        self.headers.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub schema: TableSchema,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Builds a table, checking the row-width and header invariants.
    pub fn new(schema: TableSchema, rows: Vec<Vec<String>>) -> Result<Self> {
        let table = Table { schema, rows };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.schema;
        if s.table_id.is_empty() {
            return Err(Error::Structure("empty table id".into()));
        }
        if s.headers.is_empty() || s.headers.len() != s.col_types.len() {
            return Err(Error::Structure(format!(
                "table {}: {} headers vs {} column types",
                s.table_id,
                s.headers.len(),
                s.col_types.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != s.headers.len() {
                return Err(Error::Structure(format!(
                    "table {}: row {} has {} cells, expected {}",
                    s.table_id,
                    i,
                    row.len(),
                    s.headers.len()
                )));
            }
        }
        Ok(())
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = &str> + '_ {
        self.rows.iter().map(move |r| r[col].as_str())
    }
}

pub type TableMap = BTreeMap<String, Table>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Op {
    Eq,
    Gt,
    Lt,
}

impl Op {
    pub const ALL: [Op; 3] = [Op::Eq, Op::Gt, Op::Lt];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Op> {
        Op::ALL.get(code).copied()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Gt => ">",
            Op::Lt => "<",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Eq => "EQ",
            Op::Gt => "GT",
            Op::Lt => "LT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Agg {
    None,
    Max,
    Min,
    Count,
    Sum,
    Avg,
}

impl Agg {
    pub const ALL: [Agg; 6] = [Agg::None, Agg::Max, Agg::Min, Agg::Count, Agg::Sum, Agg::Avg];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Agg> {
        Agg::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Agg::None => "NONE",
            Agg::Max => "MAX",
            Agg::Min => "MIN",
            Agg::Count => "COUNT",
            Agg::Sum => "SUM",
            Agg::Avg => "AVG",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub col: usize,
    pub op: Op,
    pub value: String,
}

impl Condition {
    pub fn new(col: usize, op: Op, value: impl Into<String>) -> Self {
        Condition {
            col,
            op,
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuerySketch {
    pub sel: usize,
    pub agg: Agg,
    pub conds: Vec<Condition>,
}

impl QuerySketch {
    pub fn new(sel: usize, agg: Agg, conds: Vec<Condition>) -> Self {
        QuerySketch { sel, agg, conds }
    }

    /// Checks column indices, condition count and enum ranges against a schema.
    pub fn validate(&self, schema: &TableSchema) -> Result<()> {
        let n = schema.num_columns();
        if self.sel >= n {
            return Err(Error::Structure(format!(
                "sel column {} out of range for table {} ({} columns)",
                self.sel, schema.table_id, n
            )));
        }
        if self.conds.len() > MAX_CONDS {
            return Err(Error::Structure(format!(
                "{} conditions exceeds the maximum of {}",
                self.conds.len(),
                MAX_CONDS
            )));
        }
        for c in &self.conds {
            if c.col >= n {
                return Err(Error::Structure(format!(
                    "condition column {} out of range for table {} ({} columns)",
                    c.col, schema.table_id, n
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub question_raw: String,
    pub question_tokens: Vec<String>,
    pub table_id: String,
    pub gold: QuerySketch,
    pub split: Split,
}

impl Example {
    pub fn new(question: impl Into<String>, table_id: impl Into<String>, gold: QuerySketch, split: Split) -> Self {
        let question_raw = question.into();
        Example {
            question_tokens: normalize_question(&question_raw),
            question_raw,
            table_id: table_id.into(),
            gold,
            split,
        }
    }
}

/// Examples plus the tables they reference. Tables are shared between subsets.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub tables: Arc<TableMap>,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(tables: Arc<TableMap>, examples: Vec<Example>) -> Result<Self> {
        let ds = Dataset { tables, examples };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn table(&self, id: &str) -> Option<&Table> {
        self.tables.get(id)
    }

    pub fn table_of(&self, ex: &Example) -> &Table {
        self.tables
            .get(&ex.table_id)
            .expect("validated dataset resolves every table")
    }

    /// New dataset holding the examples at `indices`, sharing this dataset's tables.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            tables: Arc::clone(&self.tables),
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }

    pub fn with_examples(&self, examples: Vec<Example>) -> Dataset {
        Dataset {
            tables: Arc::clone(&self.tables),
            examples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, ex) in self.examples.iter().enumerate() {
            let table = self.tables.get(&ex.table_id).ok_or_else(|| Error::UnknownTable {
                example: i,
                line: i + 1,
                table_id: ex.table_id.clone(),
            })?;
            ex.gold
                .validate(&table.schema)
                .map_err(|e| Error::Structure(format!("example {i}: {e}")))?;
        }
        Ok(())
    }
}

/// Lowercases, drops everything but letters, digits, whitespace and decimal points that sit
/// between two digits, then splits on whitespace.
pub fn normalize_question(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut kept = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            kept.extend(c.to_lowercase());
        } else if c.is_whitespace() {
            kept.push(' ');
        } else if c == '.'
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
        {
            kept.push('.');
        }
    }
    kept.split_whitespace().map(str::to_owned).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SqlRecord {
    sel: usize,
    agg: usize,
    conds: Vec<(usize, usize, Json)>,
}

#[derive(Debug, Deserialize)]
struct ExampleRecord {
    question: String,
    table_id: String,
    sql: SqlRecord,
}

#[derive(Debug, Serialize)]
struct ExampleRecordOut<'a> {
    question: &'a str,
    table_id: &'a str,
    sql: SqlRecord,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRecord {
    id: String,
    header: Vec<String>,
    types: Vec<String>,
    rows: Vec<Vec<Json>>,
}

fn literal(v: &Json) -> Option<String> {
    match v {
        Json::String(s) => Some(s.clone()),
        Json::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Reads non-blank lines as `(line_number, text)`, 1-based.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_table_line(path: &Path, line_no: usize, line: &str) -> Result<Table> {
    let malformed = |message: String| Error::MalformedLine {
        path: path.to_path_buf(),
        line: line_no,
        message,
    };
    let rec: TableRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let col_types = rec
        .types
        .iter()
        .map(|t| match t.as_str() {
            "text" => Ok(ColumnType::Text),
            "real" => Ok(ColumnType::Real),
            other => Err(malformed(format!("unknown column type `{other}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = rec
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|c| literal(c).ok_or_else(|| malformed(format!("cell {c} is not a string or number"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let schema = TableSchema {
        table_id: rec.id,
        headers: rec.header,
        col_types,
    };
    Table::new(schema, rows).map_err(|e| malformed(e.to_string()))
}

pub fn load_tables(path: impl AsRef<Path>) -> Result<TableMap> {
    let path = path.as_ref();
    let mut tables = TableMap::new();
    for (line_no, line) in read_lines(path)? {
        let table = parse_table_line(path, line_no, &line)?;
        let id = table.schema.table_id.clone();
        if tables.insert(id.clone(), table).is_some() {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("duplicate table id `{id}`"),
            });
        }
    }
    Ok(tables)
}

fn parse_example_line(path: &Path, line_no: usize, line: &str, split: Split) -> Result<Example> {
    let malformed = |message: String| Error::MalformedLine {
        path: path.to_path_buf(),
        line: line_no,
        message,
    };
    let rec: ExampleRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let agg = Agg::from_code(rec.sql.agg)
        .ok_or_else(|| malformed(format!("aggregator code {} out of range", rec.sql.agg)))?;
    let conds = rec
        .sql
        .conds
        .iter()
        .map(|(col, op, value)| {
            let op = Op::from_code(*op).ok_or_else(|| malformed(format!("operator code {op} out of range")))?;
            let value = literal(value)
                .ok_or_else(|| malformed(format!("condition value {value} is not a string or number")))?;
            Ok(Condition::new(*col, op, value))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Example::new(
        rec.question,
        rec.table_id,
        QuerySketch::new(rec.sql.sel, agg, conds),
        split,
    ))
}

/// Loads examples against an already loaded table map.
pub fn load_examples(path: impl AsRef<Path>, tables: Arc<TableMap>, split: Split) -> Result<Dataset> {
    let path = path.as_ref();
    let mut examples = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let ex = parse_example_line(path, line_no, &line, split)?;
        let index = examples.len();
        let table = tables.get(&ex.table_id).ok_or_else(|| Error::UnknownTable {
            example: index,
            line: line_no,
            table_id: ex.table_id.clone(),
        })?;
        ex.gold
            .validate(&table.schema)
            .map_err(|e| Error::Structure(format!("{}:{}: {}", path.display(), line_no, e)))?;
        examples.push(ex);
    }
    Ok(Dataset { tables, examples })
}

/// Loads one split from an examples file and its tables file.
pub fn load_dataset(examples_path: impl AsRef<Path>, tables_path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let tables = Arc::new(load_tables(tables_path)?);
    load_examples(examples_path, tables, split)
}

fn sql_record(sketch: &QuerySketch) -> SqlRecord {
    SqlRecord {
        sel: sketch.sel,
        agg: sketch.agg.code(),
        conds: sketch
            .conds
            .iter()
            .map(|c| (c.col, c.op.code(), Json::String(c.value.clone())))
            .collect(),
    }
}

/// Serializes one example as a record line (no trailing newline).
pub fn example_to_line(ex: &Example) -> String {
    let rec = ExampleRecordOut {
        question: &ex.question_raw,
        table_id: &ex.table_id,
        sql: sql_record(&ex.gold),
    };
    serde_json::to_string(&rec).expect("example records always serialize")
}

pub fn sketch_to_json(sketch: &QuerySketch) -> Json {
    serde_json::to_value(sql_record(sketch)).expect("sketches always serialize")
}

/// Parses a `{sel, agg, conds}` object in the dataset's integer encodings.
pub fn sketch_from_json(value: &Json) -> Result<QuerySketch> {
    let rec: SqlRecord = serde_json::from_value(value.clone()).map_err(|e| Error::Structure(e.to_string()))?;
    let agg =
        Agg::from_code(rec.agg).ok_or_else(|| Error::Structure(format!("aggregator code {} out of range", rec.agg)))?;
    let conds = rec
        .conds
        .iter()
        .map(|(col, op, v)| {
            let op = Op::from_code(*op).ok_or_else(|| Error::Structure(format!("operator code {op} out of range")))?;
            let v =
                literal(v).ok_or_else(|| Error::Structure(format!("condition value {v} is not a string or number")))?;
            Ok(Condition::new(*col, op, v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuerySketch::new(rec.sel, agg, conds))
}

pub fn table_to_line(table: &Table) -> String {
    let rec = TableRecord {
        id: table.schema.table_id.clone(),
        header: table.schema.headers.clone(),
        types: table.schema.col_types.iter().map(|t| t.as_str().to_owned()).collect(),
        rows: table
            .rows
            .iter()
            .map(|r| r.iter().map(|c| Json::String(c.clone())).collect())
            .collect(),
    };
    serde_json::to_string(&rec).expect("table records always serialize")
}

pub fn write_examples<'a>(mut w: impl Write, examples: impl IntoIterator<Item = &'a Example>) -> std::io::Result<()> {
    for ex in examples {
        writeln!(w, "{}", example_to_line(ex))?;
    }
    Ok(())
}

pub fn write_tables<'a>(mut w: impl Write, tables: impl IntoIterator<Item = &'a Table>) -> std::io::Result<()> {
    for t in tables {
        writeln!(w, "{}", table_to_line(t))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub example_count: usize,
    pub split_counts: BTreeMap<Split, usize>,
    pub question_len_hist: BTreeMap<usize, usize>,
    pub sql_len_hist: BTreeMap<usize, usize>,
    pub agg_hist: BTreeMap<Agg, usize>,
    pub cond_count_hist: BTreeMap<usize, usize>,
    /// Counts conditions, not examples: sums to the total condition count.
    pub op_hist: BTreeMap<Op, usize>,
    pub domain_specific_count: usize,
    pub domain_specific_fraction: f64,
}

impl DatasetStats {
    pub fn single_condition_share(&self) -> f64 {
        if self.example_count == 0 {
            return 0.0;
        }
        *self.cond_count_hist.get(&1).unwrap_or(&0) as f64 / self.example_count as f64
    }
}

pub fn compute_stats(dataset: &Dataset) -> DatasetStats {
    let mut stats = DatasetStats {
        example_count: dataset.len(),
        split_counts: BTreeMap::new(),
        question_len_hist: BTreeMap::new(),
        sql_len_hist: BTreeMap::new(),
        agg_hist: BTreeMap::new(),
        cond_count_hist: BTreeMap::new(),
        op_hist: BTreeMap::new(),
        domain_specific_count: 0,
        domain_specific_fraction: 0.0,
    };
    for ex in &dataset.examples {
        let table = dataset.table_of(ex);
        *stats.split_counts.entry(ex.split).or_default() += 1;
        *stats.question_len_hist.entry(ex.question_tokens.len()).or_default() += 1;
        let sql = sqlexec::render_sql(&ex.gold, &table.schema).expect("validated sketch renders");
        *stats.sql_len_hist.entry(sql.split_whitespace().count()).or_default() += 1;
        *stats.agg_hist.entry(ex.gold.agg).or_default() += 1;
        *stats.cond_count_hist.entry(ex.gold.conds.len()).or_default() += 1;
        for c in &ex.gold.conds {
            *stats.op_hist.entry(c.op).or_default() += 1;
        }
        if balance::is_domain_specific(ex) {
            stats.domain_specific_count += 1;
        }
    }
    if stats.example_count > 0 {
        stats.domain_specific_fraction = stats.domain_specific_count as f64 / stats.example_count as f64;
    }
    stats
}

/// Table ids that appear in more than one place; used by callers merging table files.
pub fn duplicate_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for id in ids {
        if !seen.insert(id) {
            dups.push(id.to_owned());
        }
    }
    dups
}

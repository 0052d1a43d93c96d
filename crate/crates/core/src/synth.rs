//! Seeded generator of WikiSQL-shaped corpora: small single-table domains, templated
//! questions and gold sketches with a controllable share of comparison (`>`/`<`) questions.
//! Used for the bundled fixture corpus and for desk-scale experiments.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    Agg, ColumnType, Condition, Dataset, Example, Op, QuerySketch, Split, Table, TableMap, TableSchema,
};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub examples: usize,
    pub tables: usize,
    /// Probability that an example carries a `>` or `<` condition.
    pub domain_fraction: f64,
    pub seed: u64,
    pub split: Split,
    /// Prefix for generated table ids, so corpora generated for different splits never share tables.
    pub table_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            examples: 200,
            tables: 40,
            domain_fraction: 0.14,
            seed: 0,
            split: Split::Train,
            table_prefix: "syn".into(),
        }
    }
}

struct RealSpec {
    name: &'static str,
    lo: i64,
    hi: i64,
}

struct Domain {
    entity: &'static str,
    plural: &'static str,
    texts: &'static [(&'static str, &'static [&'static str])],
    reals: &'static [RealSpec],
}

const DOMAINS: &[Domain] = &[
    Domain {
        entity: "player",
        plural: "players",
        texts: &[
            (
                "club",
                &[
                    "red star",
                    "north united",
                    "river plate",
                    "athletic",
                    "rovers",
                    "blue city",
                    "harbour town",
                ],
            ),
            (
                "position",
                &["goalkeeper", "defender", "midfielder", "forward", "winger"],
            ),
            ("nationality", &["brazil", "norway", "ghana", "japan", "peru", "wales"]),
        ],
        reals: &[
            RealSpec {
                name: "goals",
                lo: 0,
                hi: 40,
            },
            RealSpec {
                name: "assists",
                lo: 0,
                hi: 25,
            },
            RealSpec {
                name: "appearances",
                lo: 1,
                hi: 60,
            },
            RealSpec {
                name: "age",
                lo: 17,
                hi: 39,
            },
        ],
    },
    Domain {
        entity: "film",
        plural: "films",
        texts: &[
            (
                "director",
                &["hale", "moreno", "okafor", "lindqvist", "tanaka", "duval"],
            ),
            (
                "genre",
                &["drama", "comedy", "horror", "thriller", "western", "musical"],
            ),
            ("studio", &["silver lake", "paragon", "northlight", "carousel"]),
        ],
        reals: &[
            RealSpec {
                name: "year",
                lo: 1950,
                hi: 2020,
            },
            RealSpec {
                name: "gross",
                lo: 1,
                hi: 900,
            },
            RealSpec {
                name: "rating",
                lo: 1,
                hi: 10,
            },
            RealSpec {
                name: "runtime",
                lo: 70,
                hi: 200,
            },
        ],
    },
    Domain {
        entity: "candidate",
        plural: "candidates",
        texts: &[
            ("party", &["labour", "green", "liberal", "conservative", "independent"]),
            (
                "district",
                &["east end", "hillside", "lowmoor", "kingsbay", "westfield"],
            ),
        ],
        reals: &[
            RealSpec {
                name: "votes",
                lo: 100,
                hi: 90000,
            },
            RealSpec {
                name: "percentage",
                lo: 1,
                hi: 80,
            },
            RealSpec {
                name: "seats",
                lo: 0,
                hi: 120,
            },
        ],
    },
    Domain {
        entity: "city",
        plural: "cities",
        texts: &[
            ("country", &["chile", "kenya", "poland", "vietnam", "canada", "egypt"]),
            ("region", &["north", "south", "coast", "highlands", "delta"]),
        ],
        reals: &[
            RealSpec {
                name: "population",
                lo: 1000,
                hi: 5000000,
            },
            RealSpec {
                name: "area",
                lo: 5,
                hi: 3000,
            },
            RealSpec {
                name: "elevation",
                lo: 0,
                hi: 4000,
            },
            RealSpec {
                name: "founded",
                lo: 800,
                hi: 1950,
            },
        ],
    },
    Domain {
        entity: "driver",
        plural: "drivers",
        texts: &[
            (
                "team",
                &["falcon", "vortex racing", "silverline", "apex", "redline motors"],
            ),
            ("engine", &["turbo", "hybrid", "electric", "diesel"]),
        ],
        reals: &[
            RealSpec {
                name: "laps",
                lo: 1,
                hi: 78,
            },
            RealSpec {
                name: "grid",
                lo: 1,
                hi: 24,
            },
            RealSpec {
                name: "points",
                lo: 0,
                hi: 400,
            },
            RealSpec {
                name: "wins",
                lo: 0,
                hi: 15,
            },
        ],
    },
    Domain {
        entity: "album",
        plural: "albums",
        texts: &[
            (
                "artist",
                &["the lanterns", "mira vale", "echo park", "dusty roads", "kilo"],
            ),
            ("label", &["sunrise", "blackgate", "polar", "indigo"]),
            ("format", &["cd", "vinyl", "cassette", "digital"]),
        ],
        reals: &[
            RealSpec {
                name: "year",
                lo: 1960,
                hi: 2022,
            },
            RealSpec {
                name: "sales",
                lo: 1000,
                hi: 900000,
            },
            RealSpec {
                name: "weeks",
                lo: 1,
                hi: 80,
            },
            RealSpec {
                name: "peak",
                lo: 1,
                hi: 100,
            },
        ],
    },
];

const SYLLABLES: &[&str] = &[
    "ka", "ro", "vin", "tel", "mar", "lo", "sa", "dri", "pe", "tu", "ber", "gi", "zo", "li", "ven", "ost", "ra", "qui",
    "do", "fen",
];

const GT_PHRASES: &[&str] = &[
    "more than",
    "bigger than",
    "larger than",
    "greater than",
    "higher than",
    "over",
    "above",
];
const LT_PHRASES: &[&str] = &[
    "less than",
    "smaller than",
    "fewer than",
    "lower than",
    "under",
    "below",
];

struct GeneratedTable {
    table: Table,
    domain: usize,
}

fn entity_name(rng: &mut ChaCha8Rng) -> String {
    let word = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(2..=3);
        (0..n)
            .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
            .collect::<String>()
    };
    if rng.gen_bool(0.5) {
        format!("{} {}", word(rng), word(rng))
    } else {
        word(rng)
    }
}

fn gen_table(rng: &mut ChaCha8Rng, id: String) -> GeneratedTable {
    let domain = rng.gen_range(0..DOMAINS.len());
    let d = &DOMAINS[domain];
    let n_text = rng.gen_range(1..=d.texts.len().min(2));
    let n_real = rng.gen_range(2..=d.reals.len().min(3));
    let mut texts: Vec<usize> = (0..d.texts.len()).collect();
    texts.shuffle(rng);
    texts.truncate(n_text);
    let mut reals: Vec<usize> = (0..d.reals.len()).collect();
    reals.shuffle(rng);
    reals.truncate(n_real);

    // entity first, the rest shuffled
    let mut others: Vec<(bool, usize)> = texts
        .iter()
        .map(|&t| (true, t))
        .chain(reals.iter().map(|&r| (false, r)))
        .collect();
    others.shuffle(rng);
    let mut headers = vec![d.entity.to_string()];
    let mut types = vec![ColumnType::Text];
    for &(is_text, i) in &others {
        if is_text {
            headers.push(d.texts[i].0.to_string());
            types.push(ColumnType::Text);
        } else {
            headers.push(d.reals[i].name.to_string());
            types.push(ColumnType::Real);
        }
    }
    let n_rows = rng.gen_range(6..=14);
    let mut names: Vec<String> = Vec::new();
    while names.len() < n_rows {
        let name = entity_name(rng);
        if !names.contains(&name) {
            names.push(name);
        }
    }
    let rows = names
        .into_iter()
        .map(|name| {
            let mut row = vec![name];
            for &(is_text, i) in &others {
                if is_text {
                    row.push(d.texts[i].1.choose(rng).expect("non-empty").to_string());
                } else {
                    let spec = &d.reals[i];
                    row.push(rng.gen_range(spec.lo..=spec.hi).to_string());
                }
            }
            row
        })
        .collect();
    let schema = TableSchema {
        table_id: id,
        headers,
        col_types: types,
    };
    GeneratedTable {
        table: Table::new(schema, rows).expect("generated tables are well formed"),
        domain,
    }
}

fn pick_weighted<T: Copy>(rng: &mut ChaCha8Rng, items: &[(T, f64)]) -> T {
    let total: f64 = items.iter().map(|i| i.1).sum();
    let mut x = rng.gen_range(0.0..total);
    for &(item, w) in items {
        if x < w {
            return item;
        }
        x -= w;
    }
    items[items.len() - 1].0
}

fn sel_phrase(rng: &mut ChaCha8Rng, agg: Agg, col: &str, entity: Option<&str>) -> String {
    let pick = |rng: &mut ChaCha8Rng, opts: &[String]| opts.choose(rng).expect("non-empty").clone();
    match agg {
        Agg::None => match entity {
            Some(_) => pick(
                rng,
                &[format!("which {col}"), format!("name the {col}"), format!("what {col}")],
            ),
            None => pick(
                rng,
                &[
                    format!("what is the {col}"),
                    format!("name the {col}"),
                    format!("what {col}"),
                ],
            ),
        },
        Agg::Count => match entity {
            Some(plural) => pick(
                rng,
                &[format!("how many {plural}"), format!("what is the number of {plural}")],
            ),
            None => pick(rng, &[format!("how many {col}"), format!("what is the count of {col}")]),
        },
        Agg::Sum => pick(
            rng,
            &[
                format!("what is the total {col}"),
                format!("total {col}"),
                format!("what is the sum of {col}"),
            ],
        ),
        Agg::Avg => pick(
            rng,
            &[
                format!("what is the average {col}"),
                format!("average {col}"),
                format!("what is the mean {col}"),
            ],
        ),
        Agg::Min => pick(
            rng,
            &[
                format!("what is the lowest {col}"),
                format!("what is the smallest {col}"),
                format!("minimum {col}"),
            ],
        ),
        Agg::Max => pick(
            rng,
            &[
                format!("what is the highest {col}"),
                format!("what is the largest {col}"),
                format!("maximum {col}"),
            ],
        ),
    }
}

fn cond_phrase(rng: &mut ChaCha8Rng, col: &str, op: Op, value: &str, is_text: bool) -> String {
    let opts: Vec<String> = match op {
        Op::Eq if is_text => vec![
            format!("when {col} is {value}"),
            format!("with {col} {value}"),
            format!("for {value}"),
            format!("where the {col} is {value}"),
            format!("that has {col} of {value}"),
        ],
        Op::Eq => vec![
            format!("when {col} is {value}"),
            format!("with {value} {col}"),
            format!("where {col} equals {value}"),
        ],
        Op::Gt | Op::Lt => {
            let phrases = if op == Op::Gt { GT_PHRASES } else { LT_PHRASES };
            let p = phrases.choose(rng).expect("non-empty");
            vec![
                format!("when {col} is {p} {value}"),
                format!("with {p} {value} {col}"),
                format!("where {col} is {p} {value}"),
                format!("having {col} {p} {value}"),
            ]
        }
    };
    opts.choose(rng).expect("non-empty").clone()
}

fn gen_example(rng: &mut ChaCha8Rng, gt: &GeneratedTable, domain_specific: bool, split: Split) -> Option<Example> {
    let table = &gt.table;
    let d = &DOMAINS[gt.domain];
    let schema = &table.schema;
    let ncols = schema.num_columns();
    let real_cols: Vec<usize> = (0..ncols)
        .filter(|&c| schema.col_types[c] == ColumnType::Real)
        .collect();

    let agg = pick_weighted(
        rng,
        &[
            (Agg::None, 0.70),
            (Agg::Count, 0.10),
            (Agg::Max, 0.05),
            (Agg::Min, 0.05),
            (Agg::Sum, 0.04),
            (Agg::Avg, 0.06),
        ],
    );
    let sel = match agg {
        Agg::None => rng.gen_range(0..ncols),
        Agg::Count => {
            if rng.gen_bool(0.7) {
                0
            } else {
                rng.gen_range(0..ncols)
            }
        }
        _ => *real_cols.choose(rng)?,
    };
    let n_conds = pick_weighted(rng, &[(1usize, 0.66), (2, 0.24), (3, 0.08), (4, 0.02)]).min(ncols - 1);
    let mut pool: Vec<usize> = (0..ncols).filter(|&c| c != sel).collect();
    pool.shuffle(rng);
    let mut cond_cols: Vec<usize> = pool.into_iter().take(n_conds).collect();
    let comparison_col = if domain_specific {
        let candidates: Vec<usize> = real_cols.iter().copied().filter(|&c| c != sel).collect();
        let c = *candidates.choose(rng)?;
        if !cond_cols.contains(&c) {
            if cond_cols.is_empty() {
                cond_cols.push(c);
            } else {
                let i = rng.gen_range(0..cond_cols.len());
                cond_cols[i] = c;
            }
        }
        Some(c)
    } else {
        None
    };

    let anchor = &table.rows[rng.gen_range(0..table.rows.len())];
    let mut conds = Vec::new();
    let mut phrases = Vec::new();
    for &c in &cond_cols {
        let is_text = schema.col_types[c] == ColumnType::Text;
        let (op, value) = if Some(c) == comparison_col {
            let anchor_value: i64 = anchor[c].parse().ok()?;
            let spec = d.reals.iter().find(|r| r.name == schema.headers[c])?;
            let span = ((spec.hi - spec.lo) / 4).max(1);
            let delta = rng.gen_range(1..=span);
            if rng.gen_bool(0.5) {
                (Op::Gt, (anchor_value - delta).to_string())
            } else {
                (Op::Lt, (anchor_value + delta).to_string())
            }
        } else {
            (Op::Eq, anchor[c].clone())
        };
        let entity_text = c == 0 && op == Op::Eq;
        phrases.push(if entity_text && rng.gen_bool(0.5) {
            format!("for {value}")
        } else {
            cond_phrase(rng, &schema.headers[c], op, &value, is_text)
        });
        conds.push(Condition::new(c, op, value));
    }

    let entity = if sel == 0 { Some(d.plural) } else { None };
    let head = sel_phrase(
        rng,
        agg,
        &schema.headers[sel],
        if agg == Agg::Count {
            entity
        } else {
            entity.map(|_| d.entity)
        },
    );
    let mut q = head;
    for (i, p) in phrases.iter().enumerate() {
        q.push_str(if i == 0 { " " } else { " and " });
        q.push_str(p);
    }
    if rng.gen_bool(0.7) {
        q.push('?');
    }
    let mut chars = q.chars();
    let q = match chars.next() {
        Some(f) => f.to_uppercase().chain(chars).collect(),
        None => q,
    };
    Some(Example::new(
        q,
        schema.table_id.clone(),
        QuerySketch::new(sel, agg, conds),
        split,
    ))
}

/// Generates a corpus deterministically from `config`.
pub fn generate(config: &SynthConfig) -> Dataset {
    let mut rng = seed::rng(seed::derive(config.seed, "synth"));
    let n_tables = config.tables.max(1);
    let tables: Vec<GeneratedTable> = (0..n_tables)
        .map(|i| gen_table(&mut rng, format!("{}-{:05}", config.table_prefix, i)))
        .collect();
    let mut examples = Vec::with_capacity(config.examples);
    while examples.len() < config.examples {
        let gt = &tables[rng.gen_range(0..tables.len())];
        let domain = rng.gen_bool(config.domain_fraction.clamp(0.0, 1.0));
        if let Some(ex) = gen_example(&mut rng, gt, domain, config.split) {
            examples.push(ex);
        }
    }
    let map: TableMap = tables
        .into_iter()
        .map(|g| (g.table.schema.table_id.clone(), g.table))
        .collect::<BTreeMap<_, _>>();
    Dataset::new(Arc::new(map), examples).expect("generated examples are valid")
}

/// Train and test corpora over disjoint table pools.
pub fn generate_splits(train: usize, test: usize, domain_fraction: f64, seed_value: u64) -> (Dataset, Dataset) {
    let tables_for = |n: usize| (n / 10).clamp(10, 2000);
    let train_ds = generate(&SynthConfig {
        examples: train,
        tables: tables_for(train),
        domain_fraction,
        seed: seed::derive(seed_value, "synth-train"),
        split: Split::Train,
        table_prefix: "syn-train".into(),
    });
    let test_ds = generate(&SynthConfig {
        examples: test,
        tables: tables_for(test),
        domain_fraction,
        seed: seed::derive(seed_value, "synth-test"),
        split: Split::Test,
        table_prefix: "syn-test".into(),
    });
    (train_ds, test_ds)
}

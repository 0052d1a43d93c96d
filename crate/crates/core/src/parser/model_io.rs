//! Text model file: one JSON header line, then one `model class bucket weight-bits` line per
//! nonzero weight. Weights are written as the hex of their IEEE-754 bits so files round-trip
//! exactly.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::balance::{Lexicon, LexiconEntry};
use crate::dataset::Op;
use crate::error::{Error, Result};

use super::linear::LinearModel;
use super::{ParserConfig, SlotModels, TrainConfig};

pub const FORMAT: &str = "sqlbalance-slot-models";
pub const VERSION: u32 = 1;
pub const HASH_FUNCTION: &str = "fnv1a64";

#[derive(Debug, Serialize, Deserialize)]
struct PhraseRecord {
    phrase: String,
    op: Op,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    hash: String,
    hash_bits: u32,
    seed: u64,
    value_window: usize,
    lexicon: Vec<PhraseRecord>,
    config: TrainConfig,
}

fn named(models: &SlotModels) -> [(&'static str, &LinearModel); 3] {
    [("sel", &models.sel), ("agg", &models.agg), ("op", &models.op)]
}

pub fn write_models(mut w: impl Write, models: &SlotModels) -> std::io::Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        hash: HASH_FUNCTION.into(),
        hash_bits: models.parser.hash_bits,
        seed: models.train_config.seed,
        value_window: models.parser.value_window,
        lexicon: models
            .parser
            .lexicon
            .entries
            .iter()
            .map(|e| PhraseRecord {
                phrase: e.phrase.join(" "),
                op: e.op,
            })
            .collect(),
        config: models.train_config,
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for (name, model) in named(models) {
        for (class, bucket, weight) in model.nonzero() {
            writeln!(w, "{name} {class} {bucket} {:016x}", weight.to_bits())?;
        }
    }
    Ok(())
}

pub fn to_bytes(models: &SlotModels) -> Vec<u8> {
    let mut buf = Vec::new();
    write_models(&mut buf, models).expect("writing to memory cannot fail");
    buf
}

pub fn read_models(r: impl BufRead) -> Result<SlotModels> {
    let bad = |line: usize, msg: &str| Error::ModelFormat(format!("line {line}: {msg}"));
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::ModelFormat("empty model file".into()))?
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| bad(1, &e.to_string()))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad(
            1,
            &format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    if header.hash != HASH_FUNCTION {
        return Err(bad(1, &format!("unsupported hash function {}", header.hash)));
    }
    if header.hash_bits == 0 || header.hash_bits > 32 {
        return Err(bad(1, "hash_bits out of range"));
    }
    let parser = ParserConfig {
        hash_bits: header.hash_bits,
        value_window: header.value_window,
        lexicon: Lexicon {
            entries: header
                .lexicon
                .into_iter()
                .map(|p| LexiconEntry {
                    phrase: p.phrase.split_whitespace().map(str::to_owned).collect(),
                    op: p.op,
                })
                .collect(),
        },
    };
    let mut models = SlotModels::untrained(parser, header.config);
    let limit = 1u64 << header.hash_bits;
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| Error::ModelFormat(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [name, class, bucket, bits] = parts[..] else {
            return Err(bad(n, "expected 4 fields"));
        };
        let class: usize = class.parse().map_err(|_| bad(n, "bad class"))?;
        let bucket: u32 = bucket.parse().map_err(|_| bad(n, "bad bucket"))?;
        let weight = f64::from_bits(u64::from_str_radix(bits, 16).map_err(|_| bad(n, "bad weight"))?);
        if u64::from(bucket) >= limit {
            return Err(bad(n, "bucket outside hash space"));
        }
        if !weight.is_finite() {
            return Err(bad(n, "non-finite weight"));
        }
        let model = match name {
            "sel" => &mut models.sel,
            "agg" => &mut models.agg,
            "op" => &mut models.op,
            _ => return Err(bad(n, "unknown model name")),
        };
        if class >= model.classes() {
            return Err(bad(n, "class out of range"));
        }
        model.set_weight(class, bucket, weight);
    }
    Ok(models)
}

pub fn save(path: impl AsRef<Path>, models: &SlotModels) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(models)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<SlotModels> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_models(std::io::BufReader::new(f))
}

//! Sketch slot-filling baseline parser.
//!
//! A question is parsed by filling the fixed sketch `SELECT agg(sel) WHERE cond AND ...`:
//! conditions come from cell-value and comparison-phrase extraction, comparison operators are
//! re-decided by the operator classifier, the select column is ranked by a linear scorer and
//! the aggregator is a multinomial logistic classifier. All three models are trained jointly
//! by mini-batch Adam over hashed lexical features.

pub mod extract;
pub mod features;
pub mod linear;
pub mod link;
pub mod model_io;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::balance::{is_domain_specific, Lexicon, PhraseMatch};
use crate::dataset::{normalize_question, Agg, Dataset, Example, Op, QuerySketch, Table, TableMap, MAX_CONDS};
use crate::error::{Error, Result};
use crate::parallel::{self, Parallelism};
use crate::seed;

pub use extract::{extract_conditions, Candidate, DEFAULT_VALUE_WINDOW};
pub use features::{FeatureVector, DEFAULT_HASH_BITS};
pub use linear::{Adam, AdamParams, LinearModel};
pub use link::{link_schema, LinkKind, LinkSpan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 5,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    fn check(&self, min_epochs: usize) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.epochs < min_epochs {
            return Err(Error::Config(format!(
                "epochs must be >= {min_epochs}, got {}",
                self.epochs
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check(1)
    }

    fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Feature and extraction settings carried inside trained models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub hash_bits: u32,
    pub value_window: usize,
    pub lexicon: Lexicon,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            hash_bits: DEFAULT_HASH_BITS,
            value_window: DEFAULT_VALUE_WINDOW,
            lexicon: Lexicon::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotModels {
    pub sel: LinearModel,
    pub agg: LinearModel,
    pub op: LinearModel,
    pub parser: ParserConfig,
    /// Configuration of the most recent training run.
    pub train_config: TrainConfig,
}

impl SlotModels {
    pub fn untrained(parser: ParserConfig, train_config: TrainConfig) -> Self {
        SlotModels {
            sel: LinearModel::new(1),
            agg: LinearModel::new(Agg::ALL.len()),
            op: LinearModel::new(Op::ALL.len()),
            parser,
            train_config,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.sel.all_finite() && self.agg.all_finite() && self.op.all_finite()
    }
}

/// Per-epoch mean training loss (sum of the three models' batch-mean losses).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

/// Question analysis shared by training and prediction.
struct Analysis {
    links: Vec<LinkSpan>,
    phrases: Vec<PhraseMatch>,
    chosen: Vec<Candidate>,
}

fn analyze(tokens: &[String], table: &Table, parser: &ParserConfig) -> Analysis {
    let links = link_schema(tokens, &table.schema);
    let cands = extract_conditions(tokens, table, &links, &parser.lexicon, parser.value_window);
    let chosen = select_conditions(cands, &links);
    let phrases = parser.lexicon.find(tokens);
    Analysis { links, phrases, chosen }
}

fn candidate_score(c: &Candidate, links: &[LinkSpan]) -> f64 {
    let mut score = c.len as f64;
    if c.phrase.is_some() {
        score += 3.0;
    }
    if let Some(d) = links
        .iter()
        .filter(|l| l.col == c.cond.col)
        .map(|l| l.distance(c.start))
        .min()
    {
        score += 2.0 + 1.0 / (1.0 + d as f64);
    }
    score
}

/// Keeps at most four non-overlapping candidates, best score first, returned by position.
pub fn select_conditions(cands: Vec<Candidate>, links: &[LinkSpan]) -> Vec<Candidate> {
    let mut scored: Vec<(f64, Candidate)> = cands.into_iter().map(|c| (candidate_score(&c, links), c)).collect();
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.partial_cmp(sa)
            .expect("finite scores")
            .then(a.start.cmp(&b.start))
            .then(a.cond.col.cmp(&b.cond.col))
    });
    let mut kept: Vec<Candidate> = Vec::new();
    for (_, c) in scored {
        if kept.len() == MAX_CONDS {
            break;
        }
        let overlaps = kept
            .iter()
            .any(|k| c.start < k.start + k.len && k.start < c.start + c.len);
        if !overlaps {
            kept.push(c);
        }
    }
    kept.sort_by_key(|c| (c.start, c.cond.col));
    kept
}

struct Prepared {
    sel_x: Vec<FeatureVector>,
    sel_gold: usize,
    agg_x: FeatureVector,
    agg_gold: usize,
    ops: Vec<(FeatureVector, usize)>,
}

fn sel_vectors(tokens: &[String], table: &Table, a: &Analysis, bits: u32) -> Vec<FeatureVector> {
    let cond_cols: Vec<usize> = a.chosen.iter().map(|c| c.cond.col).collect();
    (0..table.schema.num_columns())
        .map(|col| features::sel_features(bits, tokens, &a.links, &table.schema, col, &cond_cols))
        .collect()
}

fn prepare(ex: &Example, table: &Table, parser: &ParserConfig) -> Prepared {
    let tokens = &ex.question_tokens;
    let bits = parser.hash_bits;
    let a = analyze(tokens, table, parser);
    let ops = ex
        .gold
        .conds
        .iter()
        .filter_map(|c| {
            let (pos, _) = extract::locate_value(tokens, &c.value)?;
            let phrase = extract::phrase_before(&a.phrases, pos, parser.value_window);
            let x = features::op_features(
                bits,
                tokens,
                pos,
                phrase.as_ref(),
                &parser.lexicon,
                table.schema.col_types[c.col],
            );
            Some((x, c.op.code()))
        })
        .collect();
    Prepared {
        sel_x: sel_vectors(tokens, table, &a, bits),
        sel_gold: ex.gold.sel,
        agg_x: features::agg_features(bits, tokens, &table.schema, ex.gold.sel),
        agg_gold: ex.gold.agg.code(),
        ops,
    }
}

fn check_gradient(grad: &linear::Gradient, model: &'static str, epoch: usize, batch: usize) -> Result<()> {
    if grad.values().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteGradient { model, epoch, batch })
    }
}

fn run_epochs(models: &mut SlotModels, data: &[Prepared], config: &TrainConfig) -> Result<TrainLog> {
    let params = config.adam();
    let mut adam_sel = Adam::new(params);
    let mut adam_agg = Adam::new(params);
    let mut adam_op = Adam::new(params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = seed::rng(seed::derive(config.seed, "train-order"));
    let mut log = TrainLog::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / chunk.len() as f64;
            let mut g_sel = linear::Gradient::new();
            let mut g_agg = linear::Gradient::new();
            let mut g_op = linear::Gradient::new();
            let mut loss = 0.0;
            let n_ops: usize = chunk.iter().map(|&i| data[i].ops.len()).sum();
            for &i in chunk {
                let p = &data[i];
                loss += scale * linear::ranking_loss(&models.sel, &p.sel_x, p.sel_gold, scale, &mut g_sel);
                loss += scale * linear::softmax_loss(&models.agg, &p.agg_x, p.agg_gold, scale, &mut g_agg);
                for (x, y) in &p.ops {
                    let s = 1.0 / n_ops as f64;
                    loss += s * linear::softmax_loss(&models.op, x, *y, s, &mut g_op);
                }
            }
            check_gradient(&g_sel, "sel", epoch, b)?;
            check_gradient(&g_agg, "agg", epoch, b)?;
            check_gradient(&g_op, "op", epoch, b)?;
            adam_sel.step(&mut models.sel, &g_sel);
            adam_agg.step(&mut models.agg, &g_agg);
            if !g_op.is_empty() {
                adam_op.step(&mut models.op, &g_op);
            }
            total += loss;
            batches += 1;
        }
        log.epoch_losses.push(total / batches.max(1) as f64);
    }
    models.train_config = *config;
    Ok(log)
}

fn prepare_all(examples: &[Example], tables: &TableMap, parser: &ParserConfig) -> Result<Vec<Prepared>> {
    for (i, ex) in examples.iter().enumerate() {
        let table = tables.get(&ex.table_id).ok_or_else(|| Error::UnknownTable {
            example: i,
            line: i + 1,
            table_id: ex.table_id.clone(),
        })?;
        ex.gold.validate(&table.schema)?;
    }
    Ok(parallel::map(Parallelism::default(), examples, |ex| {
        prepare(ex, &tables[&ex.table_id], parser)
    }))
}

/// Trains fresh models on `examples`; returns them with the per-epoch loss log.
pub fn train_with_log(
    examples: &[Example],
    tables: &TableMap,
    config: &TrainConfig,
    parser: &ParserConfig,
) -> Result<(SlotModels, TrainLog)> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let data = prepare_all(examples, tables, parser)?;
    let mut models = SlotModels::untrained(parser.clone(), *config);
    let log = run_epochs(&mut models, &data, config)?;
    Ok((models, log))
}

pub fn train(dataset: &Dataset, config: &TrainConfig, parser: &ParserConfig) -> Result<SlotModels> {
    train_with_log(&dataset.examples, &dataset.tables, config, parser).map(|(m, _)| m)
}

/// Indices of the domain-specific examples picked for fine-tuning.
pub fn finetune_subset(dataset: &Dataset, subset_fraction: f64, seed_value: u64) -> Result<Vec<usize>> {
    if !(subset_fraction > 0.0 && subset_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "subset fraction must be in (0, 1], got {subset_fraction}"
        )));
    }
    let mut slice: Vec<usize> = (0..dataset.len())
        .filter(|&i| is_domain_specific(&dataset.examples[i]))
        .collect();
    if slice.is_empty() {
        return Err(Error::EmptySubset);
    }
    let k = ((subset_fraction * slice.len() as f64).ceil() as usize).clamp(1, slice.len());
    if k < slice.len() {
        let mut rng = seed::rng(seed::derive(seed_value, "finetune-subset"));
        slice.shuffle(&mut rng);
        slice.truncate(k);
        slice.sort_unstable();
    }
    Ok(slice)
}

/// Continues training a copy of `models` on a seeded sample of the domain-specific slice.
/// Zero epochs returns the models unchanged.
pub fn finetune(
    models: &SlotModels,
    dataset: &Dataset,
    subset_fraction: f64,
    config: &TrainConfig,
) -> Result<SlotModels> {
    config.check(0)?;
    let subset = finetune_subset(dataset, subset_fraction, config.seed)?;
    let mut out = models.clone();
    if config.epochs == 0 {
        return Ok(out);
    }
    let examples: Vec<Example> = subset.iter().map(|&i| dataset.examples[i].clone()).collect();
    let data = prepare_all(&examples, &dataset.tables, &models.parser)?;
    run_epochs(&mut out, &data, config)?;
    Ok(out)
}

/// Fills the sketch for `question` over `table`. Always returns a valid sketch.
pub fn predict(question: &str, table: &Table, models: &SlotModels) -> QuerySketch {
    predict_tokens(&normalize_question(question), table, models)
}

pub fn predict_tokens(tokens: &[String], table: &Table, models: &SlotModels) -> QuerySketch {
    let parser = &models.parser;
    let bits = parser.hash_bits;
    let schema = &table.schema;
    let a = analyze(tokens, table, parser);
    let conds = a
        .chosen
        .iter()
        .map(|c| {
            let mut cond = c.cond.clone();
            if let Some(p) = &c.phrase {
                let x = features::op_features(
                    bits,
                    tokens,
                    c.start,
                    Some(p),
                    &parser.lexicon,
                    schema.col_types[cond.col],
                );
                let k = linear::argmax(&models.op.scores(&x));
                cond.op = Op::from_code(k).unwrap_or(cond.op);
            }
            cond
        })
        .collect();
    let sel_scores: Vec<f64> = sel_vectors(tokens, table, &a, bits)
        .iter()
        .map(|x| models.sel.score(0, x))
        .collect();
    let sel = linear::argmax(&sel_scores);
    let agg_x = features::agg_features(bits, tokens, schema, sel);
    let agg = Agg::from_code(linear::argmax(&models.agg.scores(&agg_x))).unwrap_or(Agg::None);
    let sketch = QuerySketch::new(sel, agg, conds);
    if sketch.validate(schema).is_ok() {
        sketch
    } else {
        QuerySketch::new(0, Agg::None, vec![])
    }
}

/// Predicts every example of a dataset, in order.
pub fn predict_dataset(dataset: &Dataset, models: &SlotModels, mode: Parallelism) -> Vec<QuerySketch> {
    parallel::map(mode, &dataset.examples, |ex| {
        predict_tokens(&ex.question_tokens, dataset.table_of(ex), models)
    })
}

//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sqlbalance::balance::{oversample, partition, OversampleConfig, Provenance};
use sqlbalance::dataset::{
    compute_stats, load_examples, load_tables, sketch_from_json, sketch_to_json, write_examples, write_tables, Dataset,
    DatasetStats, QuerySketch, Split, TableMap,
};
use sqlbalance::evalharness::{
    categorize_errors, evaluate, kfold, run_experiment, run_pipeline, Component, ErrorBreakdown, ErrorCategory,
    ExperimentRow, ExperimentRun, FoldRun, MetricReport, Slice, Summary,
};
use sqlbalance::parallel::Parallelism;
use sqlbalance::parser::{finetune, model_io, predict_dataset};
use sqlbalance::sqlexec::{execute, render_sql};
use sqlbalance::synth::{generate, SynthConfig};
use sqlbalance::{seed, Error};

use crate::config::RunConfig;
use crate::output::{create_new, emit_report, fmt_f, render_report, write_bytes, write_csv};
use crate::{Cli, Command, CommonArgs, TrainArgs, EXIT_EMPTY_AGGREGATE};

fn parallelism() -> Parallelism {
    if cfg!(feature = "parallel") {
        Parallelism::Parallel
    } else {
        Parallelism::Sequential
    }
}

/// Config file (or defaults) with the shared flags applied on top.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let p = &mut cfg.paths;
    for (slot, flag) in [
        (&mut p.train, &common.train),
        (&mut p.dev, &common.dev),
        (&mut p.test, &common.test),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if !common.tables.is_empty() {
        p.tables = common.tables.clone();
    }
    if common.report_dir.is_some() {
        p.report_dir.clone_from(&common.report_dir);
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.strict_lexicon |= common.strict_lexicon;
    cfg.order_sensitive_lf |= common.order_sensitive;
    Ok(cfg)
}

fn apply_train_args(cfg: &mut RunConfig, args: &TrainArgs) {
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        cfg.train.batch_size = b;
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| anyhow!("invalid {what} {s:?}")))
        .collect()
}

fn load_table_map(cfg: &RunConfig) -> Result<Arc<TableMap>> {
    if cfg.paths.tables.is_empty() {
        bail!("no tables file given (use --tables or paths.tables)");
    }
    let mut all = TableMap::new();
    for path in &cfg.paths.tables {
        for (id, table) in load_tables(path)? {
            if all.insert(id.clone(), table).is_some() {
                bail!(
                    "table id {id:?} appears in more than one tables file ({})",
                    path.display()
                );
            }
        }
    }
    Ok(Arc::new(all))
}

fn split_path(cfg: &RunConfig, split: Split) -> Result<&Path> {
    let p = match split {
        Split::Train => &cfg.paths.train,
        Split::Dev => &cfg.paths.dev,
        Split::Test => &cfg.paths.test,
    };
    p.as_deref()
        .ok_or_else(|| anyhow!("no examples file configured for split {split}"))
}

fn load_split(cfg: &RunConfig, tables: &Arc<TableMap>, split: Split) -> Result<Dataset> {
    Ok(load_examples(split_path(cfg, split)?, Arc::clone(tables), split)?)
}

fn parse_split(s: &str) -> Result<Split> {
    s.parse().map_err(|e: Error| anyhow!(e))
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| anyhow!("missing {what}"))
}

pub fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    let mut cfg = resolve_config(&cli.common)?;
    match cli.command {
        Command::Stats => cmd_stats(&cfg, stdout),
        Command::Balance { factor, out } => {
            if let Some(f) = factor {
                cfg.factor = f;
            }
            cmd_balance(&cfg, &out, stdout)
        }
        Command::Train { factor, train, model } => {
            if let Some(f) = factor {
                cfg.factor = f;
            }
            apply_train_args(&mut cfg, &train);
            if model.is_some() {
                cfg.paths.model = model;
            }
            cmd_train(&cfg, stdout)
        }
        Command::Finetune {
            model,
            out,
            epochs,
            subset_fraction,
        } => {
            if model.is_some() {
                cfg.paths.model = model;
            }
            if let Some(e) = epochs {
                cfg.finetune.epochs = e;
            }
            if let Some(f) = subset_fraction {
                cfg.finetune.subset_fraction = f;
            }
            cmd_finetune(&cfg, &out, stdout)
        }
        Command::Predict { model, split, out } => {
            if model.is_some() {
                cfg.paths.model = model;
            }
            if out.is_some() {
                cfg.paths.predictions = out;
            }
            cmd_predict(&cfg, parse_split(&split)?, stdout)
        }
        Command::Evaluate { predictions, split } => {
            if predictions.is_some() {
                cfg.paths.predictions = predictions;
            }
            cmd_evaluate(&cfg, parse_split(&split)?, stdout)
        }
        Command::Experiment {
            factors,
            seeds,
            train,
            finetune_epochs,
            no_finetune,
        } => {
            if let Some(f) = factors {
                cfg.factors = parse_list(&f, "factor")?;
            }
            if let Some(s) = seeds {
                cfg.seeds = parse_list(&s, "seed")?;
            }
            apply_train_args(&mut cfg, &train);
            if let Some(e) = finetune_epochs {
                cfg.finetune.epochs = e;
            }
            if no_finetune {
                cfg.finetune.enabled = false;
            }
            cmd_experiment(&cfg, stdout)
        }
        Command::Kfold {
            k,
            factor,
            split,
            train,
        } => {
            if k.is_some() {
                cfg.k = k;
            }
            if let Some(f) = factor {
                cfg.factor = f;
            }
            apply_train_args(&mut cfg, &train);
            cmd_kfold(&cfg, parse_split(&split)?, stdout)
        }
        Command::Exec { table_id, sketch } => cmd_exec(&cfg, table_id.as_deref(), &sketch, stdout),
        Command::Synth {
            examples,
            table_count,
            domain_fraction,
            split,
            table_prefix,
            out_examples,
            out_tables,
        } => {
            let synth = SynthConfig {
                examples,
                tables: table_count,
                domain_fraction,
                seed: cfg.seed,
                split: parse_split(&split)?,
                table_prefix,
            };
            cmd_synth(&cfg, &synth, &out_examples, &out_tables, stdout)
        }
    }
}

#[derive(Serialize)]
struct SplitStats {
    #[serde(flatten)]
    stats: DatasetStats,
    single_condition_share: f64,
}

fn histogram_rows(split: Split, s: &DatasetStats) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let mut push = |name: &str, bucket: String, count: usize| {
        rows.push(vec![split.to_string(), name.to_string(), bucket, count.to_string()]);
    };
    for (k, v) in &s.question_len_hist {
        push("question_length", k.to_string(), *v);
    }
    for (k, v) in &s.sql_len_hist {
        push("sql_length", k.to_string(), *v);
    }
    for (k, v) in &s.agg_hist {
        push("aggregator", k.name().to_string(), *v);
    }
    for (k, v) in &s.cond_count_hist {
        push("condition_count", k.to_string(), *v);
    }
    for (k, v) in &s.op_hist {
        push("operator", k.name().to_string(), *v);
    }
    rows
}

fn cmd_stats(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32> {
    let tables = load_table_map(cfg)?;
    let mut result: BTreeMap<String, SplitStats> = BTreeMap::new();
    let mut csv_rows = Vec::new();
    for split in [Split::Train, Split::Dev, Split::Test] {
        if split_path(cfg, split).is_err() {
            continue;
        }
        let ds = load_split(cfg, &tables, split)?;
        let stats = compute_stats(&ds);
        csv_rows.extend(histogram_rows(split, &stats));
        result.insert(
            split.to_string(),
            SplitStats {
                single_condition_share: stats.single_condition_share(),
                stats,
            },
        );
    }
    if result.is_empty() {
        bail!("no split configured (use --train/--dev/--test)");
    }
    if let Some(dir) = &cfg.paths.report_dir {
        write_csv(
            &dir.join("histograms.csv"),
            &["split", "histogram", "bucket", "count"],
            csv_rows,
        )?;
    }
    emit_report("stats", cfg, &result, stdout)?;
    Ok(0)
}

#[derive(Serialize)]
struct BalanceResult<'a> {
    out: &'a Path,
    provenance: PathBuf,
    factor: usize,
    n_majority: usize,
    n_minority: usize,
    duplicates_added: usize,
    total: usize,
}

pub fn provenance_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".provenance");
    PathBuf::from(s)
}

fn cmd_balance(cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> Result<i32> {
    let tables = load_table_map(cfg)?;
    let train = load_split(cfg, &tables, Split::Train)?;
    let parts = partition(&train.examples);
    let balanced = oversample(
        &parts,
        &OversampleConfig {
            factor: cfg.factor,
            seed: seed::derive(cfg.seed, "oversample"),
        },
    )?;
    let mut w = create_new(out)?;
    write_examples(&mut w, &balanced.examples)?;
    w.flush()?;
    let prov_path = provenance_path(out);
    let mut pw = create_new(&prov_path)?;
    for p in &balanced.provenance {
        match p {
            Provenance::Original { source } => writeln!(pw, "ORIGINAL:{source}")?,
            Provenance::DuplicateOf { source } => writeln!(pw, "DUPLICATE:{source}")?,
        }
    }
    pw.flush()?;
    let result = BalanceResult {
        out,
        provenance: prov_path.clone(),
        factor: cfg.factor,
        n_majority: parts.n_majority(),
        n_minority: parts.n_minority(),
        duplicates_added: balanced.m,
        total: balanced.len(),
    };
    emit_report("balance", cfg, &result, stdout)?;
    Ok(0)
}

#[derive(Serialize)]
struct TrainResult<'a> {
    model: &'a Path,
    factor: usize,
    train_size: usize,
    duplicates_added: usize,
    epoch_losses: Vec<f64>,
}

fn cmd_train(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32> {
    let model_path = required(&cfg.paths.model, "model path (--model)")?;
    let tables = load_table_map(cfg)?;
    let train = load_split(cfg, &tables, Split::Train)?;
    let mut pipeline = cfg.pipeline();
    pipeline.finetune = None;
    let run = run_pipeline(&train, cfg.factor, &pipeline, cfg.seed)?;
    write_bytes(model_path, &model_io::to_bytes(&run.models))?;
    let result = TrainResult {
        model: model_path,
        factor: cfg.factor,
        train_size: run.train_sources.len(),
        duplicates_added: run.duplicates_added,
        epoch_losses: run.train_log.epoch_losses,
    };
    emit_report("train", cfg, &result, stdout)?;
    Ok(0)
}

#[derive(Serialize)]
struct FinetuneResult<'a> {
    base_model: &'a Path,
    out: &'a Path,
    subset_fraction: f64,
}

fn cmd_finetune(cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> Result<i32> {
    let model_path = required(&cfg.paths.model, "model path (--model)")?;
    let models = model_io::load(model_path)?;
    let tables = load_table_map(cfg)?;
    let train = load_split(cfg, &tables, Split::Train)?;
    let ft = cfg.finetune_config(seed::derive(cfg.seed, "finetune"));
    let tuned = finetune(&models, &train, ft.subset_fraction, &ft.train)?;
    write_bytes(out, &model_io::to_bytes(&tuned))?;
    let result = FinetuneResult {
        base_model: model_path,
        out,
        subset_fraction: ft.subset_fraction,
    };
    emit_report("finetune", cfg, &result, stdout)?;
    Ok(0)
}

/// One line of a predictions file.
#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub example_index: usize,
    pub table_id: String,
    pub sql: serde_json::Value,
}

fn cmd_predict(cfg: &RunConfig, split: Split, stdout: &mut dyn Write) -> Result<i32> {
    let model_path = required(&cfg.paths.model, "model path (--model)")?;
    let models = model_io::load(model_path)?;
    let tables = load_table_map(cfg)?;
    let ds = load_split(cfg, &tables, split)?;
    let preds = predict_dataset(&ds, &models, parallelism());
    let mut text = String::new();
    for (i, (p, ex)) in preds.iter().zip(&ds.examples).enumerate() {
        let rec = PredictionRecord {
            example_index: i,
            table_id: ex.table_id.clone(),
            sql: sketch_to_json(p),
        };
        text.push_str(&serde_json::to_string(&rec)?);
        text.push('\n');
    }
    match &cfg.paths.predictions {
        Some(path) => write_bytes(path, text.as_bytes())?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(0)
}

/// Reads a predictions file; every example index of a dataset of size `n` must appear once.
pub fn read_predictions(path: &Path, n: usize) -> Result<Vec<QuerySketch>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut slots: Vec<Option<QuerySketch>> = vec![None; n];
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}:{}", path.display(), i + 1);
        let rec: PredictionRecord = serde_json::from_str(&line).with_context(at)?;
        let sketch = sketch_from_json(&rec.sql).with_context(at)?;
        let slot = slots
            .get_mut(rec.example_index)
            .ok_or_else(|| anyhow!("{}: example_index {} out of range (n = {n})", at(), rec.example_index))?;
        if slot.replace(sketch).is_some() {
            bail!("{}: duplicate example_index {}", at(), rec.example_index);
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| anyhow!("{}: no prediction for example {i}", path.display())))
        .collect()
}

#[derive(Serialize)]
struct EvaluateResult {
    split: Split,
    reports: Vec<MetricReport>,
    errors: ErrorBreakdown,
    error_category_order: Vec<&'static str>,
}

fn component_rows(reports: &[MetricReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .flat_map(|r| {
            Component::ALL.iter().map(move |c| {
                vec![
                    r.slice.name().to_string(),
                    c.name().to_string(),
                    fmt_f(r.component_accuracy[c]),
                ]
            })
        })
        .collect()
}

fn cmd_evaluate(cfg: &RunConfig, split: Split, stdout: &mut dyn Write) -> Result<i32> {
    let pred_path = required(&cfg.paths.predictions, "predictions file (--predictions)")?;
    let tables = load_table_map(cfg)?;
    let ds = load_split(cfg, &tables, split)?;
    let preds = read_predictions(pred_path, ds.len())?;
    let reports = evaluate(&preds, &ds, cfg.lf_mode(), parallelism())?;
    let golds: Vec<QuerySketch> = ds.examples.iter().map(|e| e.gold.clone()).collect();
    let errors = categorize_errors(&preds, &golds, cfg.lf_mode())?;
    if let Some(dir) = &cfg.paths.report_dir {
        write_csv(
            &dir.join("components.csv"),
            &["slice", "component", "accuracy"],
            component_rows(&reports),
        )?;
    }
    let result = EvaluateResult {
        split,
        reports,
        errors,
        error_category_order: ErrorCategory::ORDER.iter().map(|c| c.name()).collect(),
    };
    emit_report("evaluate", cfg, &result, stdout)?;
    Ok(0)
}

#[derive(Serialize)]
struct ExperimentResult<'a> {
    rows: &'a [ExperimentRow],
    runs: &'a [ExperimentRun],
}

pub fn model_file_name(factor: usize, repetition: usize) -> String {
    format!("factor{factor}-rep{repetition}.model")
}

fn cmd_experiment(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32> {
    let dir = required(&cfg.paths.report_dir, "report directory (--report-dir)")?;
    let tables = load_table_map(cfg)?;
    let train = load_split(cfg, &tables, Split::Train)?;
    let test = load_split(cfg, &tables, Split::Test)?;
    let seeds: Vec<u64> = cfg
        .seeds
        .iter()
        .map(|&s| seed::derive(cfg.seed, &format!("run-{s}")))
        .collect();
    let report = run_experiment(&train, &test, &cfg.factors, &cfg.pipeline(), &seeds, parallelism())?;

    let result = ExperimentResult {
        rows: &report.rows,
        runs: &report.runs,
    };
    write_bytes(
        &dir.join("experiment.json"),
        render_report("experiment", cfg, &result)?.as_bytes(),
    )?;
    write_csv(
        &dir.join("ratios.csv"),
        &[
            "ratio",
            "factor",
            "ex_all",
            "ex_domain_specific",
            "ex_normal",
            "lf_all",
            "delta_vs_previous",
            "delta_vs_baseline",
            "domain_delta_vs_baseline",
        ],
        report.rows.iter().map(|r| {
            vec![
                r.ratio.clone(),
                r.factor.to_string(),
                fmt_f(r.ex_median[&Slice::All]),
                fmt_f(r.ex_median[&Slice::DomainSpecific]),
                fmt_f(r.ex_median[&Slice::Normal]),
                fmt_f(r.lf_median[&Slice::All]),
                fmt_f(r.delta_vs_previous),
                fmt_f(r.delta_vs_baseline),
                fmt_f(r.domain_delta_vs_baseline),
            ]
        }),
    )?;
    let mut header = vec![
        "factor",
        "repetition",
        "seed",
        "slice",
        "n",
        "lf_accuracy",
        "ex_accuracy",
    ];
    header.extend(Component::ALL.iter().map(|c| c.name()));
    write_csv(
        &dir.join("runs.csv"),
        &header,
        report.runs.iter().flat_map(|run| {
            run.reports.iter().map(move |m| {
                let mut row = vec![
                    run.factor.to_string(),
                    run.repetition.to_string(),
                    run.seed.to_string(),
                    m.slice.name().to_string(),
                    m.n.to_string(),
                    fmt_f(m.lf_accuracy),
                    fmt_f(m.ex_accuracy),
                ];
                row.extend(Component::ALL.iter().map(|c| fmt_f(m.component_accuracy[c])));
                row
            })
        }),
    )?;
    for run in &report.runs {
        write_bytes(
            &dir.join("models").join(model_file_name(run.factor, run.repetition)),
            &model_io::to_bytes(&run.models),
        )?;
    }
    for r in &report.rows {
        writeln!(
            stdout,
            "{:<9} ex_all {:.4}  ex_domain {:.4}  delta {:+.4}",
            r.ratio,
            r.ex_median[&Slice::All],
            r.ex_median[&Slice::DomainSpecific],
            r.delta_vs_previous
        )?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct KfoldResult<'a> {
    split: Split,
    k: usize,
    factor: usize,
    folds: &'a [FoldRun],
    ex_accuracy: &'a BTreeMap<Slice, Summary>,
    lf_accuracy: &'a BTreeMap<Slice, Summary>,
}

fn cmd_kfold(cfg: &RunConfig, split: Split, stdout: &mut dyn Write) -> Result<i32> {
    let k = cfg
        .k
        .ok_or_else(|| anyhow!("k is required (--k or `k` in the config file)"))?;
    let tables = load_table_map(cfg)?;
    let ds = load_split(cfg, &tables, split)?;
    let report = kfold(&ds, k, cfg.factor, &cfg.pipeline(), cfg.seed, parallelism())?;
    if let Some(dir) = &cfg.paths.report_dir {
        write_csv(
            &dir.join("folds.csv"),
            &["fold", "slice", "n", "lf_accuracy", "ex_accuracy"],
            report.folds.iter().flat_map(|f| {
                f.reports.iter().map(move |m| {
                    vec![
                        f.fold.to_string(),
                        m.slice.name().to_string(),
                        m.n.to_string(),
                        fmt_f(m.lf_accuracy),
                        fmt_f(m.ex_accuracy),
                    ]
                })
            }),
        )?;
    }
    let result = KfoldResult {
        split,
        k,
        factor: cfg.factor,
        folds: &report.folds,
        ex_accuracy: &report.ex_accuracy,
        lf_accuracy: &report.lf_accuracy,
    };
    emit_report("kfold", cfg, &result, stdout)?;
    Ok(0)
}

fn cmd_exec(cfg: &RunConfig, table_id: Option<&str>, sketch: &str, stdout: &mut dyn Write) -> Result<i32> {
    let tables = load_table_map(cfg)?;
    let table = match table_id {
        Some(id) => tables.get(id).ok_or_else(|| anyhow!("unknown table id {id:?}"))?,
        None if tables.len() == 1 => tables.values().next().expect("one table"),
        None => bail!(
            "--table-id is required when the tables files hold {} tables",
            tables.len()
        ),
    };
    let json: serde_json::Value = serde_json::from_str(sketch).context("parsing --sketch")?;
    let sketch = sketch_from_json(&json)?;
    writeln!(stdout, "{}", render_sql(&sketch, &table.schema)?)?;
    match execute(&sketch, table) {
        Ok(result) => {
            writeln!(stdout, "{result}")?;
            Ok(0)
        }
        Err(Error::EmptyAggregate) => {
            writeln!(stdout, "EMPTY_AGGREGATE")?;
            Ok(EXIT_EMPTY_AGGREGATE)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct SynthResult<'a> {
    examples_file: &'a Path,
    tables_file: &'a Path,
    examples: usize,
    tables: usize,
}

fn cmd_synth(
    cfg: &RunConfig,
    synth: &SynthConfig,
    out_examples: &Path,
    out_tables: &Path,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let ds = generate(synth);
    let mut w = create_new(out_examples)?;
    write_examples(&mut w, &ds.examples)?;
    w.flush()?;
    let mut w = create_new(out_tables)?;
    write_tables(&mut w, ds.tables.values())?;
    w.flush()?;
    let result = SynthResult {
        examples_file: out_examples,
        tables_file: out_tables,
        examples: ds.len(),
        tables: ds.tables.len(),
    };
    emit_report("synth", cfg, &result, stdout)?;
    Ok(0)
}

//! Oversampling-ratio sweeps and k-fold cross validation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::balance::{oversample, partition, OversampleConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::parallel::{self, Parallelism};
use crate::parser::{finetune, predict_dataset, train_with_log, ParserConfig, SlotModels, TrainConfig, TrainLog};
use crate::seed;

use super::metrics::{evaluate, LfMode, MetricReport, Slice};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub train: TrainConfig,
    /// Fraction of the domain-specific training slice used for fine-tuning, in (0, 1].
    pub subset_fraction: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            train: TrainConfig::default(),
            subset_fraction: 1.0,
        }
    }
}

/// Everything one training pipeline needs besides data and seeds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    /// `None` skips fine-tuning on balanced runs.
    pub finetune: Option<FinetuneConfig>,
    pub parser: ParserConfig,
    pub lf_mode: LfMode,
}

/// Output of one partition → oversample → train → finetune pipeline.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub models: SlotModels,
    pub train_log: TrainLog,
    /// Training-set index of every example the model was trained on (duplicates included).
    pub train_sources: Vec<usize>,
    pub duplicates_added: usize,
}

/// Trains on `train`; factor 0 means the plain unbalanced baseline (no oversampling, no
/// fine-tuning). Stage seeds are derived from `run_seed`.
pub fn run_pipeline(train: &Dataset, factor: usize, config: &PipelineConfig, run_seed: u64) -> Result<PipelineRun> {
    let train_cfg = TrainConfig {
        seed: seed::derive(run_seed, "train"),
        ..config.train
    };
    if factor == 0 {
        let (models, train_log) = train_with_log(&train.examples, &train.tables, &train_cfg, &config.parser)?;
        return Ok(PipelineRun {
            models,
            train_log,
            train_sources: (0..train.len()).collect(),
            duplicates_added: 0,
        });
    }
    let parts = partition(&train.examples);
    let balanced = oversample(
        &parts,
        &OversampleConfig {
            factor,
            seed: seed::derive(run_seed, "oversample"),
        },
    )?;
    let (mut models, train_log) = train_with_log(&balanced.examples, &train.tables, &train_cfg, &config.parser)?;
    if let Some(ft) = &config.finetune {
        let ft_cfg = TrainConfig {
            seed: seed::derive(run_seed, "finetune"),
            ..ft.train
        };
        models = finetune(&models, train, ft.subset_fraction, &ft_cfg)?;
    }
    Ok(PipelineRun {
        models,
        train_log,
        train_sources: balanced.provenance.iter().map(|p| p.source()).collect(),
        duplicates_added: balanced.m,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRun {
    pub factor: usize,
    /// Position of `seed` in the seed list.
    pub repetition: usize,
    pub seed: u64,
    pub train_size: usize,
    pub duplicates_added: usize,
    pub epoch_losses: Vec<f64>,
    /// One report per slice, in `Slice::ALL` order.
    pub reports: Vec<MetricReport>,
    #[serde(skip)]
    pub models: SlotModels,
}

impl ExperimentRun {
    pub fn report(&self, slice: Slice) -> &MetricReport {
        self.reports
            .iter()
            .find(|r| r.slice == slice)
            .expect("every slice reported")
    }
}

/// One ratio row: per-slice medians over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub factor: usize,
    /// "baseline" for factor 0, otherwise "1:f".
    pub ratio: String,
    pub ex_median: BTreeMap<Slice, f64>,
    pub lf_median: BTreeMap<Slice, f64>,
    /// ALL-slice execution accuracy change relative to the previous row.
    pub delta_vs_previous: f64,
    pub delta_vs_baseline: f64,
    pub domain_delta_vs_baseline: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub runs: Vec<ExperimentRun>,
}

pub fn ratio_label(factor: usize) -> String {
    if factor == 0 {
        "baseline".to_string()
    } else {
        format!("1:{factor}")
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Baseline (factor 0) plus every factor in `factors`, each repeated per seed, evaluated on
/// `test`. Balancing only ever touches `train`.
pub fn run_experiment(
    train: &Dataset,
    test: &Dataset,
    factors: &[usize],
    config: &PipelineConfig,
    seeds: &[u64],
    mode: Parallelism,
) -> Result<ExperimentReport> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    if factors.contains(&0) {
        return Err(Error::Config(
            "factor 0 is the implicit baseline; list only factors >= 1".into(),
        ));
    }
    let parts = partition(&train.examples);
    if parts.n_minority() == 0 || parts.n_majority() == 0 {
        return Err(Error::Config(
            "training data needs both domain-specific and normal examples".into(),
        ));
    }
    let all_factors: Vec<usize> = std::iter::once(0).chain(factors.iter().copied()).collect();
    let grid: Vec<(usize, usize, u64)> = all_factors
        .iter()
        .flat_map(|&f| seeds.iter().enumerate().map(move |(r, &s)| (f, r, s)))
        .collect();
    let runs: Vec<ExperimentRun> = parallel::map(mode, &grid, |&(factor, repetition, run_seed)| {
        let run = run_pipeline(train, factor, config, run_seed)?;
        let preds = predict_dataset(test, &run.models, Parallelism::Sequential);
        let reports = evaluate(&preds, test, config.lf_mode, Parallelism::Sequential)?;
        Ok(ExperimentRun {
            factor,
            repetition,
            seed: run_seed,
            train_size: run.train_sources.len(),
            duplicates_added: run.duplicates_added,
            epoch_losses: run.train_log.epoch_losses,
            reports,
            models: run.models,
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let mut rows: Vec<ExperimentRow> = Vec::with_capacity(all_factors.len());
    for &factor in &all_factors {
        let mine: Vec<&ExperimentRun> = runs.iter().filter(|r| r.factor == factor).collect();
        let per_slice = |f: fn(&MetricReport) -> f64| -> BTreeMap<Slice, f64> {
            Slice::ALL
                .iter()
                .map(|&s| (s, median(&mine.iter().map(|r| f(r.report(s))).collect::<Vec<_>>())))
                .collect()
        };
        let ex_median = per_slice(|r| r.ex_accuracy);
        let lf_median = per_slice(|r| r.lf_accuracy);
        let (prev, base, base_domain) = match (rows.last(), rows.first()) {
            (Some(p), Some(b)) => (
                p.ex_median[&Slice::All],
                b.ex_median[&Slice::All],
                b.ex_median[&Slice::DomainSpecific],
            ),
            _ => (
                ex_median[&Slice::All],
                ex_median[&Slice::All],
                ex_median[&Slice::DomainSpecific],
            ),
        };
        rows.push(ExperimentRow {
            factor,
            ratio: ratio_label(factor),
            delta_vs_previous: ex_median[&Slice::All] - prev,
            delta_vs_baseline: ex_median[&Slice::All] - base,
            domain_delta_vs_baseline: ex_median[&Slice::DomainSpecific] - base_domain,
            ex_median,
            lf_median,
        });
    }
    Ok(ExperimentReport { rows, runs })
}

/// Held-out indices of each fold, each sorted ascending.
pub fn fold_assignment(n: usize, k: usize, seed_value: u64) -> Result<Vec<Vec<usize>>> {
    use rand::seq::SliceRandom;
    if k < 2 {
        return Err(Error::Config(format!("k must be >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds dataset size {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed_value, "kfold")));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldRun {
    pub fold: usize,
    pub held_out: Vec<usize>,
    /// Dataset index behind every training example of this fold, duplicates included.
    pub train_sources: Vec<usize>,
    pub reports: Vec<MetricReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stdev: f64,
}

impl Summary {
    /// Mean and sample standard deviation (0 for fewer than two values).
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: 0.0, stdev: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stdev = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Summary { mean, stdev }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KFoldReport {
    pub k: usize,
    pub factor: usize,
    pub seed: u64,
    pub folds: Vec<FoldRun>,
    pub ex_accuracy: BTreeMap<Slice, Summary>,
    pub lf_accuracy: BTreeMap<Slice, Summary>,
}

/// k-fold cross validation; oversampling (when `factor >= 1`) is applied to each training fold
/// only, never to the held-out fold.
pub fn kfold(
    dataset: &Dataset,
    k: usize,
    factor: usize,
    config: &PipelineConfig,
    seed_value: u64,
    mode: Parallelism,
) -> Result<KFoldReport> {
    let folds = fold_assignment(dataset.len(), k, seed_value)?;
    let numbered: Vec<(usize, &Vec<usize>)> = folds.iter().enumerate().collect();
    let runs: Vec<FoldRun> = parallel::map(mode, &numbered, |&(fold, held_out)| {
        let mut is_held = vec![false; dataset.len()];
        for &i in held_out {
            is_held[i] = true;
        }
        let train_idx: Vec<usize> = (0..dataset.len()).filter(|&i| !is_held[i]).collect();
        let train = dataset.subset(&train_idx);
        let test = dataset.subset(held_out);
        let run = run_pipeline(
            &train,
            factor,
            config,
            seed::derive(seed_value, &format!("fold-{fold}")),
        )?;
        let preds = predict_dataset(&test, &run.models, Parallelism::Sequential);
        let reports = evaluate(&preds, &test, config.lf_mode, Parallelism::Sequential)?;
        Ok(FoldRun {
            fold,
            held_out: held_out.clone(),
            train_sources: run.train_sources.iter().map(|&s| train_idx[s]).collect(),
            reports,
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let summarize = |f: fn(&MetricReport) -> f64| -> BTreeMap<Slice, Summary> {
        Slice::ALL
            .iter()
            .map(|&s| {
                let values: Vec<f64> = runs
                    .iter()
                    .map(|r| f(r.reports.iter().find(|m| m.slice == s).expect("slice")))
                    .collect();
                (s, Summary::of(&values))
            })
            .collect()
    };
    Ok(KFoldReport {
        k,
        factor,
        seed: seed_value,
        ex_accuracy: summarize(|r| r.ex_accuracy),
        lf_accuracy: summarize(|r| r.lf_accuracy),
        folds: runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn quick() -> PipelineConfig {
        PipelineConfig {
            train: TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
            finetune: Some(FinetuneConfig {
                train: TrainConfig {
                    epochs: 1,
                    ..TrainConfig::default()
                },
                subset_fraction: 1.0,
            }),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn folds_partition() {
        let folds = fold_assignment(23, 5, 9).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 4 || f.len() == 5));
        let loo = fold_assignment(6, 6, 1).unwrap();
        assert!(loo.iter().all(|f| f.len() == 1));
        assert!(fold_assignment(5, 6, 0).is_err());
        assert!(fold_assignment(5, 1, 0).is_err());
        assert_eq!(folds, fold_assignment(23, 5, 9).unwrap());
    }

    #[test]
    fn median_and_summary() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0]), 2.5);
        let s = Summary::of(&[1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.stdev), (2.0, 1.0));
    }

    #[test]
    fn experiment_rows_and_determinism() {
        let data = generate(&SynthConfig {
            examples: 160,
            seed: 3,
            ..SynthConfig::default()
        });
        let test = generate(&SynthConfig {
            examples: 60,
            seed: 4,
            table_prefix: "other".into(),
            ..SynthConfig::default()
        });
        let a = run_experiment(&data, &test, &[1, 2, 3], &quick(), &[1], Parallelism::Parallel).unwrap();
        assert_eq!(
            a.rows.iter().map(|r| r.ratio.as_str()).collect::<Vec<_>>(),
            ["baseline", "1:1", "1:2", "1:3"]
        );
        assert_eq!(a.rows[0].delta_vs_previous, 0.0);
        let b = run_experiment(&data, &test, &[1, 2, 3], &quick(), &[1], Parallelism::Sequential).unwrap();
        assert_eq!(a.rows, b.rows);
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.models, y.models);
        }
        assert!(run_experiment(&data, &test, &[0], &quick(), &[1], Parallelism::Sequential).is_err());
    }

    #[test]
    fn kfold_never_leaks_held_out() {
        let data = generate(&SynthConfig {
            examples: 120,
            seed: 5,
            ..SynthConfig::default()
        });
        let r = kfold(&data, 4, 2, &quick(), 11, Parallelism::Parallel).unwrap();
        assert_eq!(r.folds.len(), 4);
        for f in &r.folds {
            assert!(f.train_sources.iter().all(|s| f.held_out.binary_search(s).is_err()));
            assert_eq!(f.reports[0].n, f.held_out.len());
        }
    }
}

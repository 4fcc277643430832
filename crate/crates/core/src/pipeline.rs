//! Tuning, final training and repeated-split evaluation.
//!
//! Each repetition draws its own split and one shared initial factor matrix.
//! Every particle trains from that matrix, and the final model is retrained
//! from it as well with the tuned hyperparameters. Only the final step
//! touches the validation part.

use std::thread;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, RepetitionSeeds};
use crate::data::{split_dataset, DataSplit, RatingDataset, SplitManifest, TuningView};
use crate::error::{Error, Result};
use crate::model::{init_factors, rmse, FactorState, Hyperparams};
use crate::swarm::{run_swarm, GenerationRecord, SwarmConfig, SwarmOutcome};
use crate::trainer::{fitness_of, train_slf, TrainReport};

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub hyperparams: Hyperparams,
    pub best_fitness: f64,
    /// The initial factors every particle trained from.
    pub initial: FactorState,
    pub swarm: SwarmOutcome,
}

/// Initial factors for a repetition, shaped like the split's parent.
pub fn initial_factors(
    data: TuningView<'_>,
    cfg: &ExperimentConfig,
    init_seed: u64,
) -> Result<FactorState> {
    init_factors(
        data.train.num_users(),
        data.train.num_items(),
        cfg.dim,
        init_seed,
        cfg.init_low,
        cfg.init_high,
    )
}

/// Searches `(lambda, gamma)` with the swarm; fitness is test RMSE.
pub fn tune(
    data: TuningView<'_>,
    cfg: &ExperimentConfig,
    seeds: &RepetitionSeeds,
) -> Result<TuneOutcome> {
    cfg.validate()?;
    if data.test.is_empty() {
        return Err(Error::EmptySet("test"));
    }
    if cfg.swarm.dims() != 2 {
        return Err(Error::Config(
            "hyperparameter search needs exactly two dimensions (lambda, gamma)".into(),
        ));
    }
    let initial = initial_factors(data, cfg, seeds.init)?;
    let swarm_cfg = SwarmConfig {
        seed: seeds.swarm,
        ..cfg.swarm.clone()
    };
    let fitness = |pos: &[f64]| match fitness_of(data, Hyperparams::from_position(pos), &cfg.train, &initial) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("fitness at {pos:?} failed: {e}");
            f64::INFINITY
        }
    };
    let swarm = run_swarm(&swarm_cfg, &fitness)?;
    Ok(TuneOutcome {
        hyperparams: Hyperparams::from_position(&swarm.best_position),
        best_fitness: swarm.best_fitness,
        initial,
        swarm,
    })
}

/// Retrains from `initial` at `hp` and scores the untouched validation part.
pub fn final_train(
    split: &DataSplit,
    hp: Hyperparams,
    initial: &FactorState,
    cfg: &ExperimentConfig,
) -> Result<(TrainReport, f64)> {
    if split.validation.is_empty() {
        return Err(Error::EmptySet("validation"));
    }
    split.assert_disjoint()?;
    let report = train_slf(split.tuning(), hp, &cfg.train, initial)?;
    let validation = if report.diverged {
        f64::INFINITY
    } else {
        rmse(&report.final_state, &split.validation)?
    };
    Ok((report, validation))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub generation: usize,
    pub global_best_fitness: f64,
    pub global_best_pos: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub repetition: usize,
    pub seeds: RepetitionSeeds,
    pub split: SplitManifest,
    pub best_lambda: f64,
    pub best_gamma: f64,
    pub best_test_rmse: f64,
    pub validation_rmse: f64,
    pub diverged: bool,
    pub final_outer_iters: usize,
    pub swarm_history: Vec<BestRecord>,
    /// Full per-particle trace; written to a sidecar file rather than the report.
    #[serde(skip)]
    pub trace: Vec<GenerationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation (0 for a single repetition).
    pub std: f64,
    pub display: String,
}

impl Aggregate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            display: format_mean_std(mean, std),
        }
    }
}

/// `mean±std` with five decimals, e.g. `0.85367±0.00015`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.5}±{std:.5}")
}

/// Wall-clock data, kept apart so the rest of the report is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix_seconds: u64,
    pub total_seconds: f64,
    pub per_repetition_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub repetitions: Vec<RepetitionReport>,
    pub validation_rmse: Aggregate,
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub density: f64,
}

impl DatasetSummary {
    pub fn of(ds: &RatingDataset) -> Self {
        Self {
            users: ds.num_users(),
            items: ds.num_items(),
            ratings: ds.len(),
            density: ds.density(),
        }
    }
}

impl ExperimentReport {
    /// Recomputes the aggregate from the per-repetition rows.
    pub fn recompute_aggregate(&self) -> Aggregate {
        let values: Vec<f64> = self.repetitions.iter().map(|r| r.validation_rmse).collect();
        Aggregate::from_values(&values)
    }
}

/// Split, tune and final-train for repetition `r` (1-based).
pub fn run_repetition(
    ds: &RatingDataset,
    cfg: &ExperimentConfig,
    repetition: usize,
) -> Result<(RepetitionReport, f64)> {
    let start = Instant::now();
    let seeds = cfg.seeds_for(repetition);
    let split = split_dataset(ds, cfg.ratios, seeds.split)?;
    let tuned = tune(split.tuning(), cfg, &seeds)?;
    let (report, validation) = final_train(&split, tuned.hyperparams, &tuned.initial, cfg)?;
    log::info!(
        "repetition {repetition}: lambda={:.6} gamma={:.6} test={:.6} validation={:.6}",
        tuned.hyperparams.lambda,
        tuned.hyperparams.gamma,
        tuned.best_fitness,
        validation
    );
    let row = RepetitionReport {
        repetition,
        seeds,
        split: split.manifest(),
        best_lambda: tuned.hyperparams.lambda,
        best_gamma: tuned.hyperparams.gamma,
        best_test_rmse: tuned.best_fitness,
        validation_rmse: validation,
        diverged: report.diverged,
        final_outer_iters: report.outer_iters_run,
        swarm_history: tuned
            .swarm
            .history
            .iter()
            .map(|h| BestRecord {
                generation: h.generation,
                global_best_fitness: h.global_best_fitness,
                global_best_pos: h.global_best_pos.clone(),
            })
            .collect(),
        trace: tuned.swarm.history,
    };
    Ok((row, start.elapsed().as_secs_f64()))
}

/// Runs `cfg.repetitions` independent split/tune/validate rounds on `ds`.
pub fn cross_validate_on(ds: &RatingDataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let start = Instant::now();
    let reps: Vec<usize> = (1..=cfg.repetitions).collect();
    let results: Vec<Result<(RepetitionReport, f64)>> = if cfg.parallel_repetitions {
        thread::scope(|scope| {
            let handles: Vec<_> = reps
                .iter()
                .map(|&r| scope.spawn(move || run_repetition(ds, cfg, r)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("repetition thread panicked"))
                .collect()
        })
    } else {
        reps.iter().map(|&r| run_repetition(ds, cfg, r)).collect()
    };
    let mut rows = Vec::with_capacity(results.len());
    let mut seconds = Vec::with_capacity(results.len());
    for res in results {
        let (row, secs) = res?;
        rows.push(row);
        seconds.push(secs);
    }
    let values: Vec<f64> = rows.iter().map(|r| r.validation_rmse).collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        dataset: DatasetSummary::of(ds),
        validation_rmse: Aggregate::from_values(&values),
        repetitions: rows,
        timings: Timings {
            started_unix_seconds: started,
            total_seconds: start.elapsed().as_secs_f64(),
            per_repetition_seconds: seconds,
        },
    })
}

/// Loads the configured dataset and runs [`cross_validate_on`].
pub fn cross_validate(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    cross_validate_on(&ds, cfg)
}

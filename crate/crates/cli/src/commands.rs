use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use pslf::config::{parse_delimiter, ExperimentConfig, RepetitionSeeds};
use pslf::data::{read_triples, IdMap, SplitManifest};
use pslf::pipeline::{cross_validate_on, initial_factors, DatasetSummary};
use pslf::snapshot::{read_snapshot, write_snapshot};
use pslf::{rmse, split_dataset, train_slf, DataSplit, Error, Hyperparams, RatingDataset};
use serde::{Deserialize, Serialize};

use crate::CommonArgs;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_data_error() {
            Self::data(e.to_string())
        } else {
            Self::usage(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn resolve_config(args: &CommonArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for assignment in &args.overrides {
        cfg.apply_assignment(assignment)?;
    }
    if let Some(spec) = &args.synthetic {
        cfg.set("data.synthetic", spec)?;
        cfg.data.path = None;
    }
    if let Some(path) = &args.data {
        cfg.data.path = Some(path.display().to_string());
    }
    if let Some(d) = &args.delimiter {
        cfg.data.delimiter = parse_delimiter(d);
    }
    if let Some(w) = args.workers {
        cfg.swarm.num_workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load(cfg: &ExperimentConfig) -> CliResult<RatingDataset> {
    cfg.load_dataset().map_err(|e| match e {
        Error::Config(_) | Error::InvalidRatios(_) => CliError::from(e),
        other => CliError::data(format!(
            "{}: {other}",
            cfg.data.path.as_deref().unwrap_or("synthetic data")
        )),
    })
}

fn create_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> pslf::Result<()>) -> CliResult<()> {
    let file = File::create(path)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    write(&mut out)
        .and_then(|_| out.flush().map_err(Error::from))
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    println!("{}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_file(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        out.write_all(b"\n")?;
        Ok(())
    })
}

fn write_parts(dir: &Path, split: &DataSplit, delimiter: &str) -> CliResult<()> {
    for (name, part) in [
        ("train.txt", &split.train),
        ("test.txt", &split.test),
        ("validation.txt", &split.validation),
    ] {
        write_file(&dir.join(name), |out| part.write_to(out, delimiter))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SplitArtifact<'a> {
    config: &'a ExperimentConfig,
    dataset: DatasetSummary,
    seeds: RepetitionSeeds,
    #[serde(flatten)]
    manifest: SplitManifest,
}

pub fn split(args: &CommonArgs) -> CliResult<i32> {
    let cfg = resolve_config(args)?;
    let ds = load(&cfg)?;
    let seeds = cfg.seeds_for(1);
    let split = split_dataset(&ds, cfg.ratios, seeds.split)?;
    create_out_dir(&args.out)?;
    write_json(
        &args.out.join("split_manifest.json"),
        &SplitArtifact {
            config: &cfg,
            dataset: DatasetSummary::of(&ds),
            seeds,
            manifest: split.manifest(),
        },
    )?;
    write_parts(&args.out, &split, &cfg.data.delimiter)?;
    Ok(EXIT_OK)
}

/// Id tables stored next to a snapshot so that `evaluate` can map external ids.
#[derive(Serialize, Deserialize)]
pub struct SnapshotIds {
    pub users: IdMap,
    pub items: IdMap,
}

pub fn ids_path(snapshot: &Path) -> PathBuf {
    let mut name = snapshot.as_os_str().to_owned();
    name.push(".ids.json");
    PathBuf::from(name)
}

#[derive(Serialize)]
struct TrainArtifact<'a> {
    config: &'a ExperimentConfig,
    dataset: DatasetSummary,
    seeds: RepetitionSeeds,
    split: SplitManifest,
    hyperparams: Hyperparams,
    outer_iters_run: usize,
    best_iter: Option<usize>,
    best_test_rmse: f64,
    diverged: bool,
    train_rmse_history: &'a [f64],
    test_rmse_history: &'a [f64],
    cg_iterations: &'a [usize],
    timings: TrainTimings<'a>,
}

#[derive(Serialize)]
struct TrainTimings<'a> {
    elapsed_seconds: f64,
    elapsed_history: &'a [f64],
}

pub fn train(args: &CommonArgs, lambda: Option<f64>, gamma: Option<f64>) -> CliResult<i32> {
    let mut cfg = resolve_config(args)?;
    if let Some(l) = lambda {
        cfg.hp.lambda = l;
    }
    if let Some(g) = gamma {
        cfg.hp.gamma = g;
    }
    let ds = load(&cfg)?;
    let seeds = cfg.seeds_for(1);
    let split = split_dataset(&ds, cfg.ratios, seeds.split)?;
    let x0 = initial_factors(split.tuning(), &cfg, seeds.init)?;
    let report = train_slf(split.tuning(), cfg.hp, &cfg.train, &x0)?;

    create_out_dir(&args.out)?;
    write_json(
        &args.out.join("train_report.json"),
        &TrainArtifact {
            config: &cfg,
            dataset: DatasetSummary::of(&ds),
            seeds,
            split: split.manifest(),
            hyperparams: cfg.hp,
            outer_iters_run: report.outer_iters_run,
            best_iter: report.best_iter,
            best_test_rmse: report.best_test_rmse,
            diverged: report.diverged,
            train_rmse_history: &report.train_rmse_history,
            test_rmse_history: &report.test_rmse_history,
            cg_iterations: &report.cg_iterations,
            timings: TrainTimings {
                elapsed_seconds: report.elapsed_seconds,
                elapsed_history: &report.elapsed_history,
            },
        },
    )?;
    write_file(&args.out.join("metrics.csv"), |out| report.write_metrics_csv(out))?;
    let snap = args.out.join("factors.snap");
    write_file(&snap, |out| write_snapshot(&report.final_state, out))?;
    write_json(
        &ids_path(&snap),
        &SnapshotIds {
            users: (**ds.user_ids()).clone(),
            items: (**ds.item_ids()).clone(),
        },
    )?;
    write_parts(&args.out, &split, &cfg.data.delimiter)?;

    if report.diverged {
        eprintln!("training diverged at lambda={:?} gamma={:?}", cfg.hp.lambda, cfg.hp.gamma);
        return Ok(EXIT_DIVERGED);
    }
    println!(
        "best_test_rmse={:.6} iterations={}",
        report.best_test_rmse, report.outer_iters_run
    );
    Ok(EXIT_OK)
}

pub fn tune(args: &CommonArgs) -> CliResult<i32> {
    let cfg = resolve_config(args)?;
    let ds = load(&cfg)?;
    let report = cross_validate_on(&ds, &cfg)?;
    create_out_dir(&args.out)?;
    write_json(&args.out.join("experiment_report.json"), &report)?;
    for rep in &report.repetitions {
        let path = args.out.join(format!("swarm_trace_rep{}.jsonl", rep.repetition));
        write_file(&path, |out| {
            for record in &rep.trace {
                serde_json::to_writer(&mut *out, record)?;
                out.write_all(b"\n")?;
            }
            Ok(())
        })?;
    }
    for rep in &report.repetitions {
        println!(
            "repetition {}: lambda={:.6} gamma={:.6} test_rmse={:.6} validation_rmse={:.6}",
            rep.repetition, rep.best_lambda, rep.best_gamma, rep.best_test_rmse, rep.validation_rmse
        );
    }
    println!("validation_rmse={}", report.validation_rmse.display);
    if report.repetitions.iter().all(|r| r.diverged) {
        eprintln!("every repetition diverged");
        return Ok(EXIT_DIVERGED);
    }
    Ok(EXIT_OK)
}

pub fn evaluate(
    snapshot: &Path,
    ratings: &Path,
    ids: Option<&Path>,
    delimiter: &str,
) -> CliResult<i32> {
    let open = |p: &Path| {
        File::open(p).map_err(|e| CliError::data(format!("cannot open {}: {e}", p.display())))
    };
    let state = read_snapshot(BufReader::new(open(snapshot)?))?;
    let ids_file = ids.map(Path::to_path_buf).unwrap_or_else(|| ids_path(snapshot));
    let tables: SnapshotIds = serde_json::from_reader(BufReader::new(open(&ids_file)?))
        .map_err(|e| CliError::data(format!("{}: {e}", ids_file.display())))?;
    if tables.users.len() != state.num_users() || tables.items.len() != state.num_items() {
        return Err(CliError::data(format!(
            "id tables ({} users, {} items) do not match snapshot ({}, {})",
            tables.users.len(),
            tables.items.len(),
            state.num_users(),
            state.num_items()
        )));
    }
    let triples = read_triples(BufReader::new(open(ratings)?), &parse_delimiter(delimiter))?;
    let template = RatingDataset::from_entries(tables.users.into(), tables.items.into(), vec![])?;
    let eval = template.reindex(triples)?;
    let value = rmse(&state, &eval)?;
    println!("rmse={value:.6}");
    Ok(EXIT_OK)
}

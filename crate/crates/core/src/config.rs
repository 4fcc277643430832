//! Experiment configuration with flat dotted `key=value` overrides.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{parse_ratings, RatingDataset};
use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::seed::{derive_seed, tag};
use crate::swarm::SwarmConfig;
use crate::synthetic::SyntheticSpec;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Ratings file; the synthetic generator is used when absent.
    pub path: Option<String>,
    pub delimiter: String,
    pub synthetic: SyntheticSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            delimiter: "::".into(),
            synthetic: SyntheticSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub ratios: [f64; 3],
    pub repetitions: usize,
    pub dim: usize,
    pub init_low: f64,
    pub init_high: f64,
    pub train: TrainConfig,
    pub swarm: SwarmConfig,
    /// Master seed; split, init and swarm seeds derive from it unless overridden.
    pub seed: u64,
    pub split_seed: Option<u64>,
    pub init_seed: Option<u64>,
    pub swarm_seed: Option<u64>,
    pub parallel_repetitions: bool,
    /// Hyperparameters for single training runs.
    pub hp: Hyperparams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            ratios: [0.6, 0.2, 0.2],
            repetitions: 5,
            dim: 20,
            init_low: 0.0,
            init_high: 0.004,
            train: TrainConfig::default(),
            swarm: SwarmConfig::default(),
            seed: 0,
            split_seed: None,
            init_seed: None,
            swarm_seed: None,
            parallel_repetitions: false,
            hp: Hyperparams::new(0.03, 50.0),
        }
    }
}

/// Every key accepted by [`ExperimentConfig::set`].
pub const KEYS: &[&str] = &[
    "seed",
    "repetitions",
    "parallel_repetitions",
    "data.path",
    "data.delimiter",
    "data.synthetic",
    "split.ratios",
    "split.seed",
    "model.dim",
    "init.low",
    "init.high",
    "init.seed",
    "hp.lambda",
    "hp.gamma",
    "train.max_outer_iters",
    "train.patience",
    "train.min_delta",
    "train.warm_start",
    "cg.max_iters",
    "cg.rel_tol",
    "cg.curvature_floor",
    "swarm.num_particles",
    "swarm.generations",
    "swarm.inertia",
    "swarm.c1",
    "swarm.c2",
    "swarm.bounds.lambda",
    "swarm.bounds.gamma",
    "swarm.v_max_fraction",
    "swarm.seed",
    "swarm.workers",
];

/// Accepts `tab`, `comma`, `\t` and literal separators.
pub fn parse_delimiter(value: &str) -> String {
    match value {
        "tab" | "\\t" => "\t".into(),
        "comma" => ",".into(),
        "space" => " ".into(),
        other => other.into(),
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value for {key}: {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

fn parse_pair(key: &str, value: &str) -> Result<[f64; 2]> {
    match parse_list(key, value)?.as_slice() {
        &[a, b] => Ok([a, b]),
        _ => Err(Error::Config(format!("{key} expects min,max"))),
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse(key, value)?,
            "repetitions" => self.repetitions = parse(key, value)?,
            "parallel_repetitions" => self.parallel_repetitions = parse(key, value)?,
            "data.path" => {
                self.data.path = (!value.is_empty()).then(|| value.to_owned());
            }
            "data.delimiter" => self.data.delimiter = parse_delimiter(value),
            "data.synthetic" => self.data.synthetic = value.parse()?,
            "split.ratios" => match parse_list(key, value)?.as_slice() {
                &[a, b, c] => self.ratios = [a, b, c],
                _ => return Err(Error::Config("split.ratios expects three values".into())),
            },
            "split.seed" => self.split_seed = Some(parse(key, value)?),
            "model.dim" => self.dim = parse(key, value)?,
            "init.low" => self.init_low = parse(key, value)?,
            "init.high" => self.init_high = parse(key, value)?,
            "init.seed" => self.init_seed = Some(parse(key, value)?),
            "hp.lambda" => self.hp.lambda = parse(key, value)?,
            "hp.gamma" => self.hp.gamma = parse(key, value)?,
            "train.max_outer_iters" => self.train.max_outer_iters = parse(key, value)?,
            "train.patience" => self.train.patience = parse(key, value)?,
            "train.min_delta" => self.train.min_delta = parse(key, value)?,
            "train.warm_start" => self.train.warm_start = parse(key, value)?,
            "cg.max_iters" => self.train.cg.max_iters = parse(key, value)?,
            "cg.rel_tol" => self.train.cg.rel_tol = parse(key, value)?,
            "cg.curvature_floor" => self.train.cg.curvature_floor = parse(key, value)?,
            "swarm.num_particles" => self.swarm.num_particles = parse(key, value)?,
            "swarm.generations" => self.swarm.generations = parse(key, value)?,
            "swarm.inertia" => self.swarm.inertia = parse(key, value)?,
            "swarm.c1" => self.swarm.c1 = parse(key, value)?,
            "swarm.c2" => self.swarm.c2 = parse(key, value)?,
            "swarm.bounds.lambda" => self.swarm.bounds[0] = parse_pair(key, value)?,
            "swarm.bounds.gamma" => self.swarm.bounds[1] = parse_pair(key, value)?,
            "swarm.v_max_fraction" => self.swarm.v_max_fraction = parse(key, value)?,
            "swarm.seed" => self.swarm_seed = Some(parse(key, value)?),
            "swarm.workers" => self.swarm.num_workers = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` assignment such as `swarm.num_particles=4`.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        self.set(key.trim(), value)
    }

    /// Reads a flat config: one `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply_assignment(line).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if self.dim < 1 {
            return Err(Error::Config("model.dim must be >= 1".into()));
        }
        if !(self.init_low.is_finite() && self.init_high.is_finite() && self.init_low < self.init_high)
        {
            return Err(Error::Config("init.low must be < init.high".into()));
        }
        if self.ratios.iter().any(|r| !(*r >= 0.0)) || (self.ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidRatios(self.ratios));
        }
        if self.data.delimiter.is_empty() {
            return Err(Error::Config("data.delimiter must not be empty".into()));
        }
        if self.swarm.num_workers < 1 {
            return Err(Error::Config("swarm.workers must be >= 1".into()));
        }
        self.data.synthetic.validate()?;
        self.train.validate()?;
        self.swarm.validate()
    }

    pub fn seeds_for(&self, repetition: usize) -> RepetitionSeeds {
        let r = repetition as u64;
        let pick = |over: Option<u64>, t: u64| match over {
            Some(base) => derive_seed(base, &[r]),
            None => derive_seed(self.seed, &[t, r]),
        };
        RepetitionSeeds {
            split: pick(self.split_seed, tag::SPLIT),
            init: pick(self.init_seed, tag::INIT),
            swarm: pick(self.swarm_seed, tag::SWARM),
        }
    }

    /// Loads `data.path`, or generates the synthetic dataset.
    pub fn load_dataset(&self) -> Result<RatingDataset> {
        match &self.data.path {
            Some(path) => {
                let file = File::open(Path::new(path))?;
                parse_ratings(BufReader::new(file), &self.data.delimiter)
            }
            None => Ok(self.data.synthetic.generate()?.dataset),
        }
    }
}

/// Seeds actually used by one repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionSeeds {
    pub split: u64,
    pub init: u64,
    pub swarm: u64,
}

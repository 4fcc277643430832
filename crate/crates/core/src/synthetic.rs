//! Low-rank synthetic rating matrices with known ground truth.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{IdMap, Rating, RatingDataset};
use crate::error::{Error, Result};
use crate::model::FactorState;
use crate::seed;

/// Parameters of a generated `P Q' + noise` matrix.
///
/// Parsed from and printed as `users=U items=I rank=R density=p noise=s seed=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub rank: usize,
    pub density: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            users: 100,
            items: 80,
            rank: 3,
            density: 0.3,
            noise: 0.1,
            seed: 1,
        }
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "users={} items={} rank={} density={} noise={} seed={}",
            self.users, self.items, self.rank, self.density, self.noise, self.seed
        )
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    /// Unspecified keys keep their defaults.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = Self::default();
        for token in s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("synthetic option {token:?} is not key=value")))?;
            let bad = || Error::Config(format!("invalid value for synthetic {key}: {value:?}"));
            match key {
                "users" => spec.users = value.parse().map_err(|_| bad())?,
                "items" => spec.items = value.parse().map_err(|_| bad())?,
                "rank" => spec.rank = value.parse().map_err(|_| bad())?,
                "density" => spec.density = value.parse().map_err(|_| bad())?,
                "noise" => spec.noise = value.parse().map_err(|_| bad())?,
                "seed" => spec.seed = value.parse().map_err(|_| bad())?,
                _ => return Err(Error::Config(format!("unknown synthetic option {key:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

pub struct SyntheticData {
    pub dataset: RatingDataset,
    /// Factors the noiseless scores were generated from.
    pub truth: FactorState,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.items == 0 || self.rank == 0 {
            return Err(Error::Config("synthetic users, items and rank must be >= 1".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Config("synthetic density must lie in (0, 1]".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("synthetic noise must be >= 0".into()));
        }
        Ok(())
    }

    /// Factors are drawn from `U[0, 1)`; each cell is observed independently
    /// with probability `density` and scored `<p_u, q_i> + N(0, noise^2)`.
    pub fn generate(&self) -> Result<SyntheticData> {
        self.validate()?;
        let mut rng = seed::rng_for(self.seed, &[seed::tag::SYNTHETIC]);
        let values = (0..(self.users + self.items) * self.rank)
            .map(|_| rng.random::<f64>())
            .collect();
        let truth = FactorState::from_values(self.users, self.items, self.rank, self.seed, values)?;
        let noise = Normal::new(0.0, self.noise).map_err(|e| Error::Config(e.to_string()))?;
        let mut entries = Vec::new();
        for u in 0..self.users {
            for i in 0..self.items {
                if rng.random::<f64>() < self.density {
                    let clean: f64 = truth
                        .user_row(u)
                        .iter()
                        .zip(truth.item_row(i))
                        .map(|(a, b)| a * b)
                        .sum();
                    let eps = if self.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    entries.push(Rating {
                        user: u as u32,
                        item: i as u32,
                        score: clean + eps,
                    });
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::NoRatings);
        }
        let ids = |prefix: char, n: usize| {
            Arc::new(IdMap::from(
                (1..=n).map(|k| format!("{prefix}{k}")).collect::<Vec<_>>(),
            ))
        };
        let dataset = RatingDataset::from_entries(ids('u', self.users), ids('i', self.items), entries)?;
        Ok(SyntheticData { dataset, truth })
    }
}

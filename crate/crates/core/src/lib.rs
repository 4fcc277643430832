//! Second-order latent factor models for sparse rating matrices.
//!
//! Factors are trained with Hessian-free updates (damped Gauss–Newton
//! curvature products solved by truncated conjugate gradient), and the two
//! hyperparameters, Tikhonov weight `lambda` and damping `gamma`, are tuned by
//! a synchronous master–worker particle swarm scored on held-out RMSE.
//!
//! Module map:
//!
//! - [`data`]: rating parsing, adjacency views, seeded splits
//! - [`model`]: factor state, loss, gradient, curvature products, RMSE
//! - [`cg`]: matrix-free conjugate gradient
//! - [`trainer`]: the outer training loop and the fitness function
//! - [`swarm`]: particle swarm over a bounded box
//! - [`pipeline`]: tuning, final training and repeated-split reports
//! - [`config`], [`snapshot`], [`synthetic`]: plumbing

pub mod cg;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod snapshot;
pub mod swarm;
pub mod synthetic;
pub mod trainer;

pub use cg::{cg_solve, CgConfig, CgResult, LinearOperator, Termination};
pub use config::ExperimentConfig;
pub use data::{density_of, parse_ratings, split_dataset, DataSplit, RatingDataset, TuningView};
pub use error::{Error, Result};
pub use model::{
    gn_vector_product, gradient, hvp_fd_oracle, init_factors, loss, predict, rmse, FactorState,
    FlatVector, Hyperparams,
};
pub use pipeline::{cross_validate, cross_validate_on, final_train, tune, ExperimentReport};
pub use swarm::{init_swarm, run_swarm, step_generation, SwarmConfig, SwarmState};
pub use trainer::{fitness_of, train_slf, TrainConfig, TrainReport};

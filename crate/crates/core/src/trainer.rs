//! Outer Hessian-free loop: solve the damped Gauss–Newton system with
//! truncated CG, take the full step, repeat.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cg::{cg_solve, CgConfig, Termination};
use crate::data::TuningView;
use crate::error::{Error, Result};
use crate::model::{gradient, rmse, FactorState, GaussNewtonOperator, Hyperparams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_outer_iters: usize,
    /// Consecutive rounds without a `min_delta` improvement before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub cg: CgConfig,
    /// Start each CG solve from the previous step instead of zero.
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 50,
            patience: 3,
            min_delta: 1e-5,
            cg: CgConfig::default(),
            warm_start: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters < 1 {
            return Err(Error::Config("train.max_outer_iters must be >= 1".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("train.patience must be >= 1".into()));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::Config("train.min_delta must be >= 0".into()));
        }
        self.cg.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// The iterate with the lowest monitored RMSE (X0 if no round completed).
    pub final_state: FactorState,
    pub hyperparams: Hyperparams,
    pub train_rmse_history: Vec<f64>,
    /// NaN entries when the run had no test set.
    pub test_rmse_history: Vec<f64>,
    pub cg_iterations: Vec<usize>,
    pub elapsed_history: Vec<f64>,
    pub outer_iters_run: usize,
    /// 1-based round whose state is `final_state`.
    pub best_iter: Option<usize>,
    pub best_test_rmse: f64,
    pub diverged: bool,
    pub elapsed_seconds: f64,
}

impl TrainReport {
    /// Best test RMSE, or `+inf` when training diverged.
    pub fn fitness(&self) -> f64 {
        if self.diverged || self.best_test_rmse.is_nan() {
            f64::INFINITY
        } else {
            self.best_test_rmse
        }
    }

    /// `iter,train_rmse,test_rmse,cg_iters,elapsed_s`, one row per round.
    pub fn write_metrics_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iter,train_rmse,test_rmse,cg_iters,elapsed_s")?;
        for t in 0..self.outer_iters_run {
            writeln!(
                out,
                "{},{},{},{},{}",
                t + 1,
                self.train_rmse_history[t],
                self.test_rmse_history[t],
                self.cg_iterations[t],
                self.elapsed_history[t]
            )?;
        }
        Ok(())
    }
}

struct Best {
    rmse: f64,
    state: Option<FactorState>,
    iter: Option<usize>,
}

/// Trains from a private copy of `x0`.
///
/// Early stopping monitors test RMSE, or train RMSE when the test part is
/// empty. A zero gradient ends the run after recording the round. Any
/// non-finite quantity marks the run diverged instead of returning an error.
pub fn train_slf(
    data: TuningView<'_>,
    hp: Hyperparams,
    cfg: &TrainConfig,
    x0: &FactorState,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::EmptySet("train"));
    }
    for ds in [data.train, data.test] {
        if ds.num_users() != x0.num_users() || ds.num_items() != x0.num_items() {
            return Err(Error::ShapeMismatch(format!(
                "split is {}x{} but factors are {}x{}",
                ds.num_users(),
                ds.num_items(),
                x0.num_users(),
                x0.num_items()
            )));
        }
    }

    let start = Instant::now();
    let n = x0.values().len();
    let mut x = x0.clone();
    let mut step = vec![0.0; n];
    let zeros = vec![0.0; n];
    let mut report = TrainReport {
        final_state: x0.clone(),
        hyperparams: hp,
        train_rmse_history: Vec::new(),
        test_rmse_history: Vec::new(),
        cg_iterations: Vec::new(),
        elapsed_history: Vec::new(),
        outer_iters_run: 0,
        best_iter: None,
        best_test_rmse: f64::INFINITY,
        diverged: false,
        elapsed_seconds: 0.0,
    };
    let mut best = Best {
        rmse: f64::INFINITY,
        state: None,
        iter: None,
    };
    let mut stale = 0;

    for t in 1..=cfg.max_outer_iters {
        let round = (|| -> Result<(usize, bool)> {
            let mut rhs = gradient(&x, data.train, hp.lambda)?;
            rhs.iter_mut().for_each(|g| *g = -*g);
            let op = GaussNewtonOperator {
                state: &x,
                train: data.train,
                hp,
            };
            let start_vec = if cfg.warm_start { &step } else { &zeros };
            let sol = cg_solve(&op, &rhs, start_vec, &cfg.cg)?;
            let stationary = sol.termination == Termination::ZeroRhs;
            if !stationary {
                step = sol.solution;
                x.add_scaled(1.0, &step)?;
            }
            Ok((sol.iterations, stationary))
        })();
        let (cg_iters, stationary) = match round {
            Ok(r) => r,
            Err(Error::Diverged) => {
                report.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        if !x.is_finite() {
            report.diverged = true;
            break;
        }
        let train_rmse = rmse(&x, data.train)?;
        let test_rmse = if data.test.is_empty() {
            f64::NAN
        } else {
            rmse(&x, data.test)?
        };
        let monitored = if data.test.is_empty() { train_rmse } else { test_rmse };
        if !monitored.is_finite() || !train_rmse.is_finite() {
            report.diverged = true;
            break;
        }
        report.train_rmse_history.push(train_rmse);
        report.test_rmse_history.push(test_rmse);
        report.cg_iterations.push(cg_iters);
        report.elapsed_history.push(start.elapsed().as_secs_f64());
        report.outer_iters_run = t;

        let significant = monitored < best.rmse - cfg.min_delta;
        if monitored < best.rmse {
            best.rmse = monitored;
            best.state = Some(x.clone());
            best.iter = Some(t);
        }
        stale = if significant { 0 } else { stale + 1 };
        if stationary || stale >= cfg.patience {
            break;
        }
    }

    if let Some(state) = best.state {
        report.final_state = state;
    }
    report.best_iter = best.iter;
    report.best_test_rmse = if data.test.is_empty() {
        f64::NAN
    } else {
        best.iter
            .map(|t| report.test_rmse_history[t - 1])
            .unwrap_or(f64::INFINITY)
    };
    report.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Held-out test RMSE of a full training run at `hp` (`+inf` on divergence).
pub fn fitness_of(
    data: TuningView<'_>,
    hp: Hyperparams,
    cfg: &TrainConfig,
    x0: &FactorState,
) -> Result<f64> {
    if data.test.is_empty() {
        return Err(Error::EmptySet("test"));
    }
    Ok(train_slf(data, hp, cfg, x0)?.fitness())
}

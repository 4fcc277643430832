//! Matrix-free conjugate gradient for symmetric positive (semi-)definite operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A symmetric linear map applied without materializing its matrix.
///
/// Implementations must not retain mutable state between calls; the solver
/// may apply the operator any number of times.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// Writes `A v` into `out`. Both slices have length [`dim`](Self::dim).
    fn apply(&self, v: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Adapts a closure into a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(v, out);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgConfig {
    pub max_iters: usize,
    /// Stop once `||r|| / ||b||` falls to this value.
    pub rel_tol: f64,
    /// Directions with `p'Ap <= curvature_floor * ||p||^2` end the solve.
    pub curvature_floor: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            rel_tol: 1e-2,
            curvature_floor: 1e-12,
        }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Config("cg.max_iters must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Config("cg.rel_tol must lie in (0, 1)".into()));
        }
        if !(self.curvature_floor >= 0.0) {
            return Err(Error::Config("cg.curvature_floor must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    CurvatureBreakdown,
    ZeroRhs,
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub final_rel_residual: f64,
    pub termination: Termination,
    /// `||r_k|| / ||b||` for k = 0..=iterations.
    pub residual_history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` starting from `x0` with the standard CG recurrence.
///
/// The operator is applied at most `max_iters + 1` times (the extra one only
/// when `x0` is non-zero, to form the initial residual).
pub fn cg_solve<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x0: &[f64],
    config: &CgConfig,
) -> Result<CgResult> {
    let n = op.dim();
    if b.len() != n || x0.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "operator dim {n}, rhs {}, x0 {}",
            b.len(),
            x0.len()
        )));
    }
    config.validate()?;

    let b_norm = dot(b, b).sqrt();
    if !b_norm.is_finite() {
        return Err(Error::Diverged);
    }
    if b_norm == 0.0 {
        return Ok(CgResult {
            solution: x0.to_vec(),
            iterations: 0,
            final_rel_residual: 0.0,
            termination: Termination::ZeroRhs,
            residual_history: vec![0.0],
        });
    }

    let mut x = x0.to_vec();
    let mut ap = vec![0.0; n];
    let mut r = b.to_vec();
    if x0.iter().any(|&v| v != 0.0) {
        op.apply(x0, &mut ap)?;
        for (ri, ai) in r.iter_mut().zip(&ap) {
            *ri -= ai;
        }
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut rel = rr.sqrt() / b_norm;
    if !rel.is_finite() {
        return Err(Error::Diverged);
    }
    let mut history = vec![rel];
    if rel <= config.rel_tol {
        return Ok(CgResult {
            solution: x,
            iterations: 0,
            final_rel_residual: rel,
            termination: Termination::Converged,
            residual_history: history,
        });
    }

    let mut iterations = 0;
    let mut termination = Termination::MaxIters;
    while iterations < config.max_iters {
        op.apply(&p, &mut ap)?;
        let curvature = dot(&p, &ap);
        if !curvature.is_finite() {
            return Err(Error::Diverged);
        }
        if curvature <= config.curvature_floor * dot(&p, &p) {
            termination = Termination::CurvatureBreakdown;
            break;
        }
        let alpha = rr / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        let rr_next = dot(&r, &r);
        rel = rr_next.sqrt() / b_norm;
        if !rel.is_finite() {
            return Err(Error::Diverged);
        }
        history.push(rel);
        if rel <= config.rel_tol {
            termination = Termination::Converged;
            break;
        }
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
    }

    Ok(CgResult {
        solution: x,
        iterations,
        final_rel_residual: rel,
        termination,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    fn dense(a: Vec<Vec<f64>>) -> impl LinearOperator {
        let n = a.len();
        FnOperator::new(n, move |v: &[f64], out: &mut [f64]| {
            for (o, row) in out.iter_mut().zip(&a) {
                *o = dot(row, v);
            }
        })
    }

    #[test]
    fn identity_converges_in_one_step() {
        let op = FnOperator::new(3, |v: &[f64], out: &mut [f64]| out.copy_from_slice(v));
        let b = [1.0, -2.0, 0.5];
        let res = cg_solve(&op, &b, &[0.0; 3], &CgConfig::default()).unwrap();
        assert_eq!(res.solution, b);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.termination, Termination::Converged);
    }

    #[test]
    fn zero_rhs_returns_start() {
        let op = FnOperator::new(2, |v: &[f64], out: &mut [f64]| out.copy_from_slice(v));
        let res = cg_solve(&op, &[0.0, 0.0], &[3.0, 4.0], &CgConfig::default()).unwrap();
        assert_eq!(res.solution, vec![3.0, 4.0]);
        assert_eq!(res.termination, Termination::ZeroRhs);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn two_by_two_system() {
        let op = dense(vec![vec![4.0, 1.0], vec![1.0, 3.0]]);
        let cfg = CgConfig {
            rel_tol: 1e-10,
            ..CgConfig::default()
        };
        let res = cg_solve(&op, &[1.0, 2.0], &[0.0, 0.0], &cfg).unwrap();
        assert!(res.iterations <= 2);
        assert!((res.solution[0] - 1.0 / 11.0).abs() < 1e-10);
        assert!((res.solution[1] - 7.0 / 11.0).abs() < 1e-10);
    }

    #[test]
    fn warm_start_and_application_budget() {
        let calls = Cell::new(0usize);
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let op = FnOperator::new(3, |v: &[f64], out: &mut [f64]| {
            calls.set(calls.get() + 1);
            for (o, row) in out.iter_mut().zip(&a) {
                *o = dot(row, v);
            }
        });
        let cfg = CgConfig {
            max_iters: 2,
            rel_tol: 1e-15,
            ..CgConfig::default()
        };
        let res = cg_solve(&op, &[1.0, 2.0, 3.0], &[0.1, 0.1, 0.1], &cfg).unwrap();
        assert_eq!(res.termination, Termination::MaxIters);
        assert_eq!(res.iterations, 2);
        assert!(calls.get() <= cfg.max_iters + 1);
    }

    #[test]
    fn negative_curvature_stops_with_last_iterate() {
        let op = dense(vec![vec![-1.0, 0.0], vec![0.0, -1.0]]);
        let res = cg_solve(&op, &[1.0, 1.0], &[0.0, 0.0], &CgConfig::default()).unwrap();
        assert_eq!(res.termination, Termination::CurvatureBreakdown);
        assert_eq!(res.solution, vec![0.0, 0.0]);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn non_finite_operator_is_an_error() {
        let op = FnOperator::new(1, |_: &[f64], out: &mut [f64]| out[0] = f64::NAN);
        assert!(matches!(
            cg_solve(&op, &[1.0], &[0.0], &CgConfig::default()),
            Err(Error::Diverged)
        ));
    }

    #[test]
    fn length_mismatch() {
        let op = FnOperator::new(2, |v: &[f64], out: &mut [f64]| out.copy_from_slice(v));
        assert!(matches!(
            cg_solve(&op, &[1.0], &[0.0, 0.0], &CgConfig::default()),
            Err(Error::ShapeMismatch(_))
        ));
    }
}

//! Stacked latent factor state and the numerical kernels over it.
//!
//! Users and items share one matrix `X` of shape `(|U| + |I|) x D`: row `u`
//! holds user `u`'s factor and row `|U| + i` holds item `i`'s. Every known
//! rating contributes `(s - <x_u, x_i>)^2 + lambda (|x_u|^2 + |x_i|^2)` to the
//! (halved) objective, so a row is penalised once per rating it takes part in.
//!
//! All kernels iterate the rating list in storage order, which fixes the
//! floating-point reduction order and keeps results bit-stable.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cg::LinearOperator;
use crate::data::RatingDataset;
use crate::error::{Error, Result};
use crate::seed;

/// Flat vector indexed like [`FactorState::values`].
pub type FlatVector = Vec<f64>;

/// Regularization weight and curvature damping. Also a particle position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    pub gamma: f64,
}

impl Hyperparams {
    pub fn new(lambda: f64, gamma: f64) -> Self {
        Self { lambda, gamma }
    }

    pub fn from_position(pos: &[f64]) -> Self {
        Self {
            lambda: pos[0],
            gamma: pos[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    num_users: usize,
    num_items: usize,
    dim: usize,
    seed: u64,
    values: Vec<f64>,
}

impl FactorState {
    pub fn from_values(
        num_users: usize,
        num_items: usize,
        dim: usize,
        seed: u64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("latent dimension must be >= 1".into()));
        }
        if values.len() != (num_users + num_items) * dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for ({} + {}) x {}, got {}",
                (num_users + num_items) * dim,
                num_users,
                num_items,
                dim,
                values.len()
            )));
        }
        Ok(Self {
            num_users,
            num_items,
            dim,
            seed,
            values,
        })
    }

    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        Self {
            num_users,
            num_items,
            dim,
            seed: 0,
            values: vec![0.0; (num_users + num_items) * dim],
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Seed the state was drawn with (0 for states not produced by [`init_factors`]).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.values[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_row(&self, i: usize) -> &[f64] {
        let r = self.num_users + i;
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `X <- X + alpha * step`.
    pub fn add_scaled(&mut self, alpha: f64, step: &[f64]) -> Result<()> {
        self.check_len(step.len())?;
        for (x, s) in self.values.iter_mut().zip(step) {
            *x += alpha * s;
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {len} against factor state of length {}",
                self.values.len()
            )));
        }
        Ok(())
    }

    fn check_dataset(&self, ds: &RatingDataset) -> Result<()> {
        if ds.num_users() != self.num_users || ds.num_items() != self.num_items {
            return Err(Error::ShapeMismatch(format!(
                "dataset is {}x{} but factors are {}x{}",
                ds.num_users(),
                ds.num_items(),
                self.num_users,
                self.num_items
            )));
        }
        Ok(())
    }

    /// Offsets of the user and item rows of a rating inside `values`.
    #[inline]
    fn rows(&self, user: u32, item: u32) -> (usize, usize) {
        (
            user as usize * self.dim,
            (self.num_users + item as usize) * self.dim,
        )
    }
}

/// Draws every entry independently from `U[low, high)`.
pub fn init_factors(
    num_users: usize,
    num_items: usize,
    dim: usize,
    seed: u64,
    low: f64,
    high: f64,
) -> Result<FactorState> {
    if dim == 0 {
        return Err(Error::Config("latent dimension must be >= 1".into()));
    }
    if !(low.is_finite() && high.is_finite() && low < high) {
        return Err(Error::Config(format!(
            "init range [{low}, {high}) is empty or non-finite"
        )));
    }
    let mut rng = seed::rng_for(seed, &[seed::tag::INIT]);
    let values = (0..(num_users + num_items) * dim)
        .map(|_| rng.random_range(low..high))
        .collect();
    FactorState::from_values(num_users, num_items, dim, seed, values)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `<x_u, x_{|U|+i}>`.
pub fn predict(x: &FactorState, u: usize, i: usize) -> Result<f64> {
    if u >= x.num_users || i >= x.num_items {
        return Err(Error::IndexOutOfRange(format!(
            "({u}, {i}) outside {}x{}",
            x.num_users, x.num_items
        )));
    }
    Ok(dot(x.user_row(u), x.item_row(i)))
}

/// Regularized objective summed over the known ratings.
pub fn loss(x: &FactorState, train: &RatingDataset, lambda: f64) -> Result<f64> {
    x.check_dataset(train)?;
    let d = x.dim;
    let v = &x.values;
    let mut total = 0.0;
    for r in train.entries() {
        let (ou, oi) = x.rows(r.user, r.item);
        let (xu, xi) = (&v[ou..ou + d], &v[oi..oi + d]);
        let e = r.score - dot(xu, xi);
        total += e * e + lambda * (dot(xu, xu) + dot(xi, xi));
    }
    let total = 0.5 * total;
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::Diverged)
    }
}

/// Analytic gradient of [`loss`].
pub fn gradient(x: &FactorState, train: &RatingDataset, lambda: f64) -> Result<FlatVector> {
    x.check_dataset(train)?;
    let d = x.dim;
    let v = &x.values;
    let mut g = vec![0.0; v.len()];
    for r in train.entries() {
        let (ou, oi) = x.rows(r.user, r.item);
        let e = r.score - dot(&v[ou..ou + d], &v[oi..oi + d]);
        for k in 0..d {
            let (xu, xi) = (v[ou + k], v[oi + k]);
            g[ou + k] += -e * xi + lambda * xu;
            g[oi + k] += -e * xu + lambda * xi;
        }
    }
    if g.iter().all(|x| x.is_finite()) {
        Ok(g)
    } else {
        Err(Error::Diverged)
    }
}

/// Writes `(J'J + lambda C + gamma I) v` into `out`, where `J` is the Jacobian
/// of the predictions over the known ratings and `C` the diagonal of per-row
/// rating counts.
pub fn gn_vector_product_into(
    x: &FactorState,
    train: &RatingDataset,
    v: &[f64],
    lambda: f64,
    gamma: f64,
    out: &mut [f64],
) -> Result<()> {
    x.check_dataset(train)?;
    x.check_len(v.len())?;
    x.check_len(out.len())?;
    let d = x.dim;
    let xs = &x.values;
    for (o, vi) in out.iter_mut().zip(v) {
        *o = gamma * vi;
    }
    for r in train.entries() {
        let (ou, oi) = x.rows(r.user, r.item);
        let mut inner = 0.0;
        for k in 0..d {
            inner += v[ou + k] * xs[oi + k] + xs[ou + k] * v[oi + k];
        }
        for k in 0..d {
            out[ou + k] += inner * xs[oi + k] + lambda * v[ou + k];
            out[oi + k] += inner * xs[ou + k] + lambda * v[oi + k];
        }
    }
    if out.iter().all(|o| o.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged)
    }
}

/// Damped Gauss–Newton curvature product; see [`gn_vector_product_into`].
pub fn gn_vector_product(
    x: &FactorState,
    train: &RatingDataset,
    v: &[f64],
    lambda: f64,
    gamma: f64,
) -> Result<FlatVector> {
    let mut out = vec![0.0; x.values.len()];
    gn_vector_product_into(x, train, v, lambda, gamma, &mut out)?;
    Ok(out)
}

/// Central-difference Hessian-vector product of the full objective,
/// `(grad(X + eps v) - grad(X - eps v)) / (2 eps)`.
///
/// Only used to cross-check the Gauss–Newton product.
pub fn hvp_fd_oracle(
    x: &FactorState,
    train: &RatingDataset,
    v: &[f64],
    lambda: f64,
    epsilon: f64,
) -> Result<FlatVector> {
    if !(epsilon > 0.0) {
        return Err(Error::Config("epsilon must be > 0".into()));
    }
    x.check_len(v.len())?;
    let mut plus = x.clone();
    plus.add_scaled(epsilon, v)?;
    let mut minus = x.clone();
    minus.add_scaled(-epsilon, v)?;
    let gp = gradient(&plus, train, lambda)?;
    let gm = gradient(&minus, train, lambda)?;
    let h: FlatVector = gp
        .iter()
        .zip(&gm)
        .map(|(a, b)| (a - b) / (2.0 * epsilon))
        .collect();
    if h.iter().all(|x| x.is_finite()) {
        Ok(h)
    } else {
        Err(Error::Diverged)
    }
}

/// Root mean squared error over `eval`. Non-finite predictions yield `+inf`.
pub fn rmse(x: &FactorState, eval: &RatingDataset) -> Result<f64> {
    x.check_dataset(eval)?;
    if eval.is_empty() {
        return Err(Error::EmptySet("evaluation"));
    }
    let d = x.dim;
    let v = &x.values;
    let mut sse = 0.0;
    for r in eval.entries() {
        let (ou, oi) = x.rows(r.user, r.item);
        let e = r.score - dot(&v[ou..ou + d], &v[oi..oi + d]);
        sse += e * e;
    }
    let out = (sse / eval.len() as f64).sqrt();
    Ok(if out.is_finite() { out } else { f64::INFINITY })
}

/// The damped Gauss–Newton operator at a fixed `X`, for use with CG.
pub struct GaussNewtonOperator<'a> {
    pub state: &'a FactorState,
    pub train: &'a RatingDataset,
    pub hp: Hyperparams,
}

impl LinearOperator for GaussNewtonOperator<'_> {
    fn dim(&self) -> usize {
        self.state.values.len()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        gn_vector_product_into(
            self.state,
            self.train,
            v,
            self.hp.lambda,
            self.hp.gamma,
            out,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{IdMap, Rating};
    use std::sync::Arc;

    fn ids(n: usize) -> Arc<IdMap> {
        Arc::new(IdMap::from((0..n).map(|k| k.to_string()).collect::<Vec<_>>()))
    }

    fn single(score: f64) -> (FactorState, RatingDataset) {
        let ds = RatingDataset::from_entries(
            ids(1),
            ids(1),
            vec![Rating {
                user: 0,
                item: 0,
                score,
            }],
        )
        .unwrap();
        let x = FactorState::from_values(1, 1, 1, 0, vec![2.0, 3.0]).unwrap();
        (x, ds)
    }

    fn empty(nu: usize, ni: usize) -> RatingDataset {
        RatingDataset::from_entries(ids(nu), ids(ni), vec![]).unwrap()
    }

    #[test]
    fn init_is_seeded_and_in_range() {
        let a = init_factors(30, 20, 20, 7, 0.0, 0.004).unwrap();
        let b = init_factors(30, 20, 20, 7, 0.0, 0.004).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|&v| (0.0..0.004).contains(&v)));
        assert_ne!(a, init_factors(30, 20, 20, 8, 0.0, 0.004).unwrap());
        assert!(init_factors(3, 3, 2, 0, 0.5, 0.5).is_err());
        assert!(init_factors(3, 3, 0, 0, 0.0, 1.0).is_err());
    }

    #[test]
    fn predict_examples() {
        let x = FactorState::from_values(1, 1, 2, 0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(predict(&x, 0, 0).unwrap(), 11.0);
        let (x, _) = single(5.0);
        assert_eq!(predict(&x, 0, 0).unwrap(), 6.0);
        let z = FactorState::from_values(1, 1, 2, 0, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        assert_eq!(predict(&z, 0, 0).unwrap(), 0.0);
        assert!(matches!(predict(&x, 1, 0), Err(Error::IndexOutOfRange(_))));
    }

    #[test]
    fn loss_examples() {
        let (x, ds) = single(5.0);
        assert_eq!(loss(&x, &ds, 0.0).unwrap(), 0.5);
        assert!((loss(&x, &ds, 0.1).unwrap() - 1.15).abs() < 1e-15);
        assert_eq!(loss(&x, &empty(1, 1), 0.3).unwrap(), 0.0);
    }

    #[test]
    fn loss_overflow_is_divergence() {
        let (mut x, ds) = single(5.0);
        x.values_mut()[0] = 1e200;
        x.values_mut()[1] = 1e200;
        assert!(matches!(loss(&x, &ds, 0.0), Err(Error::Diverged)));
    }

    #[test]
    fn gradient_examples() {
        let (x, ds) = single(5.0);
        assert_eq!(gradient(&x, &ds, 0.0).unwrap(), vec![3.0, 2.0]);
        let (x, ds) = single(6.0);
        assert_eq!(gradient(&x, &ds, 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_of_unrated_row_is_zero() {
        let ds = RatingDataset::from_entries(
            ids(2),
            ids(1),
            vec![Rating {
                user: 0,
                item: 0,
                score: 1.0,
            }],
        )
        .unwrap();
        let x = FactorState::from_values(2, 1, 2, 0, vec![0.3, 0.1, 0.7, 0.2, 0.5, 0.4]).unwrap();
        let g = gradient(&x, &ds, 0.05).unwrap();
        assert_eq!(&g[2..4], &[0.0, 0.0]);
        assert!(g[0] != 0.0);
    }

    #[test]
    fn gn_product_examples() {
        let (x, ds) = single(5.0);
        assert_eq!(
            gn_vector_product(&x, &ds, &[0.0, 0.0], 0.5, 2.0).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            gn_vector_product(&x, &ds, &[1.0, 1.0], 0.0, 0.0).unwrap(),
            vec![15.0, 10.0]
        );
        let v = vec![0.25, -1.5];
        assert_eq!(
            gn_vector_product(&x, &empty(1, 1), &v, 0.0, 1.0).unwrap(),
            v
        );
        assert!(matches!(
            gn_vector_product(&x, &ds, &[1.0], 0.0, 0.0),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn fd_hessian_matches_dense_single_rating() {
        // L = 1/2 (s - a b)^2 + lambda/2 (a^2 + b^2), a = 2, b = 3, s = 5, e = s - ab = -1.
        // H = [[b^2 + l, 2ab - s], [2ab - s, a^2 + l]].
        let (x, ds) = single(5.0);
        let lambda = 0.1;
        let h = [[9.0 + lambda, 7.0], [7.0, 4.0 + lambda]];
        let v = [1.0, 1.0];
        let expect = [h[0][0] + h[0][1], h[1][0] + h[1][1]];
        let got = hvp_fd_oracle(&x, &ds, &v, lambda, 1e-4).unwrap();
        for k in 0..2 {
            assert!((got[k] - expect[k]).abs() < 1e-6, "{got:?}");
        }
        // Gauss–Newton drops the residual term -e (off-diagonal 2ab - s becomes ab).
        let gn = gn_vector_product(&x, &ds, &v, lambda, 0.0).unwrap();
        assert!((gn[0] - (9.0 + lambda + 6.0)).abs() < 1e-12);
        assert!((got[0] - gn[0] - 1.0).abs() < 1e-6);
        assert_eq!(hvp_fd_oracle(&x, &ds, &[0.0, 0.0], lambda, 1e-4).unwrap(), vec![0.0, 0.0]);
        assert!(hvp_fd_oracle(&x, &ds, &v, lambda, 0.0).is_err());
    }

    #[test]
    fn rmse_examples() {
        let ds = RatingDataset::from_entries(
            ids(1),
            ids(2),
            vec![
                Rating { user: 0, item: 0, score: 1.0 },
                Rating { user: 0, item: 1, score: 1.0 },
            ],
        )
        .unwrap();
        let perfect = FactorState::from_values(1, 2, 1, 0, vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(rmse(&perfect, &ds).unwrap(), 0.0);
        let sym = FactorState::from_values(1, 2, 1, 0, vec![1.0, 0.0, 2.0]).unwrap();
        assert_eq!(rmse(&sym, &ds).unwrap(), 1.0);
        let ds34 = RatingDataset::from_entries(
            ids(1),
            ids(2),
            vec![
                Rating { user: 0, item: 0, score: 3.0 },
                Rating { user: 0, item: 1, score: 4.0 },
            ],
        )
        .unwrap();
        let zero = FactorState::zeros(1, 2, 1);
        assert!((rmse(&zero, &ds34).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(rmse(&zero, &empty(1, 2)), Err(Error::EmptySet(_))));
        let huge = FactorState::from_values(1, 2, 1, 0, vec![1e300, 1e300, 1e300]).unwrap();
        assert_eq!(rmse(&huge, &ds).unwrap(), f64::INFINITY);
    }
}

//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use pslf::data::{IdMap, Rating};
use pslf::{loss, FactorState, RatingDataset};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ids(n: usize) -> Arc<IdMap> {
    Arc::new(IdMap::from((0..n).map(|k| format!("id{k}")).collect::<Vec<_>>()))
}

/// A small random instance: at most 5 users, 5 items, D <= 3, density >= 0.5,
/// factors and scores drawn from U[0.1, 1].
pub struct Instance {
    pub x: FactorState,
    pub ds: RatingDataset,
}

pub fn small_instance(rng: &mut ChaCha8Rng) -> Instance {
    let nu = rng.random_range(1..=5usize);
    let ni = rng.random_range(1..=5usize);
    let d = rng.random_range(1..=3usize);
    let mut cells: Vec<(u32, u32)> = (0..nu as u32)
        .flat_map(|u| (0..ni as u32).map(move |i| (u, i)))
        .collect();
    cells.shuffle(rng);
    let density: f64 = rng.random_range(0.5..=1.0);
    let keep = ((density * cells.len() as f64).ceil() as usize).clamp(1, cells.len());
    let entries = cells[..keep]
        .iter()
        .map(|&(user, item)| Rating {
            user,
            item,
            score: rng.random_range(0.1..1.0),
        })
        .collect();
    let ds = RatingDataset::from_entries(ids(nu), ids(ni), entries).unwrap();
    let values = (0..(nu + ni) * d).map(|_| rng.random_range(0.1..1.0)).collect();
    let x = FactorState::from_values(nu, ni, d, 0, values).unwrap();
    Instance { x, ds }
}

/// Replaces every score by the model's own prediction (zero residuals).
pub fn zero_residual(inst: &Instance) -> RatingDataset {
    let d = inst.x.dim();
    let entries = inst
        .ds
        .entries()
        .iter()
        .map(|r| {
            let xu = inst.x.user_row(r.user as usize);
            let xi = inst.x.item_row(r.item as usize);
            Rating {
                score: (0..d).map(|k| xu[k] * xi[k]).sum(),
                ..*r
            }
        })
        .collect();
    RatingDataset::from_entries(
        Arc::clone(inst.ds.user_ids()),
        Arc::clone(inst.ds.item_ids()),
        entries,
    )
    .unwrap()
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Explicit Jacobian of the prediction vector with respect to the flattened factors.
pub fn dense_jacobian(x: &FactorState, ds: &RatingDataset) -> DMatrix<f64> {
    let d = x.dim();
    let nu = x.num_users();
    let mut j = DMatrix::zeros(ds.len(), x.values().len());
    for (k, r) in ds.entries().iter().enumerate() {
        let (u, i) = (r.user as usize, r.item as usize);
        for c in 0..d {
            j[(k, u * d + c)] = x.item_row(i)[c];
            j[(k, (nu + i) * d + c)] = x.user_row(u)[c];
        }
    }
    j
}

/// `J'(J v)` from the explicit Jacobian.
pub fn dense_gn_product(x: &FactorState, ds: &RatingDataset, v: &[f64]) -> Vec<f64> {
    let j = dense_jacobian(x, ds);
    let v = DVector::from_column_slice(v);
    (j.transpose() * (&j * v)).as_slice().to_vec()
}

/// Central finite differences of the loss, one coordinate at a time.
pub fn fd_gradient(x: &FactorState, ds: &RatingDataset, lambda: f64, eps: f64) -> Vec<f64> {
    (0..x.values().len())
        .map(|k| {
            let mut plus = x.clone();
            plus.values_mut()[k] += eps;
            let mut minus = x.clone();
            minus.values_mut()[k] -= eps;
            (loss(&plus, ds, lambda).unwrap() - loss(&minus, ds, lambda).unwrap()) / (2.0 * eps)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `||a - b|| / ||b||`, or the absolute distance when `b` is zero.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(b);
    if scale == 0.0 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Well-conditioned SPD matrix `M'M / n + I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    m.transpose() * &m / n as f64 + DMatrix::identity(n, n)
}

pub fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    a.clone()
        .cholesky()
        .expect("SPD")
        .solve(&DVector::from_column_slice(b))
        .as_slice()
        .to_vec()
}

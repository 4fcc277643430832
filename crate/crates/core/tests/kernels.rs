mod common;

use common::*;
use proptest::prelude::*;
use pslf::{gn_vector_product, gradient, hvp_fd_oracle};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gn_product_matches_dense_jacobian(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = small_instance(&mut r);
        let v = random_vector(&mut r, inst.x.values().len());
        let fast = gn_vector_product(&inst.x, &inst.ds, &v, 0.0, 0.0).unwrap();
        let dense = dense_gn_product(&inst.x, &inst.ds, &v);
        prop_assert!(rel_err(&fast, &dense) <= 1e-10);
    }

    #[test]
    fn gn_product_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let inst = small_instance(&mut r);
        let n = inst.x.values().len();
        let (v1, v2) = (random_vector(&mut r, n), random_vector(&mut r, n));
        let combo: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect();
        let lhs = gn_vector_product(&inst.x, &inst.ds, &combo, 0.05, 2.0).unwrap();
        let w1 = gn_vector_product(&inst.x, &inst.ds, &v1, 0.05, 2.0).unwrap();
        let w2 = gn_vector_product(&inst.x, &inst.ds, &v2, 0.05, 2.0).unwrap();
        let rhs: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
        let scale = norm(&w1).abs() * a.abs() + norm(&w2) * b.abs();
        let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(x, y)| x - y).collect();
        prop_assert!(norm(&diff) <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), reg in prop::bool::ANY) {
        let mut r = rng(seed);
        let inst = small_instance(&mut r);
        let lambda = if reg { 0.05 } else { 0.0 };
        let g = gradient(&inst.x, &inst.ds, lambda).unwrap();
        let fd = fd_gradient(&inst.x, &inst.ds, lambda, 1e-6);
        prop_assert!(rel_err(&g, &fd) <= 1e-5, "{}", rel_err(&g, &fd));
    }

    #[test]
    fn operator_is_symmetric_and_damped(seed in any::<u64>(), lambda in 0.0f64..0.1, gamma in 0.0f64..300.0) {
        let mut r = rng(seed);
        let inst = small_instance(&mut r);
        let n = inst.x.values().len();
        let (v1, v2) = (random_vector(&mut r, n), random_vector(&mut r, n));
        let w1 = gn_vector_product(&inst.x, &inst.ds, &v1, lambda, gamma).unwrap();
        let w2 = gn_vector_product(&inst.x, &inst.ds, &v2, lambda, gamma).unwrap();
        let (a, b) = (dot(&w1, &v2), dot(&v1, &w2));
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300));
        prop_assert!(dot(&v1, &w1) >= gamma * dot(&v1, &v1) - 1e-10);
    }

    #[test]
    fn hessian_equals_gauss_newton_at_zero_residual(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = small_instance(&mut r);
        let exact = zero_residual(&inst);
        let v = random_vector(&mut r, inst.x.values().len());
        let h = hvp_fd_oracle(&inst.x, &exact, &v, 0.0, 1e-4).unwrap();
        let gn = gn_vector_product(&inst.x, &exact, &v, 0.0, 0.0).unwrap();
        prop_assert!(rel_err(&h, &gn) <= 1e-4);
    }
}

#[test]
fn unrated_rows_stay_fixed_under_the_operator() {
    let mut r = rng(4);
    let inst = small_instance(&mut r);
    // Every row here has at least one rating, so check through a fresh user.
    let mut values = inst.x.values().to_vec();
    let d = inst.x.dim();
    values.splice(0..0, std::iter::repeat_n(0.5, d));
    let x = pslf::FactorState::from_values(inst.x.num_users() + 1, inst.x.num_items(), d, 0, values)
        .unwrap();
    let shifted: Vec<_> = inst
        .ds
        .entries()
        .iter()
        .map(|e| pslf::data::Rating { user: e.user + 1, ..*e })
        .collect();
    let ds = pslf::RatingDataset::from_entries(ids(x.num_users()), ids(x.num_items()), shifted).unwrap();
    let v = vec![1.0; x.values().len()];
    let w = gn_vector_product(&x, &ds, &v, 0.1, 0.0).unwrap();
    assert!(w[..d].iter().all(|&c| c == 0.0));
    let g = gradient(&x, &ds, 0.1).unwrap();
    assert!(g[..d].iter().all(|&c| c == 0.0));
}

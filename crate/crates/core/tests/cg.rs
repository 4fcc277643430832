mod common;

use std::cell::Cell;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use pslf::cg::FnOperator;
use pslf::{cg_solve, CgConfig};

fn matrix_operator<'a>(a: &'a DMatrix<f64>, calls: &'a Cell<usize>) -> impl pslf::LinearOperator + 'a {
    let n = a.nrows();
    FnOperator::new(n, move |v: &[f64], out: &mut [f64]| {
        calls.set(calls.get() + 1);
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..n).map(|c| a[(r, c)] * v[c]).sum();
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_direct_solve(seed in any::<u64>(), n in 1usize..=20) {
        let mut r = rng(seed);
        let a = random_spd(&mut r, n);
        let b = random_vector(&mut r, n);
        let calls = Cell::new(0);
        let op = matrix_operator(&a, &calls);
        let cfg = CgConfig { max_iters: n, rel_tol: 1e-12, ..CgConfig::default() };
        let res = cg_solve(&op, &b, &vec![0.0; n], &cfg).unwrap();
        prop_assert!(rel_err(&res.solution, &dense_solve(&a, &b)) <= 1e-8);
        prop_assert!(res.iterations <= n);
        prop_assert!(calls.get() <= cfg.max_iters + 1);
    }

    #[test]
    fn residual_does_not_grow(seed in any::<u64>(), n in 2usize..=20) {
        let mut r = rng(seed);
        let a = random_spd(&mut r, n);
        let b = random_vector(&mut r, n);
        let calls = Cell::new(0);
        let op = matrix_operator(&a, &calls);
        let cfg = CgConfig { max_iters: n, rel_tol: 1e-12, ..CgConfig::default() };
        let res = cg_solve(&op, &b, &vec![0.0; n], &cfg).unwrap();
        for w in res.residual_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9), "{:?}", res.residual_history);
        }
    }

    #[test]
    fn warm_start_budget(seed in any::<u64>(), n in 2usize..=12, budget in 1usize..6) {
        let mut r = rng(seed);
        let a = random_spd(&mut r, n);
        let b = random_vector(&mut r, n);
        let x0 = random_vector(&mut r, n);
        let calls = Cell::new(0);
        let op = matrix_operator(&a, &calls);
        let cfg = CgConfig { max_iters: budget, rel_tol: 1e-14, ..CgConfig::default() };
        let res = cg_solve(&op, &b, &x0, &cfg).unwrap();
        prop_assert!(calls.get() <= budget + 1);
        prop_assert!(res.iterations <= budget);
        prop_assert!(res.final_rel_residual >= 0.0);
    }
}

mod common;

use std::sync::Arc;

use common::*;
use discrete_hj::dhj::{rdhj_residual, GeneratingFunctionSequence};
use discrete_hj::docp::{
    bellman_backward, costate_from_value, lq_value_analytic, pontryagin_residual, rollout, sign_bridge,
    BellmanConfig, ControlBox, Cubic, FnFeedback, GridSpec, LqProblem,
};
use discrete_hj::linhj::{Matrix, QuadraticGeneratingFunction};
use discrete_hj::Vector;
use proptest::prelude::*;
use rand::Rng;

/// Two states, one control, five stages; the square `[-1, 1]²` maps into itself.
fn invariant_lq() -> LqProblem {
    LqProblem::new(
        Matrix::from_row_slice(2, 2, &[0.8, 0.1, 0.0, 0.8]),
        Matrix::from_row_slice(2, 1, &[0.0, 0.1]),
        Matrix::identity(2, 2) * 0.1,
        Matrix::from_element(1, 1, 0.1),
        QuadraticGeneratingFunction::new(Matrix::identity(2, 2), Vector::zeros(2), 0.0).unwrap(),
        5,
    )
    .unwrap()
}

fn random_lq(seed: u64, n: usize, m: usize, horizon: usize) -> LqProblem {
    let mut r = rng(seed);
    let w = Matrix::from_fn(n + m, n + m, |_, _| r.random_range(-0.5..=0.5));
    let mut joint = w.transpose() * &w * 0.5;
    for i in n..n + m {
        joint[(i, i)] += 0.2;
    }
    let terminal_root = Matrix::from_fn(n, n, |_, _| r.random_range(-0.5..=0.5));
    LqProblem {
        f: Matrix::identity(n, n) + Matrix::from_fn(n, n, |_, _| r.random_range(-0.2..=0.2)),
        g: Matrix::from_fn(n, m, |_, _| r.random_range(-1.0..=1.0)),
        e: uniform_vector(&mut r, n, 0.1),
        q: joint.view((0, 0), (n, n)).into_owned(),
        n: joint.view((0, n), (n, m)).into_owned(),
        r: joint.view((n, n), (m, m)).into_owned(),
        q_lin: uniform_vector(&mut r, n, 0.1),
        u_lin: uniform_vector(&mut r, m, 0.1),
        terminal: QuadraticGeneratingFunction::new(
            terminal_root.transpose() * &terminal_root,
            uniform_vector(&mut r, n, 0.2),
            0.3,
        )
        .unwrap(),
        horizon,
    }
    .validated()
    .unwrap()
}

fn optimal_rollout(p: &LqProblem, q0: &Vector) -> (Vec<Vector>, Vec<Vector>, Vec<Vector>, f64) {
    let sol = lq_value_analytic(p).unwrap();
    let ocp = p.to_ocp(ControlBox::symmetric(p.control_dim(), 1e6).unwrap(), q0.clone()).unwrap();
    let law = FnFeedback(move |k, q: &Vector| sol.control(k, q));
    let path = rollout(&ocp, &law, q0, p.horizon).unwrap();
    let values = lq_value_analytic(p).unwrap().values;
    let costates = path.states.iter().zip(&values).map(|(q, j)| -j.gradient(q)).collect();
    (path.states, path.controls, costates, path.cost)
}

#[test]
fn grid_bellman_matches_closed_form() {
    let p = invariant_lq();
    let exact = lq_value_analytic(&p).unwrap().values;
    let ocp = p.to_ocp(ControlBox::symmetric(1, 10.0).unwrap(), Vector::from_column_slice(&[0.5, -0.3])).unwrap();
    let grid = GridSpec::uniform(2, -1.0, 1.0, 61).unwrap();
    let terminal = |q: &Vector| p.terminal.value(q);
    for (cfg, tol) in [
        (BellmanConfig::default(), 1e-3),
        (BellmanConfig { interpolator: Arc::new(Cubic), ..BellmanConfig::default() }, 1e-9),
    ] {
        let sol = bellman_backward(&ocp, &grid, &terminal, &cfg).unwrap();
        let mut worst = 0.0_f64;
        for (k, stage) in sol.values.stages.iter().enumerate() {
            for (node, q) in grid.nodes().iter().enumerate() {
                worst = worst.max((stage[node] - exact[k].value(q)).abs());
            }
        }
        assert!(worst <= tol, "{}: {worst:e}", cfg.interpolator.name());
        assert_eq!(sol.non_concave_nodes, 0);
    }
}

#[test]
fn grid_costates_follow_the_costate_recursion() {
    let p = invariant_lq();
    let q0 = Vector::from_column_slice(&[0.5, -0.3]);
    let ocp = p.to_ocp(ControlBox::symmetric(1, 10.0).unwrap(), q0.clone()).unwrap();
    let grid = GridSpec::uniform(2, -1.0, 1.0, 61).unwrap();
    let cfg = BellmanConfig { interpolator: Arc::new(Cubic), ..BellmanConfig::default() };
    let sol = bellman_backward(&ocp, &grid, &|q: &Vector| p.terminal.value(q), &cfg).unwrap();
    let path = rollout(&ocp, &sol.policy, &q0, 5).unwrap();
    let est = costate_from_value(&sol.values, &path.states).unwrap();
    let mut pk = -p.terminal.gradient(&path.states[5]);
    for k in (0..5).rev() {
        assert!((&est[k + 1].p - &pk).amax() <= 1e-3);
        pk = p.f.transpose() * pk - &p.q * &path.states[k];
    }
    assert!((&est[0].p - &pk).amax() <= 1e-3);
    assert!(est.iter().all(|e| !e.one_sided));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn analytic_costates_satisfy_pontryagin(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=2) {
        let p = random_lq(seed, n, m, 6);
        let q0 = uniform_vector(&mut rng(seed ^ 1), n, 1.0);
        let (states, controls, costates, _) = optimal_rollout(&p, &q0);
        let ocp = p.to_ocp(ControlBox::symmetric(m, 1e6).unwrap(), q0).unwrap();
        prop_assert!(pontryagin_residual(&ocp, &states, &controls, &costates).unwrap() <= 1e-9);
        let mut bent = controls.clone();
        bent[2][0] += 0.1;
        let mut states2 = vec![states[0].clone()];
        for (k, u) in bent.iter().enumerate() {
            states2.push(&p.f * &states2[k] + &p.g * u + &p.e);
        }
        prop_assert!(pontryagin_residual(&ocp, &states2, &bent, &costates).unwrap() >= 1e-3);
    }

    #[test]
    fn value_obeys_the_dynamic_programming_principle(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=2) {
        let p = random_lq(seed, n, m, 4);
        let sol = lq_value_analytic(&p).unwrap();
        let mut r = rng(seed ^ 2);
        for k in 0..4 {
            let q = uniform_vector(&mut r, n, 1.0);
            let j = sol.values[k].value(&q);
            let step = |u: &Vector| {
                let qn = &p.f * &q + &p.g * u + &p.e;
                0.5 * q.dot(&(&p.q * &q)) + q.dot(&(&p.n * u)) + 0.5 * u.dot(&(&p.r * u)) + p.q_lin.dot(&q) + p.u_lin.dot(u)
                    + sol.values[k + 1].value(&qn)
            };
            let best = sol.control(k, &q);
            prop_assert!((step(&best) - j).abs() <= 1e-9 * (1.0 + j.abs()));
            for _ in 0..50 {
                let u = &best + uniform_vector(&mut r, m, 1.0);
                prop_assert!(step(&u) >= j - 1e-9 * (1.0 + j.abs()));
            }
        }
    }

    #[test]
    fn scaling_costs_scales_values_only(seed in any::<u64>(), n in 1usize..=3) {
        let p = random_lq(seed, n, 1, 4);
        let base = lq_value_analytic(&p).unwrap();
        let scaled = lq_value_analytic(&p.scaled_cost(4.0)).unwrap();
        for (a, b) in base.values.iter().zip(&scaled.values) {
            prop_assert!((&a.a * 4.0 - &b.a).amax() <= 1e-10 * (1.0 + b.a.amax()));
            prop_assert!((a.c * 4.0 - b.c).abs() <= 1e-10 * (1.0 + b.c.abs()));
        }
        for (a, b) in base.gains.iter().zip(&scaled.gains) {
            prop_assert!((&a.0 - &b.0).amax() <= 1e-10 && (&a.1 - &b.1).amax() <= 1e-10);
        }
    }

    #[test]
    fn negated_values_solve_the_right_dhj(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=2) {
        let p = random_lq(seed, n, m, 5);
        let h = p.control_hamiltonian().unwrap();
        let sol = lq_value_analytic(&p).unwrap();
        let s = sign_bridge(&sol.values, 2.5);
        let q0 = uniform_vector(&mut rng(seed ^ 3), n, 1.0);
        let (states, _, costates, cost) = optimal_rollout(&p, &q0);
        for k in 0..5 {
            let res = rdhj_residual(&s, &h, k, &states[k], &states[k + 1]).unwrap();
            prop_assert!(res.abs() <= 1e-8, "k={k}: {res:e}");
            prop_assert!((s.gradient(k, &states[k]).unwrap() - &costates[k]).amax() <= 1e-12);
        }
        let total = cost + p.terminal.value(&states[5]);
        prop_assert!((total - sol.values[0].value(&q0)).abs() <= 1e-9 * (1.0 + total.abs()));
    }
}

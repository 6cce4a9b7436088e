mod common;

use common::*;
use discrete_hj::galerkin::{
    discrete_cost, discrete_dynamics, galerkin_control_hamiltonian, heisenberg_fd_closed_form, heisenberg_system,
    k_functional, momentum_stationarity_residual, rk4_reference, solve_internal_velocities, stage_states,
    ControlSystem, GalerkinTableau,
};
use discrete_hj::linhj::Matrix;
use discrete_hj::newton::fd_gradient;
use discrete_hj::registry::double_integrator;
use discrete_hj::{NewtonConfig, Vector};
use proptest::prelude::*;
use rand::Rng;

fn systems() -> Vec<std::sync::Arc<dyn ControlSystem>> {
    vec![heisenberg_system(), double_integrator()]
}

#[test]
fn one_stage_is_forward_euler() {
    let cfg = NewtonConfig::default();
    let tab = GalerkinTableau::euler();
    let mut r = rng(5);
    for sys in systems() {
        for _ in 0..100 {
            let (n, m) = (sys.state_dim(), sys.control_dim());
            let q = uniform_vector(&mut r, n, 2.0);
            let u = uniform_vector(&mut r, m, 2.0);
            let h = r.random_range(1e-3..=0.5);
            let fd = discrete_dynamics(sys.as_ref(), &tab, &q, std::slice::from_ref(&u), h, &cfg).unwrap();
            assert!((&fd - (&q + sys.f(&q, &u) * h)).amax() <= 1e-14);
            let cd = discrete_cost(sys.as_ref(), &tab, &q, std::slice::from_ref(&u), h, &cfg).unwrap();
            assert!((cd - h * sys.cost(&q, &u)).abs() <= 1e-14);
        }
    }
}

#[test]
fn two_stage_tableau_coefficients() {
    let tab = GalerkinTableau::stormer_verlet();
    assert_eq!(tab.big_b.as_slice(), &[1.0, 0.0]);
    assert_eq!(tab.a, Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]));
    assert_eq!(tab.m, Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]));
    assert!(tab.coefficient_defect().unwrap() < 1e-14);
    assert!(GalerkinTableau::euler().coefficient_defect().unwrap() < 1e-15);
}

#[test]
fn two_stage_cost_example() {
    let cfg = NewtonConfig::default();
    let sys = heisenberg_system();
    let tab = GalerkinTableau::stormer_verlet();
    let u = [v(&[1.0, 0.0]), v(&[0.0, 1.0])];
    let c = discrete_cost(sys.as_ref(), &tab, &v(&[0.0, 0.0, 0.0]), &u, 0.2, &cfg).unwrap();
    assert!((c - 0.1).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn two_stage_heisenberg_matches_closed_form(seed in any::<u64>()) {
        let cfg = NewtonConfig::default();
        let mut r = rng(seed);
        let q = uniform_vector(&mut r, 3, 2.0);
        let u = [uniform_vector(&mut r, 2, 2.0), uniform_vector(&mut r, 2, 2.0)];
        let h = r.random_range(1e-3..=0.5);
        let fd = discrete_dynamics(heisenberg_system().as_ref(), &GalerkinTableau::stormer_verlet(), &q, &u, h, &cfg).unwrap();
        prop_assert!((fd - heisenberg_fd_closed_form(&q, &u[0], &u[1], h)).amax() <= 1e-10);
    }

    #[test]
    fn k_functional_equals_the_hamiltonian_for_any_multipliers(seed in any::<u64>(), two in any::<bool>()) {
        let cfg = NewtonConfig::default();
        let mut r = rng(seed);
        let tab = if two { GalerkinTableau::stormer_verlet() } else { GalerkinTableau::euler() };
        for sys in systems() {
            let (n, m, s) = (sys.state_dim(), sys.control_dim(), tab.stages());
            let q0 = uniform_vector(&mut r, n, 1.0);
            let p1 = uniform_vector(&mut r, n, 1.0);
            let u: Vec<Vector> = (0..s).map(|_| uniform_vector(&mut r, m, 1.0)).collect();
            let h = r.random_range(1e-2..=0.5);
            let st = solve_internal_velocities(sys.as_ref(), &tab, &q0, &u, h, &cfg).unwrap();
            let ps: Vec<Vector> = (0..s).map(|_| uniform_vector(&mut r, n, 5.0)).collect();
            let k = k_functional(sys.as_ref(), &tab, &q0, &p1, &st.w, &ps, &u, h).unwrap();
            let hd = galerkin_control_hamiltonian(sys.as_ref(), &tab, &q0, &p1, &u, h, &cfg).unwrap();
            prop_assert!((k - hd).abs() <= 1e-12 * (1.0 + hd.abs()), "{k} vs {hd}");
            let q = stage_states(&tab, &q0, &st.w, h);
            prop_assert!(q.iter().zip(&st.q_stages).all(|(a, b)| (a - b).amax() <= 1e-12));
        }
    }

    #[test]
    fn stationary_multipliers_give_the_hamiltonian_gradient(seed in any::<u64>(), two in any::<bool>()) {
        let cfg = NewtonConfig::default();
        let mut r = rng(seed);
        let tab = if two { GalerkinTableau::stormer_verlet() } else { GalerkinTableau::euler() };
        for sys in systems() {
            let (n, m, s) = (sys.state_dim(), sys.control_dim(), tab.stages());
            let q0 = uniform_vector(&mut r, n, 1.0);
            let p1 = uniform_vector(&mut r, n, 1.0);
            let u: Vec<Vector> = (0..s).map(|_| uniform_vector(&mut r, m, 1.0)).collect();
            let h = r.random_range(1e-2..=0.5);
            let st = solve_internal_velocities(sys.as_ref(), &tab, &q0, &u, h, &cfg).unwrap();
            let df: Vec<Matrix> = (0..s).map(|i| sys.f_jacobian(&st.q_stages[i], &u[i]).unwrap()).collect();
            let dc: Vec<Vector> = (0..s)
                .map(|i| fd_gradient(|x| sys.cost(x, &u[i]), &st.q_stages[i], &cfg).unwrap())
                .collect();
            // Stationarity in w is linear in the stage multipliers.
            let mut lhs = Matrix::zeros(s * n, s * n);
            let mut rhs = Vector::zeros(s * n);
            for j in 0..s {
                let mut rj = &p1 * tab.big_b[j];
                for i in 0..s {
                    let block = (Matrix::identity(n, n) * tab.m[(i, j)] - df[i].transpose() * (h * tab.a[(i, j)])) * tab.b[i];
                    lhs.view_mut((j * n, i * n), (n, n)).copy_from(&block);
                    rj -= &dc[i] * (h * tab.a[(i, j)] * tab.b[i]);
                }
                rhs.rows_mut(j * n, n).copy_from(&rj);
            }
            let sol = lhs.lu().solve(&rhs).unwrap();
            let ps: Vec<Vector> = (0..s).map(|i| sol.rows(i * n, n).into_owned()).collect();
            prop_assert!(momentum_stationarity_residual(sys.as_ref(), &tab, &p1, &st, &ps, h).unwrap() <= 1e-9);
            let mut p0 = p1.clone();
            for i in 0..s {
                p0 -= (&dc[i] - df[i].transpose() * &ps[i]) * (h * tab.b[i]);
            }
            let numeric = fd_gradient(
                |x| galerkin_control_hamiltonian(sys.as_ref(), &tab, x, &p1, &u, h, &cfg).unwrap(),
                &q0,
                &cfg,
            )
            .unwrap();
            prop_assert!((&p0 - &numeric).amax() <= 1e-7, "{p0} vs {numeric}");
        }
    }
}

#[test]
fn local_errors_have_the_expected_order() {
    let cfg = NewtonConfig::default();
    let sys = heisenberg_system();
    let control = |t: f64| v(&[t.cos(), (2.0 * t).sin()]);
    let q0 = v(&[0.2, -0.1, 0.0]);
    for (tab, order) in [(GalerkinTableau::euler(), 2.0), (GalerkinTableau::stormer_verlet(), 3.0)] {
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| {
                let u: Vec<Vector> = tab.c.iter().map(|c| control(c * h)).collect();
                let one = discrete_dynamics(sys.as_ref(), &tab, &q0, &u, h, &cfg).unwrap();
                let exact = rk4_reference(sys.as_ref(), &control, &q0, h, 2000).unwrap();
                (one - exact).amax()
            })
            .collect();
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - order).abs() <= 0.2, "{}: slope {slope}", tab.name);
        }
    }
}

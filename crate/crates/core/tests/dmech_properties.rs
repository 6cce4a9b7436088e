mod common;

use common::*;
use discrete_hj::dmech::{integrate, step_left, step_right, symplecticity_defect};
use discrete_hj::models::{HamiltonianModel, HenonHeiles, Nonseparable, Pendulum, Shear};
use discrete_hj::{DiscreteHamiltonian, NewtonConfig, PhasePoint};
use proptest::prelude::*;

fn models() -> Vec<Box<dyn HamiltonianModel>> {
    vec![Box::new(Shear { dim: 2 }), Box::new(Pendulum), Box::new(HenonHeiles), Box::new(Nonseparable)]
}

#[test]
fn nonlinear_steps_are_symplectic() {
    let cfg = NewtonConfig::default();
    let mut r = rng(3);
    for model in models() {
        let h = model.right(model.default_step());
        for _ in 0..20 {
            let n = model.dim();
            let z = PhasePoint::new(uniform_vector(&mut r, n, 1.0), uniform_vector(&mut r, n, 1.0)).unwrap();
            let defect = symplecticity_defect(|z| step_right(&h, z, &z.p, &cfg), &z).unwrap();
            assert!(defect <= 1e-6, "{}: {defect:e}", model.name());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn left_and_right_forms_trace_the_same_orbit(seed in any::<u64>(), n in 1usize..=3) {
        let cfg = NewtonConfig::default();
        let mut r = rng(seed);
        let qdh = random_qdh(&mut r, n, 0.1);
        let z0 = PhasePoint::new(uniform_vector(&mut r, n, 1.0), uniform_vector(&mut r, n, 1.0)).unwrap();
        let left = integrate(&DiscreteHamiltonian::Left(qdh.to_left()), &z0, 8, &cfg).unwrap();
        let right = integrate(&DiscreteHamiltonian::Right(qdh.to_right().unwrap()), &z0, 8, &cfg).unwrap();
        for (a, b) in left.points.iter().zip(&right.points) {
            prop_assert!((&a.q - &b.q).amax() <= 1e-8 && (&a.p - &b.p).amax() <= 1e-8);
        }
    }

    #[test]
    fn left_step_of_a_quadratic_system_is_symplectic(seed in any::<u64>(), n in 1usize..=3) {
        let cfg = NewtonConfig::default();
        let mut r = rng(seed);
        let hl = random_qdh(&mut r, n, 0.1).to_left();
        let z = PhasePoint::new(uniform_vector(&mut r, n, 1.0), uniform_vector(&mut r, n, 1.0)).unwrap();
        let defect = symplecticity_defect(|z| step_left(&hl, z, &z.q, &cfg), &z).unwrap();
        prop_assert!(defect <= 1e-6, "{defect:e}");
    }
}

#[test]
fn shear_orbit() {
    let cfg = NewtonConfig::default();
    let h = Shear { dim: 1 }.right(1.0);
    let t = integrate(&DiscreteHamiltonian::Right(h), &PhasePoint::from_slices(&[1.0], &[2.0]).unwrap(), 3, &cfg).unwrap();
    let qs: Vec<f64> = t.points.iter().map(|z| z.q[0]).collect();
    assert_eq!(qs, vec![1.0, 3.0, 5.0, 7.0]);
    assert!(t.points.iter().all(|z| z.p[0] == 2.0));
}

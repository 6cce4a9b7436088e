#![allow(dead_code)]

use discrete_hj::linhj::{Matrix, QuadraticGeneratingFunction, QuadraticLeftHamiltonian};
use discrete_hj::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-r..=r))
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.random_range(-r..=r))
}

pub fn symmetric(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Matrix {
    let a = uniform_matrix(rng, n, r);
    (&a + a.transpose()) * 0.5
}

/// A symplectic-Euler-like quadratic system with step `h`: `M = (I + S)/h`
/// with a small symmetric `S`, `K = h K₀`, `L = −I + small`.
pub fn random_qdh(rng: &mut ChaCha8Rng, n: usize, h: f64) -> QuadraticLeftHamiltonian {
    let eye = Matrix::identity(n, n);
    let m = (&eye + symmetric(rng, n, 0.3 / n as f64)) / h;
    let k = symmetric(rng, n, 1.0) * h;
    let l = -&eye + uniform_matrix(rng, n, 0.2 / n as f64);
    QuadraticLeftHamiltonian::new(m, k, l).expect("well-conditioned instance")
}

pub fn random_quadratic(rng: &mut ChaCha8Rng, n: usize) -> QuadraticGeneratingFunction {
    QuadraticGeneratingFunction::new(symmetric(rng, n, 0.5), uniform_vector(rng, n, 1.0), rng.random_range(-1.0..=1.0))
        .expect("finite data")
}

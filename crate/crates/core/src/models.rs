//! Built-in discrete Hamiltonians with analytic partials.

use crate::linhj::QuadraticLeftHamiltonian;
use crate::linhj::Matrix;
use crate::types::{DiscreteHamiltonianLeft, DiscreteHamiltonianRight, Vector};

/// A family of discrete Hamiltonians parametrized by the step size.
pub trait HamiltonianModel: Send + Sync {
    fn name(&self) -> &str;

    fn description(&self) -> &str;

    fn dim(&self) -> usize;

    fn default_step(&self) -> f64;

    fn right(&self, h: f64) -> DiscreteHamiltonianRight;

    /// Left form, when the model has one.
    fn left(&self, _h: f64) -> Option<DiscreteHamiltonianLeft> {
        None
    }
}

/// `H⁺ = q·p' + (h/2)‖p'‖²`, the shear `q' = q + h p`, `p' = p`.
#[derive(Debug, Clone, Copy)]
pub struct Shear {
    pub dim: usize,
}

impl HamiltonianModel for Shear {
    fn name(&self) -> &str {
        "shear"
    }

    fn description(&self) -> &str {
        "free particle: q' = q + h p, p' = p"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn default_step(&self) -> f64 {
        1.0
    }

    fn right(&self, h: f64) -> DiscreteHamiltonianRight {
        DiscreteHamiltonianRight::new(move |q, p| q.dot(p) + 0.5 * h * p.norm_squared())
            .with_d1(|_, p| p.clone())
            .with_d2(move |q, p| q + p * h)
    }

    /// `H⁻ = (h/2)‖p‖² − p·q'`.
    fn left(&self, h: f64) -> Option<DiscreteHamiltonianLeft> {
        let n = self.dim;
        QuadraticLeftHamiltonian::new(Matrix::identity(n, n) / h, Matrix::zeros(n, n), -Matrix::identity(n, n))
            .ok()
            .map(|qdh| qdh.to_left())
    }
}

/// Symplectic Euler for `H = ½p² − cos q`.
#[derive(Debug, Clone, Copy)]
pub struct Pendulum;

impl HamiltonianModel for Pendulum {
    fn name(&self) -> &str {
        "pendulum"
    }

    fn description(&self) -> &str {
        "pendulum H = p^2/2 - cos q, symplectic Euler"
    }

    fn dim(&self) -> usize {
        1
    }

    fn default_step(&self) -> f64 {
        0.1
    }

    fn right(&self, h: f64) -> DiscreteHamiltonianRight {
        DiscreteHamiltonianRight::new(move |q, p| q[0] * p[0] + h * (0.5 * p[0] * p[0] - q[0].cos()))
            .with_d1(move |q, p| Vector::from_element(1, p[0] + h * q[0].sin()))
            .with_d2(move |q, p| Vector::from_element(1, q[0] + h * p[0]))
    }
}

fn henon_heiles_gradient(q: &Vector) -> Vector {
    let (x, y) = (q[0], q[1]);
    Vector::from_column_slice(&[x + 2.0 * x * y, y + x * x - y * y])
}

/// Symplectic Euler for the Hénon–Heiles potential
/// `V = ½(x² + y²) + x²y − y³/3`.
#[derive(Debug, Clone, Copy)]
pub struct HenonHeiles;

impl HamiltonianModel for HenonHeiles {
    fn name(&self) -> &str {
        "henon_heiles"
    }

    fn description(&self) -> &str {
        "Henon-Heiles potential in two degrees of freedom, symplectic Euler"
    }

    fn dim(&self) -> usize {
        2
    }

    fn default_step(&self) -> f64 {
        0.1
    }

    fn right(&self, h: f64) -> DiscreteHamiltonianRight {
        DiscreteHamiltonianRight::new(move |q, p| {
            let (x, y) = (q[0], q[1]);
            let v = 0.5 * (x * x + y * y) + x * x * y - y * y * y / 3.0;
            q.dot(p) + h * (0.5 * p.norm_squared() + v)
        })
        .with_d1(move |q, p| p + henon_heiles_gradient(q) * h)
        .with_d2(move |q, p| q + p * h)
    }
}

/// `H⁺ = q·p' + h H(q, p')` with the non-separable
/// `H = ½p² + ½q² + ¼q²p²`, so each step is implicit in `p'`.
#[derive(Debug, Clone, Copy)]
pub struct Nonseparable;

impl HamiltonianModel for Nonseparable {
    fn name(&self) -> &str {
        "nonseparable"
    }

    fn description(&self) -> &str {
        "H = p^2/2 + q^2/2 + q^2 p^2/4, implicit symplectic Euler"
    }

    fn dim(&self) -> usize {
        1
    }

    fn default_step(&self) -> f64 {
        0.1
    }

    fn right(&self, h: f64) -> DiscreteHamiltonianRight {
        DiscreteHamiltonianRight::new(move |q, p| {
            let (q, p) = (q[0], p[0]);
            q * p + h * (0.5 * p * p + 0.5 * q * q + 0.25 * q * q * p * p)
        })
        .with_d1(move |q, p| {
            let (q, p) = (q[0], p[0]);
            Vector::from_element(1, p + h * (q + 0.5 * q * p * p))
        })
        .with_d2(move |q, p| {
            let (q, p) = (q[0], p[0]);
            Vector::from_element(1, q + h * (p + 0.5 * q * q * p))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newton::NewtonConfig;

    #[test]
    fn analytic_partials_agree_with_differences() {
        let cfg = NewtonConfig::default();
        let models: Vec<Box<dyn HamiltonianModel>> = vec![
            Box::new(Shear { dim: 2 }),
            Box::new(Pendulum),
            Box::new(HenonHeiles),
            Box::new(Nonseparable),
        ];
        for m in models {
            let n = m.dim();
            let q = Vector::from_fn(n, |i, _| 0.3 - 0.2 * i as f64);
            let p = Vector::from_fn(n, |i, _| -0.7 + 0.5 * i as f64);
            let defect = m.right(m.default_step()).partial_defect(&q, &p, &cfg).unwrap();
            assert!(defect < 1e-8, "{}: {defect}", m.name());
        }
    }

    #[test]
    fn shear_left_form() {
        let h = Shear { dim: 1 }.left(1.0).unwrap();
        let p = Vector::from_element(1, 2.0);
        let qn = Vector::from_element(1, 3.0);
        assert_eq!(h.value(&p, &qn).unwrap(), 2.0 - 6.0);
    }
}

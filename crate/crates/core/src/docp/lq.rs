//! Linear-quadratic problems: closed-form cost-to-go, the sign bridge to
//! generating functions, and the analytic optimal control Hamiltonian.

use nalgebra::DMatrix;

use super::optimize::ControlBox;
use super::{DiscreteOCP, StageModel};
use crate::dhj::QuadraticSequence;
use crate::error::{Error, Result};
use crate::linhj::{Matrix, QuadraticGeneratingFunction};
use crate::types::{DiscreteHamiltonianRight, Vector};

/// `f_d = Fq + Gu + e`, `C_d = ½qᵀQq + qᵀNu + ½uᵀRu + q_linᵀq + u_linᵀu`, and a
/// quadratic terminal cost `J^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqProblem {
    pub f: Matrix,
    pub g: Matrix,
    pub e: Vector,
    pub q: Matrix,
    pub n: Matrix,
    pub r: Matrix,
    pub q_lin: Vector,
    pub u_lin: Vector,
    pub terminal: QuadraticGeneratingFunction,
    pub horizon: usize,
}

fn check_shape(name: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

impl LqProblem {
    /// Homogeneous problem with no affine or linear terms.
    pub fn new(f: Matrix, g: Matrix, q: Matrix, r: Matrix, terminal: QuadraticGeneratingFunction, horizon: usize) -> Result<Self> {
        let (n, m) = (f.nrows(), g.ncols());
        Self {
            e: Vector::zeros(n),
            n: Matrix::zeros(n, m),
            q_lin: Vector::zeros(n),
            u_lin: Vector::zeros(m),
            f,
            g,
            q,
            r,
            terminal,
            horizon,
        }
        .validated()
    }

    pub fn validated(mut self) -> Result<Self> {
        let (n, m) = (self.f.nrows(), self.g.ncols());
        check_shape("F", &self.f, n, n)?;
        check_shape("G", &self.g, n, m)?;
        check_shape("Q", &self.q, n, n)?;
        check_shape("N", &self.n, n, m)?;
        check_shape("R", &self.r, m, m)?;
        if self.e.len() != n || self.q_lin.len() != n || self.u_lin.len() != m || self.terminal.dim() != n {
            return Err(Error::Dimension("LQ vector terms have inconsistent lengths".into()));
        }
        if self.horizon < 1 {
            return Err(Error::Invalid("horizon N must be at least 1".into()));
        }
        self.q = symmetrize(&self.q);
        self.r = symmetrize(&self.r);
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.g.ncols()
    }

    /// Multiplies every cost term, terminal included, by `factor`.
    pub fn scaled_cost(&self, factor: f64) -> Self {
        Self {
            q: &self.q * factor,
            n: &self.n * factor,
            r: &self.r * factor,
            q_lin: &self.q_lin * factor,
            u_lin: &self.u_lin * factor,
            terminal: self.terminal.scaled(factor),
            ..self.clone()
        }
    }

    /// The joint cost Hessian `[[Q, N], [Nᵀ, R]]` must be positive semidefinite
    /// and `R` positive definite.
    pub fn check_convex(&self) -> Result<()> {
        let (n, m) = (self.state_dim(), self.control_dim());
        let mut joint = DMatrix::zeros(n + m, n + m);
        joint.view_mut((0, 0), (n, n)).copy_from(&self.q);
        joint.view_mut((0, n), (n, m)).copy_from(&self.n);
        joint.view_mut((n, 0), (m, n)).copy_from(&self.n.transpose());
        joint.view_mut((n, n), (m, m)).copy_from(&self.r);
        let scale = joint.amax().max(1.0);
        let lowest = joint.symmetric_eigenvalues().min();
        if lowest < -1e-12 * scale {
            return Err(Error::NonConvex(format!(
                "stage cost Hessian has eigenvalue {lowest:e}"
            )));
        }
        if self.r.clone().cholesky().is_none() {
            return Err(Error::NonConvex("control weight R is not positive definite".into()));
        }
        Ok(())
    }

    pub fn to_ocp(&self, control_box: ControlBox, q0: Vector) -> Result<DiscreteOCP> {
        DiscreteOCP::new(std::sync::Arc::new(self.clone()), self.horizon, control_box, q0)
    }

    /// Unconstrained maximizer of `Ĥ(q, p', ·)`: `u* = R⁻¹(Gᵀp' − Nᵀq − u_lin)`.
    pub fn hamiltonian_maximizer(&self, q: &Vector, p: &Vector) -> Result<Vector> {
        let chol = self
            .r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NonConvex("control weight R is not positive definite".into()))?;
        Ok(chol.solve(&(self.g.transpose() * p - self.n.transpose() * q - &self.u_lin)))
    }

    /// `H⁺(q, p') = max_u [p'·f_d(q, u) − C_d(q, u)]` in closed form.
    pub fn control_hamiltonian(&self) -> Result<DiscreteHamiltonianRight> {
        self.check_convex()?;
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        Ok(DiscreteHamiltonianRight::new(move |q, p| {
            let u = a.hamiltonian_maximizer(q, p).expect("convexity checked");
            p.dot(&a.affine_dynamics(q, &u)) - a.quadratic_cost(q, &u)
        })
        .with_d1(move |q, p| {
            let u = b.hamiltonian_maximizer(q, p).expect("convexity checked");
            b.f.transpose() * p - (&b.q * q + &b.n * &u + &b.q_lin)
        })
        .with_d2(move |q, p| {
            let u = c.hamiltonian_maximizer(q, p).expect("convexity checked");
            c.affine_dynamics(q, &u)
        }))
    }

    fn affine_dynamics(&self, q: &Vector, u: &Vector) -> Vector {
        &self.f * q + &self.g * u + &self.e
    }

    fn quadratic_cost(&self, q: &Vector, u: &Vector) -> f64 {
        0.5 * q.dot(&(&self.q * q)) + q.dot(&(&self.n * u)) + 0.5 * u.dot(&(&self.r * u)) + self.q_lin.dot(q) + self.u_lin.dot(u)
    }
}

impl StageModel for LqProblem {
    fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    fn control_dim(&self) -> usize {
        self.g.ncols()
    }

    fn dynamics(&self, q: &Vector, u: &Vector) -> Result<Vector> {
        Ok(self.affine_dynamics(q, u))
    }

    fn cost(&self, q: &Vector, u: &Vector) -> Result<f64> {
        Ok(self.quadratic_cost(q, u))
    }

    fn dynamics_jacobians(&self, _q: &Vector, _u: &Vector) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((self.f.clone(), self.g.clone()))
    }

    fn cost_gradients(&self, q: &Vector, u: &Vector) -> Result<(Vector, Vector)> {
        Ok((
            &self.q * q + &self.n * u + &self.q_lin,
            &self.r * u + self.n.transpose() * q + &self.u_lin,
        ))
    }
}

/// Closed-form cost-to-go and the affine optimal feedback of each stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LqSolution {
    /// `J^0..J^N` as `½qᵀPq + sᵀq + r`.
    pub values: Vec<QuadraticGeneratingFunction>,
    /// `u*_k(q) = K_k q + k_k`.
    pub gains: Vec<(Matrix, Vector)>,
}

impl LqSolution {
    pub fn control(&self, k: usize, q: &Vector) -> Vector {
        let (gain, offset) = &self.gains[k];
        gain * q + offset
    }
}

/// Backward recursion for the LQ cost-to-go:
/// `P' = Q + FᵀPF − H_uqᵀH_uu⁻¹H_uq` with `H_uu = R + GᵀPG`, `H_uq = GᵀPF + Nᵀ`,
/// plus the matching linear and constant terms.
pub fn lq_value_analytic(problem: &LqProblem) -> Result<LqSolution> {
    problem.check_convex()?;
    let n_stages = problem.horizon;
    let mut values = vec![problem.terminal.clone(); n_stages + 1];
    let mut gains = vec![(Matrix::zeros(0, 0), Vector::zeros(0)); n_stages];
    let (f, g, e) = (&problem.f, &problem.g, &problem.e);
    for k in (0..n_stages).rev() {
        let next = &values[k + 1];
        let (p, s, r) = (&next.a, &next.b, next.c);
        let pe_s = p * e + s;
        let h_uu = &problem.r + g.transpose() * p * g;
        let h_uq = g.transpose() * p * f + problem.n.transpose();
        let h_u = g.transpose() * &pe_s + &problem.u_lin;
        let chol = h_uu.clone().cholesky().ok_or_else(|| {
            Error::NonConvex(format!("stage {k} control Hessian R + GᵀPG is not positive definite"))
        })?;
        let gain = -chol.solve(&h_uq);
        let offset = -chol.solve(&h_u);
        let a = &problem.q + f.transpose() * p * f + h_uq.transpose() * &gain;
        let b = f.transpose() * &pe_s + &problem.q_lin + h_uq.transpose() * &offset;
        let c = r + 0.5 * e.dot(&(p * e)) + s.dot(e) + 0.5 * h_u.dot(&offset);
        values[k] = QuadraticGeneratingFunction::new(a, b, c)?;
        gains[k] = (gain, offset);
    }
    Ok(LqSolution { values, gains })
}

/// `μ‖q − t‖²` as a quadratic: `A = 2μI`, `b = −2μt`, `c = μ‖t‖²`.
pub fn terminal_penalty(target: &Vector, mu: f64) -> Result<QuadraticGeneratingFunction> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Invalid(format!("penalty weight must be non-negative, got {mu}")));
    }
    let n = target.len();
    QuadraticGeneratingFunction::new(Matrix::identity(n, n) * (2.0 * mu), target * (-2.0 * mu), mu * target.norm_squared())
}

/// `S^k = S* − J^k`, turning cost-to-go into generating functions of the
/// optimal control Hamiltonian.
pub fn sign_bridge(values: &[QuadraticGeneratingFunction], s_star: f64) -> QuadraticSequence {
    QuadraticSequence(
        values
            .iter()
            .map(|j| QuadraticGeneratingFunction {
                a: -&j.a,
                b: -&j.b,
                c: s_star - j.c,
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m1(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }

    fn one_stage(terminal: f64) -> LqProblem {
        let t = QuadraticGeneratingFunction::new(m1(terminal), Vector::zeros(1), 0.0).unwrap();
        LqProblem::new(m1(1.0), m1(1.0), m1(1.0), m1(1.0), t, 1).unwrap()
    }

    #[test]
    fn one_stage_coefficients() {
        let sol = lq_value_analytic(&one_stage(1.0)).unwrap();
        assert_abs_diff_eq!(sol.values[0].a[(0, 0)], 1.5, epsilon = 1e-15);
        assert_eq!(sol.values[0].b[0], 0.0);
        assert_eq!(sol.values[0].c, 0.0);
        assert_abs_diff_eq!(sol.gains[0].0[(0, 0)], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_cost_gives_zero_values() {
        let mut p = one_stage(0.0);
        p.q = m1(0.0);
        p.horizon = 3;
        let sol = lq_value_analytic(&p).unwrap();
        assert!(sol.values.iter().all(|j| j.a.amax() == 0.0 && j.b.amax() == 0.0 && j.c == 0.0));
    }

    #[test]
    fn rejects_non_convex() {
        let mut p = one_stage(1.0);
        p.r = m1(-1.0);
        assert!(matches!(lq_value_analytic(&p), Err(Error::NonConvex(_))));
    }

    #[test]
    fn penalty_value() {
        let t = Vector::from_column_slice(&[1.0, -2.0]);
        let pen = terminal_penalty(&t, 3.0).unwrap();
        let q = Vector::from_column_slice(&[0.5, 0.5]);
        assert_abs_diff_eq!(pen.value(&q), 3.0 * (0.25 + 6.25), epsilon = 1e-12);
    }

    #[test]
    fn maximizer_matches_stationarity() {
        let p = one_stage(1.0);
        let u = p.hamiltonian_maximizer(&Vector::from_element(1, 0.3), &Vector::from_element(1, 2.0)).unwrap();
        assert_eq!(u[0], 2.0);
    }
}

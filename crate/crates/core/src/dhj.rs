//! Discrete Hamilton–Jacobi equations: residuals of the right, left and
//! Lagrangian forms, the implicit maps `f±_k`, Jacobi's solution, and the
//! regeneration of trajectories from a known solution.

use std::fmt;
use std::sync::Arc;

use crate::dmech::{action_sum_right, integrate, Trajectory, STEP_RESIDUAL_TOL};
use crate::error::{Error, Result, ResultExt};
use crate::linhj::{QuadraticGeneratingFunction, LINEAR_SINGULAR_CONDITION};
use crate::newton::{condition_number, fd_gradient, fd_jacobian, newton_solve, NewtonConfig};
use crate::types::{
    DiscreteHamiltonian, DiscreteHamiltonianLeft, DiscreteHamiltonianRight, DiscreteLagrangian,
    PhasePoint, Vector,
};

/// A sequence `S^0, ..., S^N` of differentiable functions on configuration space.
pub trait GeneratingFunctionSequence: Send + Sync {
    /// Number of entries, `N + 1`.
    fn len(&self) -> usize;

    fn value(&self, k: usize, q: &Vector) -> Result<f64>;

    fn gradient(&self, k: usize, q: &Vector) -> Result<Vector>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_index(seq: &dyn GeneratingFunctionSequence, k: usize) -> Result<()> {
    if k >= seq.len() {
        return Err(Error::Invalid(format!(
            "generating function index {k} out of range (sequence has {} entries)",
            seq.len()
        )));
    }
    Ok(())
}

/// Closed-form quadratic entries, as produced by the Riccati recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSequence(pub Vec<QuadraticGeneratingFunction>);

impl GeneratingFunctionSequence for QuadraticSequence {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn value(&self, k: usize, q: &Vector) -> Result<f64> {
        check_index(self, k)?;
        Ok(self.0[k].value(q))
    }

    fn gradient(&self, k: usize, q: &Vector) -> Result<Vector> {
        check_index(self, k)?;
        Ok(self.0[k].gradient(q))
    }
}

type IndexedScalar = Arc<dyn Fn(usize, &Vector) -> f64 + Send + Sync>;
type IndexedGradient = Arc<dyn Fn(usize, &Vector) -> Vector + Send + Sync>;

/// Entries given by a closure; the gradient defaults to central differences.
#[derive(Clone)]
pub struct FnSequence {
    len: usize,
    value: IndexedScalar,
    gradient: Option<IndexedGradient>,
    cfg: NewtonConfig,
}

impl fmt::Debug for FnSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnSequence")
            .field("len", &self.len)
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl FnSequence {
    pub fn new<F>(len: usize, value: F) -> Self
    where
        F: Fn(usize, &Vector) -> f64 + Send + Sync + 'static,
    {
        Self {
            len,
            value: Arc::new(value),
            gradient: None,
            cfg: NewtonConfig::default(),
        }
    }

    pub fn with_gradient<G>(mut self, gradient: G) -> Self
    where
        G: Fn(usize, &Vector) -> Vector + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self
    }
}

impl GeneratingFunctionSequence for FnSequence {
    fn len(&self) -> usize {
        self.len
    }

    fn value(&self, k: usize, q: &Vector) -> Result<f64> {
        check_index(self, k)?;
        let v = (self.value)(k, q);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { coordinate: 0 })
        }
    }

    fn gradient(&self, k: usize, q: &Vector) -> Result<Vector> {
        check_index(self, k)?;
        match &self.gradient {
            Some(g) => Ok(g(k, q)),
            None => fd_gradient(|x| (self.value)(k, x), q, &self.cfg),
        }
    }
}

/// Values `S^k(q_k)` and momenta along one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct HJSolutionTable {
    pub trajectory: Trajectory,
    pub values: Vec<f64>,
    pub momenta: Vec<Vector>,
    /// `max_k ‖q_{k+1} − D₂H⁺(q_k, p_{k+1})‖∞`; this bracket vanishing is what
    /// makes `p_k` the gradient of the action sum.
    pub momentum_defect: f64,
}

impl HJSolutionTable {
    pub fn points(&self) -> impl Iterator<Item = &Vector> {
        self.trajectory.points.iter().map(|z| &z.q)
    }

    fn lookup(&self, k: usize, q: &Vector) -> Result<()> {
        let qk = &self.trajectory.points[k].q;
        let scale = 1.0 + qk.amax();
        if q.len() != qk.len() || (q - qk).amax() > 1e-12 * scale {
            return Err(Error::Invalid(format!(
                "table of stage {k} is only defined at its trajectory point"
            )));
        }
        Ok(())
    }
}

/// A table answers queries only at its own trajectory points.
impl GeneratingFunctionSequence for HJSolutionTable {
    fn len(&self) -> usize {
        self.values.len()
    }

    fn value(&self, k: usize, q: &Vector) -> Result<f64> {
        check_index(self, k)?;
        self.lookup(k, q)?;
        Ok(self.values[k])
    }

    fn gradient(&self, k: usize, q: &Vector) -> Result<Vector> {
        check_index(self, k)?;
        self.lookup(k, q)?;
        Ok(self.momenta[k].clone())
    }
}

/// `S^{k+1}(q') − S^k(q) − DS^{k+1}(q')·q' + H⁺(q, DS^{k+1}(q'))`.
pub fn rdhj_residual(
    s: &dyn GeneratingFunctionSequence,
    h: &DiscreteHamiltonianRight,
    k: usize,
    q: &Vector,
    q_next: &Vector,
) -> Result<f64> {
    let ds_next = s.gradient(k + 1, q_next)?;
    Ok(s.value(k + 1, q_next)? - s.value(k, q)? - ds_next.dot(q_next) + h.value(q, &ds_next)?)
}

/// `S^{k+1}(q') − S^k(q) + DS^k(q)·q + H⁻(DS^k(q), q')`.
pub fn ldhj_residual(
    s: &dyn GeneratingFunctionSequence,
    h: &DiscreteHamiltonianLeft,
    k: usize,
    q: &Vector,
    q_next: &Vector,
) -> Result<f64> {
    let ds = s.gradient(k, q)?;
    Ok(s.value(k + 1, q_next)? - s.value(k, q)? + ds.dot(q) + h.value(&ds, q_next)?)
}

/// Solves `q' = D₂H⁺(q, DS^{k+1}(q'))` for `q' = f⁺_k(q)`.
pub fn solve_f_plus(
    s: &dyn GeneratingFunctionSequence,
    h: &DiscreteHamiltonianRight,
    k: usize,
    q: &Vector,
    guess: &Vector,
    cfg: &NewtonConfig,
) -> Result<Vector> {
    check_index(s, k + 1)?;
    let residual = |qn: &Vector| -> Result<Vector> {
        let p = s.gradient(k + 1, qn)?;
        Ok(qn - h.d2(q, &p, cfg)?)
    };
    newton_solve(residual, guess, cfg)
        .map(|sol| sol.x)
        .with_context(|| format!("f+ solve at stage {k}"))
}

/// Solves `q = −D₁H⁻(DS^k(q), q')` for `q' = f⁻_k(q)`.
pub fn solve_f_minus(
    s: &dyn GeneratingFunctionSequence,
    h: &DiscreteHamiltonianLeft,
    k: usize,
    q: &Vector,
    guess: &Vector,
    cfg: &NewtonConfig,
) -> Result<Vector> {
    check_index(s, k + 1)?;
    let p = s.gradient(k, q)?;
    let residual = |qn: &Vector| -> Result<Vector> { Ok(q + h.d1(&p, qn, cfg)?) };
    newton_solve(residual, guess, cfg)
        .map(|sol| sol.x)
        .with_context(|| format!("f- solve at stage {k}"))
}

/// Jacobi's solution: the action sums along the trajectory from `z0`, with the
/// trajectory momenta recorded as their gradients.
pub fn jacobi_solution(
    h: &DiscreteHamiltonianRight,
    z0: &PhasePoint,
    steps: usize,
    cfg: &NewtonConfig,
) -> Result<HJSolutionTable> {
    let trajectory = integrate(&DiscreteHamiltonian::Right(h.clone()), z0, steps, cfg)?;
    let values = action_sum_right(h, &trajectory)?;
    let momenta = trajectory.points.iter().map(|z| z.p.clone()).collect();
    let mut momentum_defect = 0.0_f64;
    for pair in trajectory.points.windows(2) {
        let bracket = &pair[1].q - h.d2(&pair[0].q, &pair[1].p, cfg)?;
        momentum_defect = momentum_defect.max(bracket.amax());
    }
    if !(momentum_defect <= STEP_RESIDUAL_TOL) {
        return Err(Error::NonConvergence {
            iterations: 0,
            residual: momentum_defect,
            last_iterate: Vec::new(),
        }
        .context("Jacobi solution momentum consistency"));
    }
    Ok(HJSolutionTable {
        trajectory,
        values,
        momenta,
        momentum_defect,
    })
}

/// Regenerates a phase trajectory from a solution `S` of the discrete HJ
/// equation: `c_{k+1} = f±_k(c_k)` and `p_k = DS^k(c_k)`.
pub fn hj_generate_trajectory(
    s: &dyn GeneratingFunctionSequence,
    h: &DiscreteHamiltonian,
    c0: &Vector,
    steps: usize,
    cfg: &NewtonConfig,
) -> Result<Trajectory> {
    if steps >= s.len() {
        return Err(Error::Invalid(format!(
            "{steps} steps requested but the sequence has {} entries",
            s.len()
        )));
    }
    let mut configs = Vec::with_capacity(steps + 1);
    configs.push(c0.clone());
    for k in 0..steps {
        let c = &configs[k];
        let next = match h {
            DiscreteHamiltonian::Right(hr) => solve_f_plus(s, hr, k, c, c, cfg)?,
            DiscreteHamiltonian::Left(hl) => {
                let next = solve_f_minus(s, hl, k, c, c, cfg)?;
                let jac = fd_jacobian(|x: &Vector| solve_f_minus(s, hl, k, x, &next, cfg), c, cfg)
                    .with_context(|| format!("Jacobian of f- at stage {k}"))?;
                let condition = condition_number(&jac);
                if !(condition < LINEAR_SINGULAR_CONDITION) {
                    return Err(Error::SingularJacobian { condition }
                        .context(format!("f- Jacobian at stage {k}")));
                }
                next
            }
        };
        configs.push(next);
    }
    let points = configs
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let p = s.gradient(k, &c)?;
            PhasePoint::new(c, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(points)
}

/// Solves `−D₁L_d(q, q') = DS^k(q)` for `q' = f^L_k(q)`.
pub fn solve_f_lagrangian(
    l: &DiscreteLagrangian,
    s: &dyn GeneratingFunctionSequence,
    k: usize,
    q: &Vector,
    guess: &Vector,
    cfg: &NewtonConfig,
) -> Result<Vector> {
    check_index(s, k + 1)?;
    let p = s.gradient(k, q)?;
    let residual = |qn: &Vector| -> Result<Vector> { Ok(-l.d1(q, qn, cfg)? - &p) };
    newton_solve(residual, guess, cfg)
        .map(|sol| sol.x)
        .with_context(|| format!("Legendre inversion at stage {k}"))
}

/// `S^{k+1}(f^L_k(q)) − S^k(q) − L_d(q, f^L_k(q))`.
pub fn lagrangian_dhj_residual(
    l: &DiscreteLagrangian,
    s: &dyn GeneratingFunctionSequence,
    k: usize,
    q: &Vector,
    cfg: &NewtonConfig,
) -> Result<f64> {
    let qn = solve_f_lagrangian(l, s, k, q, q, cfg)?;
    Ok(s.value(k + 1, &qn)? - s.value(k, q)? - l.value(q, &qn)?)
}

/// Jacobi's solution as a function of the endpoint: `S^k(q)` is the action sum
/// of the discrete trajectory that starts at the fixed `q_0` and reaches `q`
/// after `k` steps, found by shooting on the initial momentum.
#[derive(Debug, Clone)]
pub struct JacobiActionFunction {
    h: DiscreteHamiltonianRight,
    reference: HJSolutionTable,
    cfg: NewtonConfig,
    gradient_step: f64,
}

impl JacobiActionFunction {
    pub fn new(h: DiscreteHamiltonianRight, reference: HJSolutionTable, cfg: NewtonConfig) -> Self {
        Self {
            h,
            reference,
            cfg,
            gradient_step: 1e-4,
        }
    }

    pub fn reference(&self) -> &HJSolutionTable {
        &self.reference
    }

    /// The trajectory from `q_0` that lands on `q` after `k` steps.
    pub fn shoot(&self, k: usize, q: &Vector) -> Result<Trajectory> {
        let z0 = &self.reference.trajectory.points[0];
        let hamiltonian = DiscreteHamiltonian::Right(self.h.clone());
        let land = |p0: &Vector| -> Result<Vector> {
            let start = PhasePoint::new(z0.q.clone(), p0.clone())?;
            let t = integrate(&hamiltonian, &start, k, &self.cfg)?;
            Ok(&t.points[k].q - q)
        };
        let sol = newton_solve(land, &z0.p, &self.cfg).context("Jacobi shooting")?;
        integrate(
            &hamiltonian,
            &PhasePoint::new(z0.q.clone(), sol.x)?,
            k,
            &self.cfg,
        )
    }
}

impl GeneratingFunctionSequence for JacobiActionFunction {
    fn len(&self) -> usize {
        self.reference.values.len()
    }

    fn value(&self, k: usize, q: &Vector) -> Result<f64> {
        check_index(self, k)?;
        if k == 0 {
            self.reference.lookup(0, q)?;
            return Ok(0.0);
        }
        let t = self.shoot(k, q)?;
        Ok(action_sum_right(&self.h, &t)?[k])
    }

    fn gradient(&self, k: usize, q: &Vector) -> Result<Vector> {
        check_index(self, k)?;
        let cfg = NewtonConfig {
            fd_step_scale: self.gradient_step,
            ..self.cfg
        };
        let failure = std::sync::Mutex::new(None);
        let g = fd_gradient(
            |x| match self.value(k, x) {
                Ok(v) => v,
                Err(e) => {
                    failure.lock().unwrap().get_or_insert(e);
                    f64::NAN
                }
            },
            q,
            &cfg,
        );
        match failure.into_inner().unwrap() {
            Some(e) => Err(e),
            None => g,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linhj::Matrix;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn identity_right() -> DiscreteHamiltonianRight {
        DiscreteHamiltonianRight::new(|q, p| q.dot(p))
            .with_d1(|_, p| p.clone())
            .with_d2(|q, _| q.clone())
    }

    fn zero_sequence(len: usize) -> FnSequence {
        FnSequence::new(len, |_, _| 0.0)
    }

    #[test]
    fn identity_system_with_zero_s() {
        let s = zero_sequence(3);
        let q = v(&[0.7]);
        assert_eq!(rdhj_residual(&s, &identity_right(), 0, &q, &q).unwrap(), 0.0);
        let left = DiscreteHamiltonianLeft::new(|p, qn| -p.dot(qn));
        assert_eq!(ldhj_residual(&s, &left, 1, &q, &v(&[3.0])).unwrap(), 0.0);
    }

    #[test]
    fn f_plus_identity_is_identity() {
        let cfg = NewtonConfig::default();
        let s = FnSequence::new(2, |k, q| (k as f64 + 1.0) * q[0].powi(2));
        let q = v(&[0.4]);
        let qn = solve_f_plus(&s, &identity_right(), 0, &q, &v(&[0.0]), &cfg).unwrap();
        assert_abs_diff_eq!(qn[0], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn f_minus_identity_is_identity() {
        let cfg = NewtonConfig::default();
        let s = FnSequence::new(2, |_, q| q[0].sin());
        let left = DiscreteHamiltonianLeft::new(|p, qn| -p.dot(qn));
        let q = v(&[1.3]);
        let qn = solve_f_minus(&s, &left, 0, &q, &v(&[0.0]), &cfg).unwrap();
        assert_abs_diff_eq!(qn[0], 1.3, epsilon = 1e-10);
    }

    #[test]
    fn f_plus_singular_fixed_point() {
        let cfg = NewtonConfig::default();
        let h = DiscreteHamiltonianRight::new(|q, p| q.dot(p) + 0.5 * p.dot(p))
            .with_d1(|_, p| p.clone())
            .with_d2(|q, p| q + p);
        let s = QuadraticSequence(vec![
            QuadraticGeneratingFunction::zero(1),
            QuadraticGeneratingFunction::new(Matrix::identity(1, 1), Vector::zeros(1), 0.0).unwrap(),
        ]);
        let err = solve_f_plus(&s, &h, 0, &v(&[1.0]), &v(&[0.0]), &cfg).unwrap_err();
        assert!(matches!(err.root(), Error::SingularJacobian { .. }), "{err:?}");
    }

    #[test]
    fn jacobi_with_no_steps() {
        let cfg = NewtonConfig::default();
        let z0 = PhasePoint::from_slices(&[1.0], &[2.0]).unwrap();
        let table = jacobi_solution(&identity_right(), &z0, 0, &cfg).unwrap();
        assert_eq!(table.values, vec![0.0]);
        assert_eq!(table.momenta, vec![z0.p.clone()]);
    }

    #[test]
    fn table_refuses_off_trajectory_queries() {
        let cfg = NewtonConfig::default();
        let z0 = PhasePoint::from_slices(&[1.0], &[2.0]).unwrap();
        let table = jacobi_solution(&identity_right(), &z0, 2, &cfg).unwrap();
        assert!(table.value(1, &v(&[1.0])).is_ok());
        assert!(table.value(1, &v(&[1.1])).is_err());
        assert!(table.value(3, &v(&[1.0])).is_err());
    }

    #[test]
    fn free_particle_lagrangian_side() {
        let cfg = NewtonConfig::default();
        let l = DiscreteLagrangian::new(|q, qn| 0.5 * (qn - q).norm_squared())
            .with_d1(|q, qn| q - qn)
            .with_d2(|q, qn| qn - q);
        let s = FnSequence::new(6, |k, q| q.norm_squared() / (2.0 * (k as f64 + 1.0)))
            .with_gradient(|k, q| q / (k as f64 + 1.0));
        for k in 0..5 {
            for q in [-1.5, 0.2, 2.0] {
                let r = lagrangian_dhj_residual(&l, &s, k, &v(&[q]), &cfg).unwrap();
                assert!(r.abs() <= 1e-9, "k={k} q={q} residual {r}");
            }
        }
    }

    #[test]
    fn free_particle_action_matches_brute_force() {
        // Trajectories from q = 0 at stage −1 reach q at stage k with velocity
        // q/(k+1); the action is (k+1)·½(q/(k+1))² = q²/(2(k+1)).
        let brute = |k: usize, q: f64| -> f64 {
            let steps = k + 1;
            let vel = q / steps as f64;
            (0..steps).map(|_| 0.5 * vel * vel).sum()
        };
        for k in 0..4 {
            assert_abs_diff_eq!(brute(k, 1.7), 1.7 * 1.7 / (2.0 * (k as f64 + 1.0)), epsilon = 1e-14);
        }
    }
}

//! Discrete mechanics: right/left discrete Hamilton's equations, discrete
//! Legendre transforms, discrete Euler–Lagrange residuals, action sums and a
//! numerical symplecticity check.

use nalgebra::DVector;

use crate::error::{Error, Result, ResultExt};
use crate::newton::{
    canonical_symplectic, fd_jacobian, fd_jacobian_with, matrix_inf_norm, newton_solve_with_jacobian,
    NewtonConfig,
};
use crate::types::{
    DiscreteHamiltonian, DiscreteHamiltonianLeft, DiscreteHamiltonianRight, DiscreteLagrangian,
    PhasePoint, Vector,
};

/// Residual bound every accepted step must meet.
pub const STEP_RESIDUAL_TOL: f64 = 1e-10;

/// Relative step used by [`symplecticity_defect`].
const SYMPLECTIC_FD_STEP: f64 = 1e-6;

/// Phase-space trajectory `(q_0, p_0), ..., (q_N, p_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<PhasePoint>,
}

impl Trajectory {
    pub fn new(points: Vec<PhasePoint>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::Invalid("trajectory needs at least one point".into()));
        };
        let n = first.dim();
        if points.iter().any(|z| z.dim() != n) {
            return Err(Error::Dimension("trajectory points differ in dimension".into()));
        }
        Ok(Self { points })
    }

    pub fn step_count(&self) -> usize {
        self.points.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }
}

fn check_dim(what: &str, v: &Vector, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!(
            "{what} has length {}, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

/// One step of the right discrete Hamilton's equations.
///
/// Solves `p_k = D₁H⁺(q_k, p_{k+1})` for `p_{k+1}` starting from `guess`, then
/// sets `q_{k+1} = D₂H⁺(q_k, p_{k+1})`.
pub fn step_right(
    h: &DiscreteHamiltonianRight,
    z: &PhasePoint,
    guess: &Vector,
    cfg: &NewtonConfig,
) -> Result<PhasePoint> {
    check_dim("guess", guess, z.dim())?;
    let residual = |p_next: &Vector| -> Result<Vector> { Ok(h.d1(&z.q, p_next, cfg)? - &z.p) };
    let sol = newton_solve_with_jacobian(
        residual,
        |p_next: &Vector| fd_jacobian(|x: &Vector| h.d1(&z.q, x, cfg), p_next, cfg),
        guess,
        cfg,
    )
    .context("right step")?;
    let p_next = sol.x;
    let q_next = h.d2(&z.q, &p_next, cfg).context("right step")?;
    PhasePoint::new(q_next, p_next)
}

/// One step of the left discrete Hamilton's equations.
///
/// Solves `q_k = −D₁H⁻(p_k, q_{k+1})` for `q_{k+1}` starting from `guess`, then
/// sets `p_{k+1} = −D₂H⁻(p_k, q_{k+1})`.
pub fn step_left(
    h: &DiscreteHamiltonianLeft,
    z: &PhasePoint,
    guess: &Vector,
    cfg: &NewtonConfig,
) -> Result<PhasePoint> {
    check_dim("guess", guess, z.dim())?;
    let residual = |q_next: &Vector| -> Result<Vector> { Ok(h.d1(&z.p, q_next, cfg)? + &z.q) };
    let sol = newton_solve_with_jacobian(
        residual,
        |q_next: &Vector| fd_jacobian(|x: &Vector| h.d1(&z.p, x, cfg), q_next, cfg),
        guess,
        cfg,
    )
    .context("left step")?;
    let q_next = sol.x;
    let p_next = -h.d2(&z.p, &q_next, cfg).context("left step")?;
    PhasePoint::new(q_next, p_next)
}

/// Right discrete Legendre transform `(q, q') ↦ (q', D₂L_d(q, q'))`.
pub fn legendre_right(
    l: &DiscreteLagrangian,
    q: &Vector,
    q_next: &Vector,
    cfg: &NewtonConfig,
) -> Result<PhasePoint> {
    let p = l.d2(q, q_next, cfg)?;
    PhasePoint::new(q_next.clone(), p)
}

/// Left discrete Legendre transform `(q, q') ↦ (q, −D₁L_d(q, q'))`.
pub fn legendre_left(
    l: &DiscreteLagrangian,
    q: &Vector,
    q_next: &Vector,
    cfg: &NewtonConfig,
) -> Result<PhasePoint> {
    let p = -l.d1(q, q_next, cfg)?;
    PhasePoint::new(q.clone(), p)
}

/// Discrete Euler–Lagrange residual `D₂L_d(q_{k−1}, q_k) + D₁L_d(q_k, q_{k+1})`.
pub fn del_residual(
    l: &DiscreteLagrangian,
    q_prev: &Vector,
    q: &Vector,
    q_next: &Vector,
    cfg: &NewtonConfig,
) -> Result<Vector> {
    Ok(l.d2(q_prev, q, cfg)? + l.d1(q, q_next, cfg)?)
}

/// Partial action sums `S^k = Σ_{l<k} [p_{l+1}·q_{l+1} − H⁺(q_l, p_{l+1})]`,
/// for `k = 0..=N`.
pub fn action_sum_right(h: &DiscreteHamiltonianRight, t: &Trajectory) -> Result<Vec<f64>> {
    let mut sums = Vec::with_capacity(t.points.len());
    let mut acc = 0.0;
    sums.push(acc);
    for pair in t.points.windows(2) {
        let (z, z_next) = (&pair[0], &pair[1]);
        acc += z_next.p.dot(&z_next.q) - h.value(&z.q, &z_next.p)?;
        sums.push(acc);
    }
    Ok(sums)
}

/// Partial action sums `S^k = Σ_{l<k} [−p_l·q_l − H⁻(p_l, q_{l+1})]`.
pub fn action_sum_left(h: &DiscreteHamiltonianLeft, t: &Trajectory) -> Result<Vec<f64>> {
    let mut sums = Vec::with_capacity(t.points.len());
    let mut acc = 0.0;
    sums.push(acc);
    for pair in t.points.windows(2) {
        let (z, z_next) = (&pair[0], &pair[1]);
        acc += -z.p.dot(&z.q) - h.value(&z.p, &z_next.q)?;
        sums.push(acc);
    }
    Ok(sums)
}

/// Iterates the discrete Hamiltonian map `N` times from `z0`.
///
/// Each Newton solve is warm-started from the previous step's solution.
pub fn integrate(
    h: &DiscreteHamiltonian,
    z0: &PhasePoint,
    steps: usize,
    cfg: &NewtonConfig,
) -> Result<Trajectory> {
    let mut points = Vec::with_capacity(steps + 1);
    points.push(z0.clone());
    for k in 0..steps {
        let z = &points[k];
        let next = match h {
            DiscreteHamiltonian::Right(hr) => step_right(hr, z, &z.p, cfg),
            DiscreteHamiltonian::Left(hl) => step_left(hl, z, &z.q, cfg),
        }
        .with_context(|| format!("integration step {k}"))?;
        points.push(next);
    }
    Trajectory::new(points)
}

/// Max-norm residuals of the right discrete Hamilton's equations along `t`.
pub fn right_equation_residual(
    h: &DiscreteHamiltonianRight,
    t: &Trajectory,
    cfg: &NewtonConfig,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for pair in t.points.windows(2) {
        let (z, zn) = (&pair[0], &pair[1]);
        let r1 = (&zn.q - h.d2(&z.q, &zn.p, cfg)?).amax();
        let r2 = (&z.p - h.d1(&z.q, &zn.p, cfg)?).amax();
        worst = worst.max(r1).max(r2);
    }
    Ok(worst)
}

/// Max-norm residuals of the left discrete Hamilton's equations along `t`.
pub fn left_equation_residual(
    h: &DiscreteHamiltonianLeft,
    t: &Trajectory,
    cfg: &NewtonConfig,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for pair in t.points.windows(2) {
        let (z, zn) = (&pair[0], &pair[1]);
        let r1 = (&z.q + h.d1(&z.p, &zn.q, cfg)?).amax();
        let r2 = (&zn.p + h.d2(&z.p, &zn.q, cfg)?).amax();
        worst = worst.max(r1).max(r2);
    }
    Ok(worst)
}

/// `‖Jᵀ𝕁J − 𝕁‖∞` for the finite-difference Jacobian `J` of `step` at `z`.
pub fn symplecticity_defect<F>(step: F, z: &PhasePoint) -> Result<f64>
where
    F: Fn(&PhasePoint) -> Result<PhasePoint>,
{
    let n = z.dim();
    let map = |v: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(step(&PhasePoint::from_vector(v)?)?.to_vector())
    };
    let jac = fd_jacobian_with(map, &z.to_vector(), |x| SYMPLECTIC_FD_STEP * x.abs().max(1.0))?;
    let j = canonical_symplectic(n);
    Ok(matrix_inf_norm(&(jac.transpose() * &j * &jac - &j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn identity_right() -> DiscreteHamiltonianRight {
        DiscreteHamiltonianRight::new(|q, p| q.dot(p))
            .with_d1(|_, p| p.clone())
            .with_d2(|q, _| q.clone())
    }

    fn free_right() -> DiscreteHamiltonianRight {
        DiscreteHamiltonianRight::new(|q, p| q.dot(p) + 0.5 * p.dot(p))
            .with_d1(|_, p| p.clone())
            .with_d2(|q, p| q + p)
    }

    fn quadratic_left(m: f64, l: f64, k: f64) -> DiscreteHamiltonianLeft {
        DiscreteHamiltonianLeft::new(move |p, qn| {
            0.5 * p[0] * p[0] / m + p[0] * l * qn[0] + 0.5 * k * qn[0] * qn[0]
        })
        .with_d1(move |p, qn| p / m + qn * l)
        .with_d2(move |p, qn| p * l + qn * k)
    }

    fn free_lagrangian() -> DiscreteLagrangian {
        DiscreteLagrangian::new(|q, qn| 0.5 * (qn - q).norm_squared())
    }

    #[test]
    fn right_step_identity() {
        let cfg = NewtonConfig::default();
        let z = PhasePoint::from_slices(&[1.0], &[2.0]).unwrap();
        let next = step_right(&identity_right(), &z, &z.p, &cfg).unwrap();
        assert_eq!(next, z);
    }

    #[test]
    fn right_step_free_particle() {
        let cfg = NewtonConfig::default();
        let z = PhasePoint::from_slices(&[1.0], &[2.0]).unwrap();
        let next = step_right(&free_right(), &z, &v(&[0.0]), &cfg).unwrap();
        assert_abs_diff_eq!(next.q[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(next.p[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn left_step_shear() {
        let cfg = NewtonConfig::default();
        let z = PhasePoint::from_slices(&[1.0], &[2.0]).unwrap();
        let next = step_left(&quadratic_left(1.0, -1.0, 0.0), &z, &z.q, &cfg).unwrap();
        assert_abs_diff_eq!(next.q[0], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(next.p[0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn left_step_identity() {
        let cfg = NewtonConfig::default();
        let h = DiscreteHamiltonianLeft::new(|p, qn| -p.dot(qn));
        let z = PhasePoint::from_slices(&[0.4, -2.0], &[1.5, 3.0]).unwrap();
        let next = step_left(&h, &z, &z.q, &cfg).unwrap();
        assert!((next.q - &z.q).amax() < 1e-10);
        assert!((next.p - &z.p).amax() < 1e-10);
    }

    #[test]
    fn left_step_rotation_like() {
        let cfg = NewtonConfig::default();
        let z = PhasePoint::from_slices(&[1.0], &[0.0]).unwrap();
        let next = step_left(&quadratic_left(1.0, 1.0, 1.0), &z, &z.q, &cfg).unwrap();
        assert_abs_diff_eq!(next.q[0], -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(next.p[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn legendre_transforms() {
        let cfg = NewtonConfig::default();
        let l = free_lagrangian();
        let r = legendre_right(&l, &v(&[0.0]), &v(&[1.0]), &cfg).unwrap();
        assert_abs_diff_eq!(r.q[0], 1.0);
        assert_abs_diff_eq!(r.p[0], 1.0, epsilon = 1e-9);
        let lf = legendre_left(&l, &v(&[0.0]), &v(&[1.0]), &cfg).unwrap();
        assert_abs_diff_eq!(lf.q[0], 0.0);
        assert_abs_diff_eq!(lf.p[0], 1.0, epsilon = 1e-9);

        let zero = DiscreteLagrangian::new(|_, _| 0.0);
        let r = legendre_right(&zero, &v(&[0.3]), &v(&[-0.4]), &cfg).unwrap();
        assert_eq!((r.q[0], r.p[0]), (-0.4, 0.0));
        let lf = legendre_left(&zero, &v(&[0.3]), &v(&[-0.4]), &cfg).unwrap();
        assert_eq!((lf.q[0], lf.p[0]), (0.3, 0.0));

        let bilinear = DiscreteLagrangian::new(|q, qn| q.dot(qn));
        let r = legendre_right(&bilinear, &v(&[2.0]), &v(&[3.0]), &cfg).unwrap();
        assert_abs_diff_eq!(r.p[0], 2.0, epsilon = 1e-9);
        assert_eq!(r.q[0], 3.0);
        let lf = legendre_left(&bilinear, &v(&[2.0]), &v(&[3.0]), &cfg).unwrap();
        assert_abs_diff_eq!(lf.p[0], -3.0, epsilon = 1e-9);
    }

    #[test]
    fn del_residual_free_particle() {
        let cfg = NewtonConfig::default();
        let l = free_lagrangian();
        let r = del_residual(&l, &v(&[0.0]), &v(&[1.0]), &v(&[2.0]), &cfg).unwrap();
        assert_abs_diff_eq!(r[0], 0.0, epsilon = 1e-9);

        let r = del_residual(&l, &v(&[0.0]), &v(&[1.0]), &v(&[3.0]), &cfg).unwrap();
        // Brute-force variation of the three-point action ½q² + ½(3 − q)² at q = 1.
        let action = |q: f64| 0.5 * q * q + 0.5 * (3.0 - q) * (3.0 - q);
        let eps = 1e-5;
        let variation = (action(1.0 + eps) - action(1.0 - eps)) / (2.0 * eps);
        assert_abs_diff_eq!(variation, -1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(r[0], variation, epsilon = 1e-8);
    }

    #[test]
    fn action_sums() {
        let z = PhasePoint::from_slices(&[1.0], &[2.0]).unwrap();
        let single = Trajectory::new(vec![z.clone()]).unwrap();
        assert_eq!(action_sum_right(&free_right(), &single).unwrap(), vec![0.0]);
        assert_eq!(
            action_sum_left(&quadratic_left(1.0, -1.0, 0.0), &single).unwrap(),
            vec![0.0]
        );

        let constant = Trajectory::new(vec![z.clone(), z.clone()]).unwrap();
        assert_eq!(action_sum_right(&identity_right(), &constant).unwrap(), vec![0.0, 0.0]);
        let identity_left = DiscreteHamiltonianLeft::new(|p, qn| -p.dot(qn));
        assert_eq!(action_sum_left(&identity_left, &constant).unwrap(), vec![0.0, 0.0]);

        let moved = PhasePoint::from_slices(&[3.0], &[2.0]).unwrap();
        let t = Trajectory::new(vec![z, moved]).unwrap();
        assert_eq!(action_sum_right(&free_right(), &t).unwrap(), vec![0.0, 2.0]);
        assert_eq!(
            action_sum_left(&quadratic_left(1.0, -1.0, 0.0), &t).unwrap(),
            vec![0.0, 2.0]
        );
    }

    #[test]
    fn integrate_shear() {
        let cfg = NewtonConfig::default();
        let z0 = PhasePoint::from_slices(&[1.0], &[2.0]).unwrap();
        let h = DiscreteHamiltonian::Left(quadratic_left(1.0, -1.0, 0.0));
        let t = integrate(&h, &z0, 3, &cfg).unwrap();
        let qs: Vec<f64> = t.points.iter().map(|z| z.q[0]).collect();
        for (a, b) in qs.iter().zip([1.0, 3.0, 5.0, 7.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
        }
        assert!(t.points.iter().all(|z| (z.p[0] - 2.0).abs() < 1e-10));
        assert_eq!(integrate(&h, &z0, 0, &cfg).unwrap().points, vec![z0]);
    }

    #[test]
    fn integrate_reports_failing_index() {
        let cfg = NewtonConfig::default();
        // p_k = p_{k+1}^2 has no real solution once p_k < 0.
        let h = DiscreteHamiltonianRight::new(|q, p| q.dot(p) + p[0].powi(3) / 3.0)
            .with_d1(|_, p| p.map(|x| x * x))
            .with_d2(|q, _| q.clone());
        let z0 = PhasePoint::from_slices(&[0.0], &[-1.0]).unwrap();
        let err = integrate(&DiscreteHamiltonian::Right(h), &z0, 2, &cfg).unwrap_err();
        assert!(err.to_string().contains("integration step 0"));
    }

    #[test]
    fn symplecticity_of_linear_maps() {
        let z = PhasePoint::from_slices(&[0.3], &[-0.2]).unwrap();
        assert!(symplecticity_defect(|z| Ok(z.clone()), &z).unwrap() < 1e-9);
        let shear = |z: &PhasePoint| PhasePoint::from_slices(&[z.q[0] + z.p[0]], &[z.p[0]]);
        assert!(symplecticity_defect(shear, &z).unwrap() < 1e-9);
        let non_symplectic = |z: &PhasePoint| PhasePoint::from_slices(&[2.0 * z.q[0]], &[z.p[0]]);
        assert!(symplecticity_defect(non_symplectic, &z).unwrap() > 0.5);
    }
}

//! Galerkin discrete control Hamiltonians with internal-stage controls.
//!
//! A step of length `h` uses `s` internal velocities `w^j`, stage states
//! `Q^i = q_0 + h Σ_j A_ij w^j`, and the stationarity condition
//! `Σ_j M_ij w^j = f(Q^i, U^i)`. The step map and cost are then
//! `f_d = q_0 + h Σ_i B_i w^i` and `C_d = h Σ_i b_i C(Q^i, U^i)`.

mod heisenberg;
mod tableau;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

pub use heisenberg::{global_error, heisenberg_fd_closed_form, heisenberg_system, rk4_reference, Heisenberg};
pub use tableau::{gauss_legendre, quadrature_checked, BasisFunction, GalerkinTableau};

use crate::docp::{ControlBox, DiscreteOCP, StageModel};
use crate::error::{Error, Result, ResultExt};
use crate::newton::{fd_jacobian, newton_solve_with_jacobian, NewtonConfig};
use crate::types::Vector;

/// Continuous-time dynamics `q̇ = f(q, u)` with running cost `C(q, u)`.
pub trait ControlSystem: Send + Sync {
    fn name(&self) -> &str;

    fn state_dim(&self) -> usize;

    fn control_dim(&self) -> usize;

    fn f(&self, q: &Vector, u: &Vector) -> Vector;

    fn cost(&self, q: &Vector, u: &Vector) -> f64;

    /// `D₁f`; central differences unless overridden.
    fn f_jacobian(&self, q: &Vector, u: &Vector) -> Result<DMatrix<f64>> {
        fd_jacobian(|x: &Vector| Ok(self.f(x, u)), q, &NewtonConfig::default())
    }
}

type SystemFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
type SystemCost = Arc<dyn Fn(&Vector, &Vector) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct FnControlSystem {
    name: String,
    n: usize,
    m: usize,
    f: SystemFn,
    c: SystemCost,
}

impl fmt::Debug for FnControlSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnControlSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .finish()
    }
}

impl FnControlSystem {
    pub fn new<F, C>(name: impl Into<String>, n: usize, m: usize, f: F, c: C) -> Self
    where
        F: Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
        C: Fn(&Vector, &Vector) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            n,
            m,
            f: Arc::new(f),
            c: Arc::new(c),
        }
    }
}

impl ControlSystem for FnControlSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        self.n
    }

    fn control_dim(&self) -> usize {
        self.m
    }

    fn f(&self, q: &Vector, u: &Vector) -> Vector {
        (self.f)(q, u)
    }

    fn cost(&self, q: &Vector, u: &Vector) -> f64 {
        (self.c)(q, u)
    }
}

/// Internal stages of one Galerkin step.
#[derive(Debug, Clone, PartialEq)]
pub struct StageState {
    pub w: Vec<Vector>,
    pub q_stages: Vec<Vector>,
    pub u: Vec<Vector>,
}

/// Stacks per-stage vectors into one.
fn stack(parts: &[Vector]) -> Vector {
    Vector::from_iterator(parts.iter().map(|v| v.len()).sum(), parts.iter().flat_map(|v| v.iter().copied()))
}

fn unstack(v: &Vector, parts: usize) -> Vec<Vector> {
    let n = v.len() / parts;
    (0..parts).map(|i| v.rows(i * n, n).into_owned()).collect()
}

/// `Q^i = q_0 + h Σ_j A_ij w^j`.
pub fn stage_states(tab: &GalerkinTableau, q0: &Vector, w: &[Vector], h: f64) -> Vec<Vector> {
    (0..tab.stages())
        .map(|i| {
            let mut q = q0.clone();
            for (j, wj) in w.iter().enumerate() {
                if tab.a[(i, j)] != 0.0 {
                    q += wj * (h * tab.a[(i, j)]);
                }
            }
            q
        })
        .collect()
}

/// `Σ_j M_ij w^j` for every stage.
fn combine(weights: &DMatrix<f64>, w: &[Vector]) -> Vec<Vector> {
    (0..weights.nrows())
        .map(|i| {
            let mut acc = Vector::zeros(w[0].len());
            for (j, wj) in w.iter().enumerate() {
                if weights[(i, j)] != 0.0 {
                    acc += wj * weights[(i, j)];
                }
            }
            acc
        })
        .collect()
}

fn check_inputs(sys: &dyn ControlSystem, tab: &GalerkinTableau, q0: &Vector, u: &[Vector], h: f64) -> Result<()> {
    if q0.len() != sys.state_dim() {
        return Err(Error::Dimension(format!(
            "q0 has {} coordinates, {} has {} states",
            q0.len(),
            sys.name(),
            sys.state_dim()
        )));
    }
    if u.len() != tab.stages() {
        return Err(Error::Dimension(format!("{} stage controls for {} stages", u.len(), tab.stages())));
    }
    if let Some(i) = u.iter().position(|ui| ui.len() != sys.control_dim()) {
        return Err(Error::Dimension(format!(
            "stage control {} has {} coordinates, expected {}",
            i + 1,
            u[i].len(),
            sys.control_dim()
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Invalid(format!("step size must be positive, got {h}")));
    }
    Ok(())
}

const PICARD_SWEEPS: usize = 10;

/// Solves `Σ_j M_ij w^j = f(Q^i(w), U^i)` for the internal velocities.
///
/// The seed is `M⁻¹` applied to the stage-frozen velocities `f(q_0, U^i)`.
/// When Newton fails, ten fixed-point sweeps `w ← M⁻¹ f(Q(w), U)` precede a
/// second Newton attempt.
pub fn solve_internal_velocities(
    sys: &dyn ControlSystem,
    tab: &GalerkinTableau,
    q0: &Vector,
    u: &[Vector],
    h: f64,
    cfg: &NewtonConfig,
) -> Result<StageState> {
    check_inputs(sys, tab, q0, u, h)?;
    let s = tab.stages();
    let n = sys.state_dim();
    let frozen: Vec<Vector> = u.iter().map(|ui| sys.f(q0, ui)).collect();
    let seed = combine(tab.m_inverse(), &frozen);

    let residual = |x: &Vector| -> Result<Vector> {
        let w = unstack(x, s);
        let q = stage_states(tab, q0, &w, h);
        let lhs = combine(&tab.m, &w);
        let parts: Vec<Vector> = (0..s).map(|i| &lhs[i] - sys.f(&q[i], &u[i])).collect();
        Ok(stack(&parts))
    };
    let jacobian = |x: &Vector| -> Result<DMatrix<f64>> {
        let w = unstack(x, s);
        let q = stage_states(tab, q0, &w, h);
        let mut jac = DMatrix::zeros(s * n, s * n);
        for i in 0..s {
            let df = sys.f_jacobian(&q[i], &u[i])?;
            for j in 0..s {
                let mut block = DMatrix::identity(n, n) * tab.m[(i, j)];
                if tab.a[(i, j)] != 0.0 {
                    block -= &df * (h * tab.a[(i, j)]);
                }
                jac.view_mut((i * n, j * n), (n, n)).copy_from(&block);
            }
        }
        Ok(jac)
    };

    let x0 = stack(&seed);
    let solved = newton_solve_with_jacobian(residual, jacobian, &x0, cfg).or_else(|first| {
        log::debug!("Galerkin Newton failed ({first}); trying fixed-point sweeps");
        let mut w = seed.clone();
        for _ in 0..PICARD_SWEEPS {
            let q = stage_states(tab, q0, &w, h);
            let values: Vec<Vector> = (0..s).map(|i| sys.f(&q[i], &u[i])).collect();
            w = combine(tab.m_inverse(), &values);
        }
        newton_solve_with_jacobian(residual, jacobian, &stack(&w), cfg).map_err(|second| {
            second.context(format!(
                "internal stages of {} with tableau {} (h = {h}, q0 = {:?})",
                sys.name(),
                tab.name,
                q0.as_slice()
            ))
        })
    })?;
    let w = unstack(&solved.x, s);
    let q_stages = stage_states(tab, q0, &w, h);
    Ok(StageState {
        w,
        q_stages,
        u: u.to_vec(),
    })
}

/// `f_d = q_0 + h Σ_i B_i w̃^i`.
pub fn dynamics_from_stages(tab: &GalerkinTableau, q0: &Vector, stages: &StageState, h: f64) -> Vector {
    let mut q1 = q0.clone();
    for (i, wi) in stages.w.iter().enumerate() {
        if tab.big_b[i] != 0.0 {
            q1 += wi * (h * tab.big_b[i]);
        }
    }
    q1
}

/// `C_d = h Σ_i b_i C(Q^i, U^i)`.
pub fn cost_from_stages(sys: &dyn ControlSystem, tab: &GalerkinTableau, stages: &StageState, h: f64) -> f64 {
    h * (0..tab.stages())
        .map(|i| tab.b[i] * sys.cost(&stages.q_stages[i], &stages.u[i]))
        .sum::<f64>()
}

pub fn discrete_dynamics(
    sys: &dyn ControlSystem,
    tab: &GalerkinTableau,
    q0: &Vector,
    u: &[Vector],
    h: f64,
    cfg: &NewtonConfig,
) -> Result<Vector> {
    let stages = solve_internal_velocities(sys, tab, q0, u, h, cfg)?;
    Ok(dynamics_from_stages(tab, q0, &stages, h))
}

pub fn discrete_cost(
    sys: &dyn ControlSystem,
    tab: &GalerkinTableau,
    q0: &Vector,
    u: &[Vector],
    h: f64,
    cfg: &NewtonConfig,
) -> Result<f64> {
    let stages = solve_internal_velocities(sys, tab, q0, u, h, cfg)?;
    Ok(cost_from_stages(sys, tab, &stages, h))
}

/// `Ĥ_d⁺(q_0, p_1, U) = p_1·f_d(q_0, U) − C_d(q_0, U)`.
pub fn galerkin_control_hamiltonian(
    sys: &dyn ControlSystem,
    tab: &GalerkinTableau,
    q0: &Vector,
    p1: &Vector,
    u: &[Vector],
    h: f64,
    cfg: &NewtonConfig,
) -> Result<f64> {
    let stages = solve_internal_velocities(sys, tab, q0, u, h, cfg)?;
    Ok(p1.dot(&dynamics_from_stages(tab, q0, &stages, h)) - cost_from_stages(sys, tab, &stages, h))
}

/// The functional
/// `K = p_1·(q_0 + h Σ B_i w^i) − h Σ_i b_i {P^i·[Σ_j M_ij w^j − f(Q^i, U^i)] + C(Q^i, U^i)}`
/// whose stationary value is the Galerkin control Hamiltonian.
#[allow(clippy::too_many_arguments)]
pub fn k_functional(
    sys: &dyn ControlSystem,
    tab: &GalerkinTableau,
    q0: &Vector,
    p1: &Vector,
    w: &[Vector],
    p_stages: &[Vector],
    u: &[Vector],
    h: f64,
) -> Result<f64> {
    check_inputs(sys, tab, q0, u, h)?;
    if w.len() != tab.stages() || p_stages.len() != tab.stages() {
        return Err(Error::Dimension("one velocity and one momentum per stage".into()));
    }
    let q = stage_states(tab, q0, w, h);
    let lhs = combine(&tab.m, w);
    let mut endpoint = q0.clone();
    for (i, wi) in w.iter().enumerate() {
        endpoint += wi * (h * tab.big_b[i]);
    }
    let mut stage_sum = 0.0;
    for i in 0..tab.stages() {
        let defect = &lhs[i] - sys.f(&q[i], &u[i]);
        stage_sum += tab.b[i] * (p_stages[i].dot(&defect) + sys.cost(&q[i], &u[i]));
    }
    Ok(p1.dot(&endpoint) - h * stage_sum)
}

/// Residual of the stationarity of `K` in `w^j`:
/// `h p_1·B_j − h Σ_i b_i [M_ij P^i − h A_ij D₁Ĥ(Q^i, P^i, U^i)]`, with
/// `D₁Ĥ = D₁fᵀP − D₁C`.
pub fn momentum_stationarity_residual(
    sys: &dyn ControlSystem,
    tab: &GalerkinTableau,
    p1: &Vector,
    stages: &StageState,
    p_stages: &[Vector],
    h: f64,
) -> Result<f64> {
    let s = tab.stages();
    let cfg = NewtonConfig::default();
    let mut d1 = Vec::with_capacity(s);
    for ((q, u), p) in stages.q_stages.iter().zip(&stages.u).zip(p_stages) {
        let dc = crate::newton::fd_gradient(|x| sys.cost(x, u), q, &cfg)?;
        d1.push(sys.f_jacobian(q, u)?.transpose() * p - dc);
    }
    let mut worst = 0.0_f64;
    for j in 0..s {
        let mut r = p1 * (h * tab.big_b[j]);
        for i in 0..s {
            r -= (&p_stages[i] * tab.m[(i, j)] - &d1[i] * (h * tab.a[(i, j)])) * (h * tab.b[i]);
        }
        worst = worst.max(r.amax());
    }
    Ok(worst)
}

/// Stage model whose control is the stacked `(U^1, …, U^s)`.
#[derive(Clone)]
pub struct GalerkinStageModel {
    pub system: Arc<dyn ControlSystem>,
    pub tableau: GalerkinTableau,
    pub h: f64,
    pub cfg: NewtonConfig,
}

impl fmt::Debug for GalerkinStageModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GalerkinStageModel")
            .field("system", &self.system.name())
            .field("tableau", &self.tableau.name)
            .field("h", &self.h)
            .finish()
    }
}

impl GalerkinStageModel {
    pub fn split(&self, u: &Vector) -> Result<Vec<Vector>> {
        let s = self.tableau.stages();
        if u.len() != s * self.system.control_dim() {
            return Err(Error::Dimension(format!(
                "stacked control has {} coordinates, expected {}",
                u.len(),
                s * self.system.control_dim()
            )));
        }
        Ok(unstack(u, s))
    }
}

impl StageModel for GalerkinStageModel {
    fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    fn control_dim(&self) -> usize {
        self.tableau.stages() * self.system.control_dim()
    }

    fn dynamics(&self, q: &Vector, u: &Vector) -> Result<Vector> {
        discrete_dynamics(self.system.as_ref(), &self.tableau, q, &self.split(u)?, self.h, &self.cfg)
    }

    fn cost(&self, q: &Vector, u: &Vector) -> Result<f64> {
        discrete_cost(self.system.as_ref(), &self.tableau, q, &self.split(u)?, self.h, &self.cfg)
    }
}

/// A discrete problem over `N` Galerkin steps; `stage_box` bounds each `U^i`.
pub fn build_docp(
    system: Arc<dyn ControlSystem>,
    tableau: GalerkinTableau,
    h: f64,
    horizon: usize,
    stage_box: &ControlBox,
    q0: Vector,
) -> Result<DiscreteOCP> {
    if stage_box.dim() != system.control_dim() {
        return Err(Error::Dimension(format!(
            "stage control box has {} coordinates, {} has {} controls",
            stage_box.dim(),
            system.name(),
            system.control_dim()
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Invalid(format!("step size must be positive, got {h}")));
    }
    let s = tableau.stages();
    let stacked = ControlBox::new(
        stack(&vec![stage_box.lower.clone(); s]),
        stack(&vec![stage_box.upper.clone(); s]),
    )?;
    let model = GalerkinStageModel {
        system,
        tableau,
        h,
        cfg: NewtonConfig::default(),
    };
    DiscreteOCP::new(Arc::new(model), horizon, stacked, q0).context("Galerkin problem")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn euler_stage_is_frozen_velocity() {
        let sys = heisenberg_system();
        let tab = GalerkinTableau::euler();
        let q0 = v(&[0.3, -0.2, 0.1]);
        let u = vec![v(&[0.5, 1.5])];
        let st = solve_internal_velocities(sys.as_ref(), &tab, &q0, &u, 0.1, &NewtonConfig::default()).unwrap();
        assert_eq!(st.w[0], sys.f(&q0, &u[0]));
    }

    #[test]
    fn zero_vector_field() {
        let sys = FnControlSystem::new("still", 2, 1, |_, _| Vector::zeros(2), |_, _| 0.0);
        let tab = GalerkinTableau::stormer_verlet();
        let q0 = v(&[1.0, 2.0]);
        let u = vec![v(&[1.0]), v(&[-1.0])];
        let cfg = NewtonConfig::default();
        let st = solve_internal_velocities(&sys, &tab, &q0, &u, 0.3, &cfg).unwrap();
        assert!(st.w.iter().all(|w| w.amax() == 0.0));
        assert_eq!(discrete_dynamics(&sys, &tab, &q0, &u, 0.3, &cfg).unwrap(), q0);
        assert_eq!(discrete_cost(&sys, &tab, &q0, &u, 0.3, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn heisenberg_stormer_verlet_step() {
        let sys = heisenberg_system();
        let tab = GalerkinTableau::stormer_verlet();
        let cfg = NewtonConfig::default();
        let q0 = v(&[0.0, 0.0, 0.0]);
        let u = vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let q1 = discrete_dynamics(sys.as_ref(), &tab, &q0, &u, 0.2, &cfg).unwrap();
        // The coupling term carries h²: z = h²(u²v¹ − u¹v²)/4 = 0.04·(−1)/4.
        assert_abs_diff_eq!(q1[0], 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(q1[1], 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(q1[2], -0.01, epsilon = 1e-14);
        let cost = discrete_cost(sys.as_ref(), &tab, &q0, &u, 0.2, &cfg).unwrap();
        assert_abs_diff_eq!(cost, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn hamiltonian_with_zero_costate() {
        let sys = heisenberg_system();
        let tab = GalerkinTableau::stormer_verlet();
        let cfg = NewtonConfig::default();
        let q0 = v(&[0.4, 0.1, -0.3]);
        let u = vec![v(&[1.0, 0.5]), v(&[-0.2, 0.3])];
        let h = galerkin_control_hamiltonian(sys.as_ref(), &tab, &q0, &Vector::zeros(3), &u, 0.1, &cfg).unwrap();
        let c = discrete_cost(sys.as_ref(), &tab, &q0, &u, 0.1, &cfg).unwrap();
        assert_eq!(h, -c);
    }

    #[test]
    fn linear_quadratic_hand_assembly() {
        // f = a q + u, C = ½(q² + u²), n = m = 1, Störmer–Verlet tableau:
        // w¹ = ½[(a q0 + u¹) + (a(q0 + h w¹) + u²)], so w¹ = (2a q0 + u¹ + u²) / (2 − a h).
        let a = 0.7;
        let sys = FnControlSystem::new("lin", 1, 1, move |q, u| q * a + u, |q, u| 0.5 * (q.norm_squared() + u.norm_squared()));
        let tab = GalerkinTableau::stormer_verlet();
        let (q0, p1, h) = (0.9, -1.3, 0.25);
        let (u1, u2) = (0.4, -0.6);
        let w1 = (2.0 * a * q0 + u1 + u2) / (2.0 - a * h);
        let q_stage2 = q0 + h * w1;
        let expected = p1 * (q0 + h * w1) - h * 0.5 * (0.5 * (q0 * q0 + u1 * u1) + 0.5 * (q_stage2 * q_stage2 + u2 * u2));
        let got = galerkin_control_hamiltonian(&sys, &tab, &v(&[q0]), &v(&[p1]), &[v(&[u1]), v(&[u2])], h, &NewtonConfig::default()).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn stacked_control_dimension() {
        let ocp = build_docp(
            heisenberg_system(),
            GalerkinTableau::stormer_verlet(),
            0.1,
            3,
            &ControlBox::symmetric(2, 1.0).unwrap(),
            Vector::zeros(3),
        )
        .unwrap();
        assert_eq!(ocp.control_dim(), 4);
    }
}

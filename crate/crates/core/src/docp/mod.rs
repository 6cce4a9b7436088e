//! Discrete optimal control: the control Hamiltonian and its maximizer,
//! Pontryagin residuals, Bellman backward recursion on state grids, and the
//! costate/value-gradient relation.

mod bellman;
mod grid;
mod lq;
mod optimize;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

pub use bellman::{bellman_backward, costate_from_value, BellmanConfig, BellmanSolution, CostateEstimate, Policy};
pub use grid::{multilinear, Axis, Cubic, GridSpec, Interpolator, Multilinear, ValueGrid};
pub use lq::{lq_value_analytic, sign_bridge, terminal_penalty, LqProblem, LqSolution};
pub use optimize::{maximize_over_box, ControlBox, ControlSearchConfig, Maximizer};

use crate::error::{Error, Result, ResultExt};
use crate::newton::{fd_gradient, fd_jacobian, NewtonConfig};
use crate::types::{DiscreteHamiltonianRight, Vector};

/// One stage of a discrete control problem: `q_{k+1} = f_d(q_k, u_k)` with cost `C_d(q_k, u_k)`.
pub trait StageModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn control_dim(&self) -> usize;

    fn dynamics(&self, q: &Vector, u: &Vector) -> Result<Vector>;

    fn cost(&self, q: &Vector, u: &Vector) -> Result<f64>;

    /// `(D₁f_d, D₂f_d)`; central differences unless overridden.
    fn dynamics_jacobians(&self, q: &Vector, u: &Vector) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let cfg = NewtonConfig::default();
        let dq = fd_jacobian(|x: &Vector| self.dynamics(x, u), q, &cfg)?;
        let du = fd_jacobian(|x: &Vector| self.dynamics(q, x), u, &cfg)?;
        Ok((dq, du))
    }

    /// `(D₁C_d, D₂C_d)`; central differences unless overridden.
    fn cost_gradients(&self, q: &Vector, u: &Vector) -> Result<(Vector, Vector)> {
        let cfg = NewtonConfig::default();
        let eval = |q: &Vector, u: &Vector| self.cost(q, u).unwrap_or(f64::NAN);
        let dq = fd_gradient(|x| eval(x, u), q, &cfg)?;
        let du = fd_gradient(|x| eval(q, x), u, &cfg)?;
        Ok((dq, du))
    }
}

type DynamicsFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
type CostFn = Arc<dyn Fn(&Vector, &Vector) -> f64 + Send + Sync>;

/// A stage model built from closures.
#[derive(Clone)]
pub struct FnStageModel {
    n: usize,
    m: usize,
    f: DynamicsFn,
    c: CostFn,
}

impl fmt::Debug for FnStageModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnStageModel").field("n", &self.n).field("m", &self.m).finish()
    }
}

impl FnStageModel {
    pub fn new<F, C>(n: usize, m: usize, f: F, c: C) -> Self
    where
        F: Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
        C: Fn(&Vector, &Vector) -> f64 + Send + Sync + 'static,
    {
        Self {
            n,
            m,
            f: Arc::new(f),
            c: Arc::new(c),
        }
    }
}

impl StageModel for FnStageModel {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn control_dim(&self) -> usize {
        self.m
    }

    fn dynamics(&self, q: &Vector, u: &Vector) -> Result<Vector> {
        let next = (self.f)(q, u);
        if next.len() != self.n {
            return Err(Error::Dimension(format!(
                "dynamics returned {} coordinates, expected {}",
                next.len(),
                self.n
            )));
        }
        match next.iter().position(|x| !x.is_finite()) {
            Some(coordinate) => Err(Error::NonFinite { coordinate }),
            None => Ok(next),
        }
    }

    fn cost(&self, q: &Vector, u: &Vector) -> Result<f64> {
        let c = (self.c)(q, u);
        if c.is_finite() {
            Ok(c)
        } else {
            Err(Error::NonFinite { coordinate: 0 })
        }
    }
}

/// A finite-horizon problem: minimize `Σ C_d(q_k, u_k)` subject to the stage dynamics.
#[derive(Clone)]
pub struct DiscreteOCP {
    pub model: Arc<dyn StageModel>,
    pub horizon: usize,
    pub control_box: ControlBox,
    pub q0: Vector,
}

impl fmt::Debug for DiscreteOCP {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteOCP")
            .field("n", &self.model.state_dim())
            .field("m", &self.model.control_dim())
            .field("horizon", &self.horizon)
            .field("control_box", &self.control_box)
            .field("q0", &self.q0)
            .finish()
    }
}

impl DiscreteOCP {
    pub fn new(model: Arc<dyn StageModel>, horizon: usize, control_box: ControlBox, q0: Vector) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::Invalid("horizon N must be at least 1".into()));
        }
        if control_box.dim() != model.control_dim() {
            return Err(Error::Dimension(format!(
                "control box has {} coordinates, model has {} controls",
                control_box.dim(),
                model.control_dim()
            )));
        }
        if q0.len() != model.state_dim() {
            return Err(Error::Dimension(format!(
                "q0 has {} coordinates, model has {} states",
                q0.len(),
                model.state_dim()
            )));
        }
        Ok(Self {
            model,
            horizon,
            control_box,
            q0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.model.control_dim()
    }
}

/// `Ĥ(q, p, u) = p·f_d(q, u) − C_d(q, u)`.
pub fn control_hamiltonian(ocp: &DiscreteOCP, q: &Vector, p: &Vector, u: &Vector) -> Result<f64> {
    Ok(p.dot(&ocp.model.dynamics(q, u)?) - ocp.model.cost(q, u)?)
}

/// Maximizes `Ĥ(q, p, ·)` over the control box.
pub fn maximize_control(ocp: &DiscreteOCP, q: &Vector, p: &Vector, cfg: &ControlSearchConfig) -> Result<Maximizer> {
    let result = maximize_over_box(|u| control_hamiltonian(ocp, q, p, u), &ocp.control_box, cfg)?;
    if result.non_concave {
        log::warn!("control Hamiltonian is not strictly concave at u = {:?}", result.u.as_slice());
    }
    Ok(result)
}

/// Max-norm residual of `q_{k+1} = f_d(q_k, u_k)`, `p_k = D₁f_dᵀp_{k+1} − D₁C_d`
/// and `D₃Ĥ(q_k, p_{k+1}, u_k) = 0` over all stages.
pub fn pontryagin_residual(ocp: &DiscreteOCP, states: &[Vector], controls: &[Vector], costates: &[Vector]) -> Result<f64> {
    let n = controls.len();
    if states.len() != n + 1 || costates.len() != n + 1 {
        return Err(Error::Dimension(format!(
            "{} states, {} controls and {} costates are inconsistent",
            states.len(),
            n,
            costates.len()
        )));
    }
    let mut worst = 0.0_f64;
    for k in 0..n {
        let (q, u, p_next) = (&states[k], &controls[k], &costates[k + 1]);
        let model = &ocp.model;
        let state = &states[k + 1] - model.dynamics(q, u)?;
        let (fq, fu) = model.dynamics_jacobians(q, u)?;
        let (cq, cu) = model.cost_gradients(q, u)?;
        let costate = &costates[k] - (fq.transpose() * p_next - cq);
        let stationarity = fu.transpose() * p_next - cu;
        worst = worst.max(state.amax()).max(costate.amax()).max(stationarity.amax());
    }
    Ok(worst)
}

/// A control law `u_k = κ(k, q_k)`.
pub trait Feedback: Send + Sync {
    fn control(&self, k: usize, q: &Vector) -> Result<Vector>;

    /// Grid the law is tabulated on, for escape checks.
    fn domain(&self) -> Option<&GridSpec> {
        None
    }
}

pub struct FnFeedback<F>(pub F);

impl<F> Feedback for FnFeedback<F>
where
    F: Fn(usize, &Vector) -> Vector + Send + Sync,
{
    fn control(&self, k: usize, q: &Vector) -> Result<Vector> {
        Ok((self.0)(k, q))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vector>,
    pub controls: Vec<Vector>,
    pub cost: f64,
}

/// Share of an axis range a state may leave the grid by before it counts as escaped.
pub const ESCAPE_MARGIN: f64 = 0.1;

/// Simulates `steps` stages under a feedback law from `q0`.
pub fn rollout(ocp: &DiscreteOCP, law: &dyn Feedback, q0: &Vector, steps: usize) -> Result<Rollout> {
    let mut states = vec![q0.clone()];
    let mut controls = Vec::with_capacity(steps);
    let mut cost = 0.0;
    for k in 0..steps {
        let q = &states[k];
        let u = law.control(k, q).with_context(|| format!("feedback at stage {k}"))?;
        cost += ocp.model.cost(q, &u)?;
        let next = ocp.model.dynamics(q, &u)?;
        if let Some(grid) = law.domain() {
            let excursion = grid.excursion(&next);
            if excursion > ESCAPE_MARGIN {
                return Err(Error::Escape {
                    stage: k,
                    node: 0,
                    detail: format!("rollout state {:?} is {:.3} axis ranges outside the grid", next.as_slice(), excursion),
                });
            }
        }
        controls.push(u);
        states.push(next);
    }
    Ok(Rollout { states, controls, cost })
}

/// The right discrete Hamiltonian `H⁺(q, p') = max_u Ĥ(q, p', u)`, with partials
/// from the envelope theorem at the maximizer.
pub fn optimal_control_hamiltonian(ocp: &DiscreteOCP, cfg: ControlSearchConfig) -> DiscreteHamiltonianRight {
    let best = {
        let ocp = ocp.clone();
        move |q: &Vector, p: &Vector| -> Result<Vector> { Ok(maximize_control(&ocp, q, p, &cfg)?.u) }
    };
    let value = {
        let (ocp, best) = (ocp.clone(), best.clone());
        move |q: &Vector, p: &Vector| match best(q, p) {
            Ok(u) => control_hamiltonian(&ocp, q, p, &u).unwrap_or(f64::NAN),
            Err(_) => f64::NAN,
        }
    };
    let d1 = {
        let (ocp, best) = (ocp.clone(), best.clone());
        move |q: &Vector, p: &Vector| -> Vector {
            let partial = || -> Result<Vector> {
                let u = best(q, p)?;
                let (fq, _) = ocp.model.dynamics_jacobians(q, &u)?;
                let (cq, _) = ocp.model.cost_gradients(q, &u)?;
                Ok(fq.transpose() * p - cq)
            };
            partial().unwrap_or_else(|_| Vector::from_element(q.len(), f64::NAN))
        }
    };
    let d2 = {
        let ocp = ocp.clone();
        move |q: &Vector, p: &Vector| -> Vector {
            best(q, p)
                .and_then(|u| ocp.model.dynamics(q, &u))
                .unwrap_or_else(|_| Vector::from_element(q.len(), f64::NAN))
        }
    };
    DiscreteHamiltonianRight::new(value).with_d1(d1).with_d2(d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn scalar_ocp(h: f64) -> DiscreteOCP {
        let model = FnStageModel::new(1, 1, move |q, u| q + u * h, move |_, u| 0.5 * h * u.norm_squared());
        DiscreteOCP::new(Arc::new(model), 1, ControlBox::symmetric(1, 10.0).unwrap(), v(&[0.0])).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let ocp = {
            let model = FnStageModel::new(1, 1, |q, u| q + u, |_, u| 0.5 * u.norm_squared());
            DiscreteOCP::new(Arc::new(model), 1, ControlBox::symmetric(1, 5.0).unwrap(), v(&[0.0])).unwrap()
        };
        assert_eq!(control_hamiltonian(&ocp, &v(&[0.0]), &v(&[1.0]), &v(&[2.0])).unwrap(), 0.0);
        assert_eq!(control_hamiltonian(&ocp, &v(&[0.3]), &v(&[0.0]), &v(&[2.0])).unwrap(), -2.0);
    }

    #[test]
    fn maximizer_is_costate() {
        let ocp = scalar_ocp(0.1);
        let cfg = ControlSearchConfig::default();
        for p in [-2.3, 0.0, 0.7, 4.0] {
            let r = maximize_control(&ocp, &v(&[0.5]), &v(&[p]), &cfg).unwrap();
            assert_abs_diff_eq!(r.u[0], p, epsilon = 1e-8);
            assert!(!r.non_concave);
        }
    }

    #[test]
    fn maximizer_clamps() {
        let ocp = scalar_ocp(0.1);
        let r = maximize_control(&ocp, &v(&[0.5]), &v(&[30.0]), &ControlSearchConfig::default()).unwrap();
        assert_eq!(r.u[0], 10.0);
    }

    #[test]
    fn constant_trajectory_has_zero_residual() {
        let model = FnStageModel::new(2, 1, |q, _| q.clone(), |_, _| 0.0);
        let ocp = DiscreteOCP::new(Arc::new(model), 3, ControlBox::symmetric(1, 1.0).unwrap(), v(&[1.0, 2.0])).unwrap();
        let states = vec![v(&[1.0, 2.0]); 4];
        let controls = vec![v(&[0.4]); 3];
        let costates = vec![v(&[-3.0, 0.5]); 4];
        assert!(pontryagin_residual(&ocp, &states, &controls, &costates).unwrap() < 1e-9);
    }

    #[test]
    fn zero_policy_rollout() {
        let model = FnStageModel::new(1, 1, |q, u| q + u, |q, u| 0.5 * (q.norm_squared() + u.norm_squared()));
        let ocp = DiscreteOCP::new(Arc::new(model), 3, ControlBox::symmetric(1, 1.0).unwrap(), v(&[2.0])).unwrap();
        let law = FnFeedback(|_, _: &Vector| v(&[0.0]));
        let r = rollout(&ocp, &law, &v(&[2.0]), 3).unwrap();
        assert_eq!(r.states, vec![v(&[2.0]); 4]);
        assert_eq!(r.cost, 6.0);
        let empty = rollout(&ocp, &law, &v(&[2.0]), 0).unwrap();
        assert_eq!(empty.states, vec![v(&[2.0])]);
        assert_eq!(empty.cost, 0.0);
    }

    #[test]
    fn rejects_zero_horizon() {
        let model = FnStageModel::new(1, 1, |q, _| q.clone(), |_, _| 0.0);
        assert!(DiscreteOCP::new(Arc::new(model), 0, ControlBox::symmetric(1, 1.0).unwrap(), v(&[0.0])).is_err());
    }
}

//! The Heisenberg system and tools for order-of-accuracy studies.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{discrete_dynamics, ControlSystem, GalerkinTableau};
use crate::error::{Error, Result};
use crate::newton::NewtonConfig;
use crate::types::Vector;

/// `ẋ = u`, `ẏ = v`, `ż = u y − v x` with cost `½(u² + v²)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Heisenberg;

impl ControlSystem for Heisenberg {
    fn name(&self) -> &str {
        "heisenberg"
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn f(&self, q: &Vector, u: &Vector) -> Vector {
        Vector::from_column_slice(&[u[0], u[1], u[0] * q[1] - u[1] * q[0]])
    }

    fn cost(&self, _q: &Vector, u: &Vector) -> f64 {
        0.5 * (u[0] * u[0] + u[1] * u[1])
    }

    fn f_jacobian(&self, _q: &Vector, u: &Vector) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(3, 3);
        j[(2, 0)] = -u[1];
        j[(2, 1)] = u[0];
        Ok(j)
    }
}

pub fn heisenberg_system() -> Arc<dyn ControlSystem> {
    Arc::new(Heisenberg)
}

/// Closed-form two-stage step with `ψ = (1, cos πτ)`, `c = (0, 1)`:
/// `x + h(u¹+u²)/2`, `y + h(v¹+v²)/2`,
/// `z + h[(u¹+u²)y/2 − (v¹+v²)x/2] + h²(u²v¹ − u¹v²)/4`.
pub fn heisenberg_fd_closed_form(q: &Vector, u1: &Vector, u2: &Vector, h: f64) -> Vector {
    let (x, y, z) = (q[0], q[1], q[2]);
    let (su, sv) = (u1[0] + u2[0], u1[1] + u2[1]);
    Vector::from_column_slice(&[
        x + h * su / 2.0,
        y + h * sv / 2.0,
        z + h * (su / 2.0 * y - sv / 2.0 * x) + h * h * (u2[0] * u1[1] - u1[0] * u2[1]) / 4.0,
    ])
}

/// Classical fourth-order Runge–Kutta for `q̇ = f(q, u(t))` on `[0, t_end]`.
pub fn rk4_reference(
    sys: &dyn ControlSystem,
    control: &dyn Fn(f64) -> Vector,
    q0: &Vector,
    t_end: f64,
    steps: usize,
) -> Result<Vector> {
    if steps == 0 || !(t_end > 0.0) {
        return Err(Error::Invalid("reference needs a positive horizon and step count".into()));
    }
    let h = t_end / steps as f64;
    let rhs = |t: f64, q: &Vector| sys.f(q, &control(t));
    let mut q = q0.clone();
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = rhs(t, &q);
        let k2 = rhs(t + h / 2.0, &(&q + &k1 * (h / 2.0)));
        let k3 = rhs(t + h / 2.0, &(&q + &k2 * (h / 2.0)));
        let k4 = rhs(t + h, &(&q + &k3 * h));
        q += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    if let Some(coordinate) = q.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { coordinate });
    }
    Ok(q)
}

/// Max-norm error at `t_end` of `steps` Galerkin steps with stage controls
/// sampled from the signal, `U^i = u(t_k + c_i h)`.
#[allow(clippy::too_many_arguments)]
pub fn global_error(
    sys: &dyn ControlSystem,
    tab: &GalerkinTableau,
    control: &dyn Fn(f64) -> Vector,
    q0: &Vector,
    t_end: f64,
    steps: usize,
    reference: &Vector,
    cfg: &NewtonConfig,
) -> Result<f64> {
    if steps == 0 {
        return Err(Error::Invalid("need at least one step".into()));
    }
    let h = t_end / steps as f64;
    let mut q = q0.clone();
    for k in 0..steps {
        let t = k as f64 * h;
        let u: Vec<Vector> = tab.c.iter().map(|c| control(t + c * h)).collect();
        q = discrete_dynamics(sys, tab, &q, &u, h, cfg)?;
    }
    Ok((q - reference).amax())
}

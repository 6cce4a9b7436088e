//! Finite-difference derivatives and the damped Newton solver shared by every
//! implicit solve in the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition estimates above this are treated as singular by [`newton_solve`].
pub const NEWTON_SINGULAR_CONDITION: f64 = 1e14;

/// Maximum number of step halvings in the damped Newton line search.
const MAX_HALVINGS: usize = 30;

/// When the line search stalls, a residual within this factor of the
/// tolerance is taken as converged: partials obtained by finite differences
/// carry noise of order `eps^(2/3)` that no step can remove.
pub const NOISE_FLOOR_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub abs_tol: f64,
    pub max_iter: usize,
    pub fd_step_scale: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_iter: 50,
            fd_step_scale: f64::EPSILON.cbrt(),
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) {
            return Err(Error::Invalid(format!(
                "abs_tol must be positive, got {}",
                self.abs_tol
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::Invalid("max_iter must be at least 1".into()));
        }
        if !(self.fd_step_scale > 0.0) {
            return Err(Error::Invalid(format!(
                "fd_step_scale must be positive, got {}",
                self.fd_step_scale
            )));
        }
        Ok(())
    }

    /// Central-difference step for coordinate value `x`.
    pub fn fd_step(&self, x: f64) -> f64 {
        self.fd_step_scale * x.abs().max(1.0)
    }
}

/// Result of a successful Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn matrix_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Ratio of extreme singular values; infinite for exactly singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !max.is_finite() {
        return f64::INFINITY;
    }
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn check_finite(v: &DVector<f64>) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(coordinate) => Err(Error::NonFinite { coordinate }),
        None => Ok(()),
    }
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, x: &DVector<f64>, cfg: &NewtonConfig) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let step = cfg.fd_step(x[i]);
        probe[i] = x[i] + step;
        let plus = f(&probe);
        probe[i] = x[i] - step;
        let minus = f(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite { coordinate: i });
        }
        grad[i] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Central-difference Jacobian of a vector function with per-coordinate steps.
pub fn fd_jacobian_with<F, S>(f: F, x: &DVector<f64>, step: S) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    S: Fn(f64) -> f64,
{
    let mut probe = x.clone();
    let mut columns = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step(x[i]);
        probe[i] = x[i] + h;
        let plus = f(&probe).map_err(|_| Error::NonFinite { coordinate: i })?;
        probe[i] = x[i] - h;
        let minus = f(&probe).map_err(|_| Error::NonFinite { coordinate: i })?;
        probe[i] = x[i];
        if plus.iter().chain(minus.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { coordinate: i });
        }
        columns.push((plus - minus) / (2.0 * h));
    }
    if columns.is_empty() {
        let rows = f(x)?.len();
        return Ok(DMatrix::zeros(rows, 0));
    }
    Ok(DMatrix::from_columns(&columns))
}

pub fn fd_jacobian<F>(f: F, x: &DVector<f64>, cfg: &NewtonConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    fd_jacobian_with(f, x, |xi| cfg.fd_step(xi))
}

/// Condition estimate `max(σ_max, 1) / σ_min`, so that a uniformly tiny
/// Jacobian of an O(1) residual counts as singular.
fn scaled_condition(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(1.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !max.is_finite() || min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `residual(x) = 0` by damped Newton with a finite-difference Jacobian.
///
/// A difference Jacobian cannot resolve singular values below its rounding
/// noise, about `eps / fd_step_scale`, so the singularity threshold is tightened
/// accordingly.
pub fn newton_solve<F>(residual: F, x0: &DVector<f64>, cfg: &NewtonConfig) -> Result<NewtonSolution>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let limit = (cfg.fd_step_scale / (100.0 * f64::EPSILON)).min(NEWTON_SINGULAR_CONDITION);
    newton_core(&residual, |x: &DVector<f64>| fd_jacobian(&residual, x, cfg), x0, cfg, limit)
}

/// Damped Newton with a caller-supplied Jacobian.
///
/// The step is halved (at most 30 times) until the residual max-norm
/// decreases; failure to decrease is reported as non-convergence.
pub fn newton_solve_with_jacobian<F, J>(
    residual: F,
    jacobian: J,
    x0: &DVector<f64>,
    cfg: &NewtonConfig,
) -> Result<NewtonSolution>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    J: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    newton_core(residual, jacobian, x0, cfg, NEWTON_SINGULAR_CONDITION)
}

fn newton_core<F, J>(
    residual: F,
    jacobian: J,
    x0: &DVector<f64>,
    cfg: &NewtonConfig,
    singular_condition: f64,
) -> Result<NewtonSolution>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    J: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    cfg.validate()?;
    let mut x = x0.clone();
    let mut r = residual(&x)?;
    check_finite(&r)?;
    let mut norm = inf_norm(&r);

    for iteration in 0..cfg.max_iter {
        if norm <= cfg.abs_tol {
            return Ok(NewtonSolution {
                x,
                iterations: iteration,
                residual_norm: norm,
            });
        }
        let jac = jacobian(&x)?;
        if jac.nrows() != r.len() || jac.ncols() != x.len() {
            return Err(Error::Dimension(format!(
                "Jacobian is {}x{}, expected {}x{}",
                jac.nrows(),
                jac.ncols(),
                r.len(),
                x.len()
            )));
        }
        let condition = scaled_condition(&jac);
        if !(condition <= singular_condition) {
            return Err(Error::SingularJacobian { condition });
        }
        let dx = jac
            .lu()
            .solve(&(-&r))
            .ok_or(Error::SingularJacobian { condition })?;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &x + &dx * scale;
            if let Ok(rt) = residual(&trial) {
                if rt.iter().all(|v| v.is_finite()) {
                    let nt = inf_norm(&rt);
                    if nt < norm || nt <= cfg.abs_tol {
                        accepted = Some((trial, rt, nt));
                        break;
                    }
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((xt, rt, nt)) => {
                x = xt;
                r = rt;
                norm = nt;
            }
            None if norm <= NOISE_FLOOR_FACTOR * cfg.abs_tol => {
                return Ok(NewtonSolution {
                    x,
                    iterations: iteration + 1,
                    residual_norm: norm,
                })
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations: iteration + 1,
                    residual: norm,
                    last_iterate: x.iter().copied().collect(),
                })
            }
        }
    }
    if norm <= cfg.abs_tol {
        Ok(NewtonSolution {
            x,
            iterations: cfg.max_iter,
            residual_norm: norm,
        })
    } else {
        Err(Error::NonConvergence {
            iterations: cfg.max_iter,
            residual: norm,
            last_iterate: x.iter().copied().collect(),
        })
    }
}

/// The canonical symplectic matrix `[[0, I], [-I, 0]]` of size `2n`.
pub fn canonical_symplectic(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// `‖Aᵀ J A − J‖∞` for a `2n × 2n` matrix.
pub fn symplectic_defect(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows() / 2;
    let j = canonical_symplectic(n);
    matrix_inf_norm(&(a.transpose() * &j * a - &j))
}

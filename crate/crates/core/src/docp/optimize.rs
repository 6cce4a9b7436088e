//! Box-constrained maximization of a smooth objective over the controls.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::Vector;

/// Per-coordinate bounds on the control.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    pub lower: Vector,
    pub upper: Vector,
}

impl ControlBox {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "control box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(Error::Invalid("control box has no coordinates".into()));
        }
        for i in 0..lower.len() {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] <= upper[i]) {
                return Err(Error::Invalid(format!(
                    "control box coordinate {i} has bounds [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-r, r]^m`.
    pub fn symmetric(m: usize, r: f64) -> Result<Self> {
        Self::new(Vector::from_element(m, -r), Vector::from_element(m, r))
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, u: &Vector) -> bool {
        u.len() == self.dim()
            && (0..self.dim()).all(|i| u[i] >= self.lower[i] && u[i] <= self.upper[i])
    }

    pub fn clamp(&self, u: &Vector) -> Vector {
        Vector::from_fn(self.dim(), |i, _| u[i].clamp(self.lower[i], self.upper[i]))
    }

    fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSearchConfig {
    /// Scan points per control axis for the seed.
    pub scan_points: usize,
    pub newton_iterations: usize,
    /// Pattern search stops once its step falls below this fraction of the box width.
    pub pattern_tol: f64,
}

impl Default for ControlSearchConfig {
    fn default() -> Self {
        Self {
            scan_points: 17,
            newton_iterations: 50,
            pattern_tol: 1e-10,
        }
    }
}

impl ControlSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scan_points < 1 {
            return Err(Error::Invalid("scan_points must be at least 1".into()));
        }
        if !(self.pattern_tol > 0.0) {
            return Err(Error::Invalid("pattern_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maximizer {
    pub u: Vector,
    pub value: f64,
    /// The second derivative over the free coordinates was not negative at `u`.
    pub non_concave: bool,
}

/// Strict preference: larger value, then smaller norm, then lexicographically smaller.
fn better(a: (&Vector, f64), b: (&Vector, f64)) -> bool {
    if a.1 != b.1 {
        return a.1 > b.1;
    }
    let (na, nb) = (a.0.norm_squared(), b.0.norm_squared());
    if na != nb {
        return na < nb;
    }
    a.0.iter().zip(b.0.iter()).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y)
}

fn improves(new: f64, old: f64) -> bool {
    new > old + 1e-15 * (1.0 + old.abs())
}

fn fd_step(x: f64) -> f64 {
    1e-4 * x.abs().max(1.0)
}

fn gradient_hessian<F>(f: &F, u: &Vector, f0: f64) -> Result<(Vector, DMatrix<f64>)>
where
    F: Fn(&Vector) -> Result<f64>,
{
    let m = u.len();
    let h: Vec<f64> = u.iter().map(|x| fd_step(*x)).collect();
    let mut g = Vector::zeros(m);
    let mut hess = DMatrix::zeros(m, m);
    let mut probe = u.clone();
    for i in 0..m {
        probe[i] = u[i] + h[i];
        let fp = f(&probe)?;
        probe[i] = u[i] - h[i];
        let fm = f(&probe)?;
        probe[i] = u[i];
        g[i] = (fp - fm) / (2.0 * h[i]);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let mut eval = |si: f64, sj: f64| {
                probe[i] = u[i] + si * h[i];
                probe[j] = u[j] + sj * h[j];
                let v = f(&probe);
                probe[i] = u[i];
                probe[j] = u[j];
                v
            };
            let mixed = (eval(1.0, 1.0)? - eval(1.0, -1.0)? - eval(-1.0, 1.0)? + eval(-1.0, -1.0)?)
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = mixed;
            hess[(j, i)] = mixed;
        }
    }
    Ok((g, hess))
}

/// Coordinates that may move: interior, or at a bound with the gradient pointing inward.
fn free_set(bx: &ControlBox, u: &Vector, g: &Vector) -> Vec<usize> {
    (0..u.len())
        .filter(|&i| {
            let at_lower = u[i] <= bx.lower[i];
            let at_upper = u[i] >= bx.upper[i];
            bx.width(i) > 0.0 && !(at_lower && g[i] <= 0.0) && !(at_upper && g[i] >= 0.0)
        })
        .collect()
}

fn scan_seed<F>(f: &F, bx: &ControlBox, points: usize) -> Result<(Vector, f64)>
where
    F: Fn(&Vector) -> Result<f64>,
{
    let m = bx.dim();
    let axis = |i: usize, j: usize| -> f64 {
        if points == 1 || bx.width(i) == 0.0 {
            0.5 * (bx.lower[i] + bx.upper[i])
        } else if j + 1 == points {
            bx.upper[i]
        } else {
            bx.lower[i] + bx.width(i) * j as f64 / (points - 1) as f64
        }
    };
    let total = points.checked_pow(m as u32).ok_or_else(|| {
        Error::Invalid(format!("control scan of {points}^{m} points is too large"))
    })?;
    let mut best: Option<(Vector, f64)> = None;
    let mut u = Vector::zeros(m);
    for flat in 0..total {
        let mut c = flat;
        for i in (0..m).rev() {
            u[i] = axis(i, c % points);
            c /= points;
        }
        let v = f(&u)?;
        if !v.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(bu, bv)| better((&u, v), (bu, *bv))) {
            best = Some((u.clone(), v));
        }
    }
    // Zero is also a candidate when admissible, so flat objectives pick it.
    let zero = Vector::zeros(m);
    if bx.contains(&zero) {
        let v = f(&zero)?;
        if v.is_finite() && best.as_ref().is_none_or(|(bu, bv)| better((&zero, v), (bu, *bv))) {
            best = Some((zero, v));
        }
    }
    best.ok_or(Error::NonFinite { coordinate: 0 })
}

fn newton_refine<F>(f: &F, bx: &ControlBox, mut u: Vector, mut value: f64, iterations: usize) -> Result<(Vector, f64)>
where
    F: Fn(&Vector) -> Result<f64>,
{
    for _ in 0..iterations {
        let (g, hess) = gradient_hessian(f, &u, value)?;
        let free = free_set(bx, &u, &g);
        if free.is_empty() {
            break;
        }
        let k = free.len();
        let gf = Vector::from_fn(k, |a, _| g[free[a]]);
        let hf = DMatrix::from_fn(k, k, |a, b| hess[(free[a], free[b])]);
        // Ascent direction: Newton when −H is positive definite, else gradient.
        let df = match (-hf).cholesky() {
            Some(chol) => chol.solve(&gf),
            None => gf.clone(),
        };
        let mut d = Vector::zeros(u.len());
        for (a, &i) in free.iter().enumerate() {
            d[i] = df[a];
        }
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial = bx.clamp(&(&u + &d * scale));
            let v = f(&trial)?;
            if v.is_finite() && improves(v, value) {
                u = trial;
                value = v;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok((u, value))
}

fn pattern_refine<F>(f: &F, bx: &ControlBox, mut u: Vector, mut value: f64, initial: f64, tol: f64) -> Result<(Vector, f64)>
where
    F: Fn(&Vector) -> Result<f64>,
{
    let m = u.len();
    let mut step = initial;
    while step > tol {
        let mut moved = false;
        for i in 0..m {
            if bx.width(i) == 0.0 {
                continue;
            }
            for sign in [-1.0, 1.0] {
                let mut trial = u.clone();
                trial[i] = (u[i] + sign * step * bx.width(i)).clamp(bx.lower[i], bx.upper[i]);
                let v = f(&trial)?;
                if v.is_finite() && improves(v, value) {
                    u = trial;
                    value = v;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok((u, value))
}

/// Maximizes `f` over the box: a coarse scan seeds projected Newton, and a
/// compass search finishes across kinks of piecewise-smooth objectives.
pub fn maximize_over_box<F>(f: F, bx: &ControlBox, cfg: &ControlSearchConfig) -> Result<Maximizer>
where
    F: Fn(&Vector) -> Result<f64>,
{
    cfg.validate()?;
    let (seed, seed_value) = scan_seed(&f, bx, cfg.scan_points)?;
    let (u, value) = newton_refine(&f, bx, seed, seed_value, cfg.newton_iterations)?;
    let initial = 1.0 / (cfg.scan_points.max(2) - 1) as f64;
    let (u, value) = pattern_refine(&f, bx, u, value, initial, cfg.pattern_tol)?;

    let (g, hess) = gradient_hessian(&f, &u, value)?;
    let free = free_set(bx, &u, &g);
    let non_concave = if free.is_empty() {
        false
    } else {
        let k = free.len();
        let hf = DMatrix::from_fn(k, k, |a, b| hess[(free[a], free[b])]);
        let top = hf.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        top >= -1e-9 * (1.0 + value.abs())
    };
    Ok(Maximizer {
        u,
        value,
        non_concave,
    })
}

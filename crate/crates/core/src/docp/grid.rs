//! Rectangular state grids and interpolation of nodal tables.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::Vector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::Invalid(format!("axis bounds [{min}, {max}] are not an interval")));
        }
        if points < 2 {
            return Err(Error::Invalid(format!("axis needs at least 2 points, got {points}")));
        }
        Ok(Self { min, max, points })
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.max
        } else {
            self.min + i as f64 * self.spacing()
        }
    }

    /// Cell index `i` and fractional offset `t ∈ [0, 1]` of a clamped coordinate.
    fn locate(&self, x: f64) -> (usize, f64) {
        let x = x.clamp(self.min, self.max);
        let s = (x - self.min) / self.spacing();
        let i = (s.floor() as usize).min(self.points - 2);
        (i, (s - i as f64).clamp(0.0, 1.0))
    }
}

/// Tensor-product grid; node index is row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Invalid("grid needs at least one axis".into()));
        }
        Ok(Self { axes })
    }

    /// The same axis repeated `dim` times.
    pub fn uniform(dim: usize, min: f64, max: f64, points: usize) -> Result<Self> {
        Self::new(vec![Axis::new(min, max, points)?; dim])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (d, axis) in self.axes.iter().enumerate().rev() {
            idx[d] = flat % axis.points;
            flat /= axis.points;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (i, axis)| acc * axis.points + i)
    }

    pub fn node(&self, flat: usize) -> Vector {
        let idx = self.multi_index(flat);
        Vector::from_iterator(self.dim(), idx.iter().zip(&self.axes).map(|(&i, a)| a.node(i)))
    }

    pub fn nodes(&self) -> Vec<Vector> {
        (0..self.node_count()).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, q: &Vector) -> bool {
        q.len() == self.dim()
            && q.iter().zip(&self.axes).all(|(x, a)| *x >= a.min && *x <= a.max)
    }

    /// Largest excursion of `q` outside the grid, as a fraction of each axis range.
    pub fn excursion(&self, q: &Vector) -> f64 {
        q.iter()
            .zip(&self.axes)
            .map(|(x, a)| {
                let outside = (a.min - x).max(x - a.max).max(0.0);
                if x.is_finite() {
                    outside / a.range()
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn check_dim(&self, q: &Vector) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, grid has {} axes",
                q.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Evaluates a nodal table at arbitrary points. Queries outside the grid are
/// clamped to its boundary.
pub trait Interpolator: Send + Sync {
    fn name(&self) -> &'static str;

    fn interpolate(&self, grid: &GridSpec, values: &[f64], q: &Vector) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Multilinear;

impl Interpolator for Multilinear {
    fn name(&self) -> &'static str {
        "multilinear"
    }

    fn interpolate(&self, grid: &GridSpec, values: &[f64], q: &Vector) -> f64 {
        let cells: Vec<(usize, f64)> = grid.axes().iter().zip(q.iter()).map(|(a, x)| a.locate(*x)).collect();
        let n = grid.dim();
        let mut total = 0.0;
        let mut idx = vec![0; n];
        for corner in 0..(1usize << n) {
            let mut weight = 1.0;
            for d in 0..n {
                let (i, t) = cells[d];
                if corner >> d & 1 == 1 {
                    idx[d] = i + 1;
                    weight *= t;
                } else {
                    idx[d] = i;
                    weight *= 1.0 - t;
                }
            }
            if weight != 0.0 {
                total += weight * values[grid.flat_index(&idx)];
            }
        }
        total
    }
}

/// Keys cubic convolution (`a = −½`) with quadratic extrapolation for the
/// ghost nodes, so quadratics are reproduced exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cubic;

fn keys_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

fn ghost_value(grid: &GridSpec, values: &[f64], idx: &mut [i64]) -> f64 {
    for d in 0..idx.len() {
        let n = grid.axes()[d].points as i64;
        let i = idx[d];
        if i < 0 || i >= n {
            let (a, b, c) = if i < 0 { (0, 1, 2) } else { (n - 1, n - 2, n - 3) };
            let mut at = |j: i64| {
                let saved = idx[d];
                idx[d] = j;
                let v = ghost_value(grid, values, idx);
                idx[d] = saved;
                v
            };
            return if n >= 3 {
                3.0 * at(a) - 3.0 * at(b) + at(c)
            } else {
                2.0 * at(a) - at(b)
            };
        }
    }
    let flat: Vec<usize> = idx.iter().map(|&i| i as usize).collect();
    values[grid.flat_index(&flat)]
}

impl Interpolator for Cubic {
    fn name(&self) -> &'static str {
        "cubic"
    }

    fn interpolate(&self, grid: &GridSpec, values: &[f64], q: &Vector) -> f64 {
        let n = grid.dim();
        let cells: Vec<(usize, [f64; 4])> = grid
            .axes()
            .iter()
            .zip(q.iter())
            .map(|(a, x)| {
                let (i, t) = a.locate(*x);
                (i, keys_weights(t))
            })
            .collect();
        let mut total = 0.0;
        let mut idx = vec![0i64; n];
        for corner in 0..4usize.pow(n as u32) {
            let mut weight = 1.0;
            let mut c = corner;
            for d in 0..n {
                let offset = c % 4;
                c /= 4;
                idx[d] = cells[d].0 as i64 + offset as i64 - 1;
                weight *= cells[d].1[offset];
            }
            if weight != 0.0 {
                total += weight * ghost_value(grid, values, &mut idx);
            }
        }
        total
    }
}

pub fn multilinear() -> Arc<dyn Interpolator> {
    Arc::new(Multilinear)
}

/// Per-stage value tables `J^0..J^N` on one grid.
#[derive(Clone)]
pub struct ValueGrid {
    pub grid: GridSpec,
    pub stages: Vec<Vec<f64>>,
    pub interpolator: Arc<dyn Interpolator>,
}

impl fmt::Debug for ValueGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValueGrid")
            .field("grid", &self.grid)
            .field("stages", &self.stages.len())
            .field("interpolator", &self.interpolator.name())
            .finish()
    }
}

impl ValueGrid {
    pub fn new(grid: GridSpec, stages: Vec<Vec<f64>>, interpolator: Arc<dyn Interpolator>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Invalid("value grid has no stages".into()));
        }
        for (k, table) in stages.iter().enumerate() {
            if table.len() != grid.node_count() {
                return Err(Error::Dimension(format!(
                    "stage {k} has {} values for {} nodes",
                    table.len(),
                    grid.node_count()
                )));
            }
            if let Some(node) = table.iter().position(|v| !v.is_finite()) {
                return Err(Error::Escape {
                    stage: k,
                    node,
                    detail: "non-finite value".into(),
                });
            }
        }
        Ok(Self {
            grid,
            stages,
            interpolator,
        })
    }

    /// `N`, one less than the number of stored tables.
    pub fn horizon(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn value(&self, k: usize, q: &Vector) -> Result<f64> {
        let table = self.stages.get(k).ok_or_else(|| {
            Error::Invalid(format!("stage {k} out of range (horizon {})", self.horizon()))
        })?;
        self.grid.check_dim(q)?;
        Ok(self.interpolator.interpolate(&self.grid, table, q))
    }
}

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::grid::{multilinear, GridSpec, Interpolator, Multilinear, ValueGrid};
use super::optimize::{maximize_over_box, ControlBox, ControlSearchConfig};
use super::{DiscreteOCP, Feedback, ESCAPE_MARGIN};
use crate::error::{Error, Result};
use crate::types::Vector;

#[derive(Clone)]
pub struct BellmanConfig {
    pub search: ControlSearchConfig,
    pub interpolator: Arc<dyn Interpolator>,
    pub escape_margin: f64,
}

impl Default for BellmanConfig {
    fn default() -> Self {
        Self {
            search: ControlSearchConfig::default(),
            interpolator: multilinear(),
            escape_margin: ESCAPE_MARGIN,
        }
    }
}

impl fmt::Debug for BellmanConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BellmanConfig")
            .field("search", &self.search)
            .field("interpolator", &self.interpolator.name())
            .field("escape_margin", &self.escape_margin)
            .finish()
    }
}

/// Minimizing controls `u*_k` tabulated on the value grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub grid: GridSpec,
    pub control_box: ControlBox,
    /// `controls[k][node]` for `k = 0..N−1`.
    pub controls: Vec<Vec<Vector>>,
}

impl Policy {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }
}

/// Controls are interpolated componentwise (multilinear) and clamped to the box.
impl Feedback for Policy {
    fn control(&self, k: usize, q: &Vector) -> Result<Vector> {
        let table = self
            .controls
            .get(k)
            .ok_or_else(|| Error::Invalid(format!("policy has no stage {k}")))?;
        self.grid.check_dim(q)?;
        let m = self.control_box.dim();
        let u = Vector::from_fn(m, |i, _| {
            let component: Vec<f64> = table.iter().map(|u| u[i]).collect();
            Multilinear.interpolate(&self.grid, &component, q)
        });
        Ok(self.control_box.clamp(&u))
    }

    fn domain(&self) -> Option<&GridSpec> {
        Some(&self.grid)
    }
}

#[derive(Debug, Clone)]
pub struct BellmanSolution {
    pub values: ValueGrid,
    pub policy: Policy,
    /// Nodes, over all stages, where the stage objective was not strictly convex in `u`.
    pub non_concave_nodes: usize,
}

/// Backward recursion `J^k(q) = min_u [J^{k+1}(f_d(q, u)) + C_d(q, u)]` on the
/// grid nodes, starting from `J^N = terminal`. Nodes of one stage are solved
/// in parallel.
pub fn bellman_backward(
    ocp: &DiscreteOCP,
    grid: &GridSpec,
    terminal: &(dyn Fn(&Vector) -> f64 + Sync),
    cfg: &BellmanConfig,
) -> Result<BellmanSolution> {
    if grid.dim() != ocp.state_dim() {
        return Err(Error::Dimension(format!(
            "grid has {} axes, problem has {} states",
            grid.dim(),
            ocp.state_dim()
        )));
    }
    cfg.search.validate()?;
    let nodes = grid.nodes();
    let n_stages = ocp.horizon;
    let terminal_table: Vec<f64> = nodes.iter().map(terminal).collect();
    if let Some(node) = terminal_table.iter().position(|v| !v.is_finite()) {
        return Err(Error::Escape {
            stage: n_stages,
            node,
            detail: "terminal value is not finite".into(),
        });
    }
    let mut stages = vec![Vec::new(); n_stages + 1];
    stages[n_stages] = terminal_table;
    let mut controls = vec![Vec::new(); n_stages];
    let mut non_concave_nodes = 0;

    for k in (0..n_stages).rev() {
        let next = &stages[k + 1];
        let solved: Vec<(f64, Vector, bool)> = nodes
            .par_iter()
            .enumerate()
            .map(|(node, q)| -> Result<(f64, Vector, bool)> {
                let objective = |u: &Vector| -> Result<f64> {
                    let qn = ocp.model.dynamics(q, u)?;
                    Ok(-(cfg.interpolator.interpolate(grid, next, &qn) + ocp.model.cost(q, u)?))
                };
                let best = maximize_over_box(objective, &ocp.control_box, &cfg.search)
                    .map_err(|e| e.context(format!("stage {k}, node {node}")))?;
                let landing = ocp.model.dynamics(q, &best.u)?;
                let excursion = grid.excursion(&landing);
                if excursion > cfg.escape_margin {
                    return Err(Error::Escape {
                        stage: k,
                        node,
                        detail: format!(
                            "f_d(q, u*) = {:?} is {:.3} axis ranges outside the grid",
                            landing.as_slice(),
                            excursion
                        ),
                    });
                }
                Ok((-best.value, best.u, best.non_concave))
            })
            .collect::<Result<_>>()?;
        let mut table = Vec::with_capacity(solved.len());
        let mut policy = Vec::with_capacity(solved.len());
        for (value, u, flag) in solved {
            table.push(value);
            policy.push(u);
            non_concave_nodes += flag as usize;
        }
        stages[k] = table;
        controls[k] = policy;
    }
    if non_concave_nodes > 0 {
        log::warn!("{non_concave_nodes} grid nodes had a stage objective that is not strictly convex in u");
    }
    Ok(BellmanSolution {
        values: ValueGrid::new(grid.clone(), stages, cfg.interpolator.clone())?,
        policy: Policy {
            grid: grid.clone(),
            control_box: ocp.control_box.clone(),
            controls,
        },
        non_concave_nodes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostateEstimate {
    pub p: Vector,
    /// A one-sided difference was used on some axis near the boundary.
    pub one_sided: bool,
}

/// `p_k = −DJ^k(c_k)` by differences of the interpolated table with a step of
/// one grid spacing.
pub fn costate_from_value(values: &ValueGrid, states: &[Vector]) -> Result<Vec<CostateEstimate>> {
    if states.len() > values.stages.len() {
        return Err(Error::Dimension(format!(
            "{} states for {} value stages",
            states.len(),
            values.stages.len()
        )));
    }
    states
        .iter()
        .enumerate()
        .map(|(k, q)| {
            values.grid.check_dim(q)?;
            if !values.grid.contains(q) {
                return Err(Error::Invalid(format!(
                    "state {:?} at stage {k} lies outside the value grid",
                    q.as_slice()
                )));
            }
            let mut p = Vector::zeros(q.len());
            let mut one_sided = false;
            for (i, axis) in values.grid.axes().iter().enumerate() {
                let h = axis.spacing();
                let shifted = |d: f64| {
                    let mut x = q.clone();
                    x[i] += d;
                    values.value(k, &x)
                };
                let up = q[i] + h <= axis.max;
                let down = q[i] - h >= axis.min;
                p[i] = -match (down, up) {
                    (true, true) => (shifted(h)? - shifted(-h)?) / (2.0 * h),
                    (false, true) => (shifted(h)? - shifted(0.0)?) / h,
                    (true, false) => (shifted(0.0)? - shifted(-h)?) / h,
                    (false, false) => {
                        return Err(Error::Invalid(format!("axis {i} has no room for a difference")))
                    }
                };
                if !(down && up) {
                    one_sided = true;
                }
            }
            if one_sided {
                log::warn!("one-sided costate difference near the grid boundary at stage {k}");
            }
            Ok(CostateEstimate { p, one_sided })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{FnStageModel, StageModel};
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn one_stage() -> DiscreteOCP {
        let model = FnStageModel::new(1, 1, |q, u| q + u, |q, u| 0.5 * (q.norm_squared() + u.norm_squared()));
        DiscreteOCP::new(Arc::new(model), 1, ControlBox::symmetric(1, 2.0).unwrap(), v(&[0.0])).unwrap()
    }

    #[test]
    fn one_stage_zero_terminal() {
        let grid = GridSpec::uniform(1, -1.0, 1.0, 21).unwrap();
        let sol = bellman_backward(&one_stage(), &grid, &|_| 0.0, &BellmanConfig::default()).unwrap();
        for (node, q) in grid.nodes().iter().enumerate() {
            assert_abs_diff_eq!(sol.values.stages[0][node], 0.5 * q[0] * q[0], epsilon = 1e-12);
            assert_abs_diff_eq!(sol.policy.controls[0][node][0], 0.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn one_stage_quadratic_terminal() {
        // Stationarity (q + u) + u = 0 gives u* = −q/2 and J⁰ = ¾q². Landing
        // points q/2 stay on nodes for an even grid, so interpolation is exact there.
        let grid = GridSpec::uniform(1, -1.0, 1.0, 41).unwrap();
        let sol = bellman_backward(&one_stage(), &grid, &|q| 0.5 * q[0] * q[0], &BellmanConfig::default()).unwrap();
        for (node, q) in grid.nodes().iter().enumerate() {
            assert_abs_diff_eq!(sol.values.stages[0][node], 0.75 * q[0] * q[0], epsilon = 4e-4);
            assert_abs_diff_eq!(sol.policy.controls[0][node][0], -0.5 * q[0], epsilon = 3e-2);
        }
    }

    #[test]
    fn constant_terminal_without_cost() {
        let model = FnStageModel::new(1, 1, |q, u| q + u * 0.1, |_, _| 0.0);
        let ocp = DiscreteOCP::new(Arc::new(model), 3, ControlBox::symmetric(1, 1.0).unwrap(), v(&[0.0])).unwrap();
        let grid = GridSpec::uniform(1, -1.0, 1.0, 11).unwrap();
        let sol = bellman_backward(&ocp, &grid, &|_| 2.5, &BellmanConfig::default()).unwrap();
        assert!(sol.values.stages.iter().flatten().all(|j| *j == 2.5));
    }

    #[test]
    fn escape_names_stage_and_node() {
        let model = FnStageModel::new(1, 1, |q, _| q * 3.0, |_, _| 0.0);
        let ocp = DiscreteOCP::new(Arc::new(model), 2, ControlBox::symmetric(1, 1.0).unwrap(), v(&[0.0])).unwrap();
        let grid = GridSpec::uniform(1, -1.0, 1.0, 5).unwrap();
        let err = bellman_backward(&ocp, &grid, &|_| 0.0, &BellmanConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Escape { stage: 1, node: 0, .. }), "{err:?}");
    }

    #[test]
    fn costate_of_quadratic_table() {
        let grid = GridSpec::uniform(1, -2.0, 2.0, 17).unwrap();
        let table: Vec<f64> = grid.nodes().iter().map(|q| 0.75 * q[0] * q[0]).collect();
        let values = ValueGrid::new(grid, vec![table.clone(), vec![3.0; table.len()]], multilinear()).unwrap();
        let est = costate_from_value(&values, &[v(&[1.0]), v(&[0.3])]).unwrap();
        assert_abs_diff_eq!(est[0].p[0], -1.5, epsilon = 1e-12);
        assert!(!est[0].one_sided);
        assert_eq!(est[1].p[0], 0.0);
        let edge = costate_from_value(&values, &[v(&[1.9])]).unwrap();
        assert!(edge[0].one_sided);
    }

    #[test]
    fn policy_interpolates_and_clamps() {
        let grid = GridSpec::uniform(1, 0.0, 1.0, 2).unwrap();
        let policy = Policy {
            grid,
            control_box: ControlBox::symmetric(1, 1.0).unwrap(),
            controls: vec![vec![v(&[0.0]), v(&[4.0])]],
        };
        assert_eq!(policy.control(0, &v(&[0.125])).unwrap()[0], 0.5);
        assert_eq!(policy.control(0, &v(&[0.9])).unwrap()[0], 1.0);
        let model = FnStageModel::new(1, 1, |q, u| q + u, |_, _| 0.0);
        assert_eq!(model.control_dim(), 1);
    }
}

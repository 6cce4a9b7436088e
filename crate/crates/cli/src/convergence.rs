//! Observed order of accuracy from errors at successively halved steps.

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Errors at or below this are treated as exact.
pub const SATURATION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Slope {
    Value(f64),
    Saturated(Saturated),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Saturated {
    Saturated,
}

impl Slope {
    pub fn value(&self) -> Option<f64> {
        match self {
            Slope::Value(x) => Some(*x),
            Slope::Saturated(_) => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Slope::Value(x) => crate::output::fmt_real(*x),
            Slope::Saturated(_) => "saturated".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    /// `slopes[i]` compares entries `i` and `i + 1`.
    pub slopes: Vec<Slope>,
    /// Least-squares slope of `log e` against `log h` over unsaturated entries.
    pub fitted_slope: Option<f64>,
    pub non_monotone: bool,
    pub saturated: bool,
}

impl ConvergenceReport {
    /// Every unsaturated pairwise slope lies within `tol` of `order`.
    pub fn within(&self, order: f64, tol: f64) -> bool {
        let values: Vec<f64> = self.slopes.iter().filter_map(Slope::value).collect();
        !values.is_empty() && values.iter().all(|s| (s - order).abs() <= tol)
    }
}

/// Slopes `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`, which are `log2` error
/// ratios for halved steps.
pub fn report_convergence(steps: &[f64], errors: &[f64]) -> Result<ConvergenceReport, CliError> {
    if steps.len() != errors.len() {
        return Err(CliError::Validation(format!(
            "{} step sizes for {} errors",
            steps.len(),
            errors.len()
        )));
    }
    if steps.len() < 3 {
        return Err(CliError::Validation("convergence needs at least 3 step sizes".into()));
    }
    if steps.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(CliError::Validation("step sizes must be positive".into()));
    }
    if steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Validation("step sizes must decrease".into()));
    }
    if errors.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(CliError::Check("errors must be finite and non-negative".into()));
    }
    let saturated_at = |e: f64| e <= SATURATION_FLOOR;
    let mut slopes = Vec::with_capacity(steps.len() - 1);
    let mut non_monotone = false;
    for i in 0..steps.len() - 1 {
        let (e0, e1) = (errors[i], errors[i + 1]);
        if saturated_at(e0) || saturated_at(e1) {
            slopes.push(Slope::Saturated(Saturated::Saturated));
            continue;
        }
        if e1 > e0 {
            non_monotone = true;
        }
        slopes.push(Slope::Value((e0 / e1).ln() / (steps[i] / steps[i + 1]).ln()));
    }
    if non_monotone {
        log::warn!("errors do not decrease monotonically: {errors:?}");
    }
    let points: Vec<(f64, f64)> = steps
        .iter()
        .zip(errors)
        .filter(|(_, e)| !saturated_at(**e))
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    let fitted_slope = (points.len() >= 2).then(|| {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(ConvergenceReport {
        steps: steps.to_vec(),
        errors: errors.to_vec(),
        saturated: slopes.iter().any(|s| matches!(s, Slope::Saturated(_))),
        slopes,
        fitted_slope,
        non_monotone,
    })
}

//! Experiment configuration: one JSON document per run, matrices as row-major
//! nested arrays.

use std::path::Path;

use discrete_hj::linhj::Matrix;
use discrete_hj::{NewtonConfig, Vector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub type Rows = Vec<Vec<f64>>;

/// Reads and parses a config, keeping the raw bytes for hashing.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, Vec<u8>), CliError> {
    let raw = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parsed = parse(&raw)?;
    Ok((parsed, raw))
}

pub fn parse<T: DeserializeOwned>(raw: &[u8]) -> Result<T, CliError> {
    let mut de = serde_json::Deserializer::from_slice(raw);
    serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        if path == "." || path.is_empty() {
            CliError::Validation(format!("config: {inner}"))
        } else {
            CliError::Validation(format!("config field `{path}`: {inner}"))
        }
    })
}

pub fn matrix(name: &str, rows: &Rows) -> Result<Matrix, CliError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(CliError::Validation(format!("matrix `{name}` is empty")));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(CliError::Validation(format!(
            "matrix `{name}` row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(CliError::Validation(format!("matrix `{name}` has a non-finite entry")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn vector(name: &str, xs: &[f64], len: usize) -> Result<Vector, CliError> {
    if xs.len() != len {
        return Err(CliError::Validation(format!(
            "`{name}` has {} entries, expected {len}",
            xs.len()
        )));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Validation(format!("`{name}` has a non-finite entry")));
    }
    Ok(Vector::from_column_slice(xs))
}

pub fn positive(name: &str, x: f64) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Validation(format!("`{name}` must be positive, got {x}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    #[default]
    Right,
    Left,
}

/// Either a registered model or a quadratic left Hamiltonian
/// `H⁻ = ½pᵀM⁻¹p + ½q'ᵀKq' + pᵀLq'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    Builtin {
        name: String,
        #[serde(default)]
        form: Form,
    },
    Quadratic {
        #[serde(rename = "M")]
        m: Rows,
        #[serde(rename = "K")]
        k: Rows,
        #[serde(rename = "L")]
        l: Rows,
        #[serde(default)]
        form: Form,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSettings {
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_abs_tol() -> f64 {
    NewtonConfig::default().abs_tol
}

fn default_max_iter() -> usize {
    NewtonConfig::default().max_iter
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            abs_tol: default_abs_tol(),
            max_iter: default_max_iter(),
        }
    }
}

impl NewtonSettings {
    pub fn build(&self) -> Result<NewtonConfig, CliError> {
        let cfg = NewtonConfig {
            abs_tol: self.abs_tol,
            max_iter: self.max_iter,
            ..NewtonConfig::default()
        };
        cfg.validate().map_err(|e| CliError::Validation(format!("newton: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateConfig {
    pub hamiltonian: HamiltonianSpec,
    /// Step size for built-in models; defaults to the model's own.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(rename = "N")]
    pub steps: usize,
    pub q0: Vec<f64>,
    pub p0: Vec<f64>,
    #[serde(default)]
    pub newton: NewtonSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiccatiConfig {
    #[serde(rename = "M")]
    pub m: Rows,
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "L")]
    pub l: Rows,
    /// Defaults to zero.
    #[serde(rename = "A0", default)]
    pub a0: Option<Rows>,
    #[serde(default)]
    pub b0: Option<Vec<f64>>,
    #[serde(default)]
    pub c0: f64,
    #[serde(rename = "N")]
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

/// Explicit initial conditions, or `count` random ones drawn uniformly from
/// `[-radius, radius]` per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConditions {
    List(Vec<InitialCondition>),
    Random { count: usize, seed: u64, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjCheckConfig {
    /// Built-in model name; the right form is used.
    pub hamiltonian: String,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(rename = "N")]
    pub steps: usize,
    pub initial_conditions: InitialConditions,
    #[serde(default = "default_hj_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub newton: NewtonSettings,
}

fn default_hj_tolerance() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalConfig {
    /// `½qᵀPq + sᵀq + r`.
    Quadratic {
        #[serde(rename = "P")]
        p: Rows,
        #[serde(default)]
        s: Option<Vec<f64>>,
        #[serde(default)]
        r: f64,
    },
    /// `μ‖q − target‖²`.
    Penalty {
        target: Vec<f64>,
        #[serde(default = "default_mu")]
        mu: f64,
    },
}

fn default_mu() -> f64 {
    1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSettings {
    #[serde(default = "default_scan_points")]
    pub scan_points: usize,
    #[serde(default = "default_interpolator")]
    pub interpolator: String,
}

fn default_scan_points() -> usize {
    17
}

fn default_interpolator() -> String {
    "multilinear".into()
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            scan_points: default_scan_points(),
            interpolator: default_interpolator(),
        }
    }
}

/// `f_d = Fq + Gu + e`, `C_d = ½qᵀQq + qᵀNu + ½uᵀRu + q_linᵀq + u_linᵀu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqConfig {
    #[serde(rename = "F")]
    pub f: Rows,
    #[serde(rename = "G")]
    pub g: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    #[serde(rename = "Ncross", default)]
    pub n_cross: Option<Rows>,
    #[serde(default)]
    pub e: Option<Vec<f64>>,
    #[serde(default)]
    pub q_lin: Option<Vec<f64>>,
    #[serde(default)]
    pub u_lin: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellmanRunConfig {
    pub problem: LqConfig,
    pub terminal: TerminalConfig,
    #[serde(rename = "N")]
    pub steps: usize,
    pub grid: Vec<AxisConfig>,
    pub control_box: BoxConfig,
    pub q0: Vec<f64>,
    #[serde(default)]
    pub search: SearchSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalerkinBellmanConfig {
    pub system: String,
    pub tableau: String,
    pub h: f64,
    #[serde(rename = "N")]
    pub steps: usize,
    pub grid: Vec<AxisConfig>,
    /// Bounds on each stage control `U^i`.
    pub stage_box: BoxConfig,
    pub terminal: TerminalConfig,
    pub q0: Vec<f64>,
    #[serde(default)]
    pub search: SearchSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeisenbergConfig {
    pub samples: usize,
    pub seed: u64,
    /// Step sizes are drawn from `[h_min, h_max]`.
    pub h_min: f64,
    pub h_max: f64,
    #[serde(default = "unit")]
    pub state_radius: f64,
    #[serde(default = "unit")]
    pub control_radius: f64,
    #[serde(default = "default_heisenberg_tolerance")]
    pub tolerance: f64,
}

fn unit() -> f64 {
    1.0
}

fn default_heisenberg_tolerance() -> f64 {
    1e-10
}

/// `a cos(ωt + φ) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    #[serde(default = "unit")]
    pub amplitude: f64,
    #[serde(default = "unit")]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub offset: f64,
}

impl Sinusoid {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.frequency * t + self.phase).cos() + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub system: String,
    pub tableaus: Vec<String>,
    pub q0: Vec<f64>,
    /// One signal per control coordinate.
    pub controls: Vec<Sinusoid>,
    pub t_end: f64,
    /// Step counts, each double the previous.
    pub steps: Vec<usize>,
    pub reference_steps: usize,
    #[serde(default)]
    pub newton: NewtonSettings,
}

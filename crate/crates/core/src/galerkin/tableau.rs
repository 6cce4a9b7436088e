//! Basis functions on `[0, 1]`, Gauss–Legendre quadrature, and the derived
//! tableau coefficients `A`, `B`, `M`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::linhj::{Matrix, LINEAR_SINGULAR_CONDITION};
use crate::newton::condition_number;
use crate::types::Vector;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A basis function `ψ` with an optional antiderivative.
#[derive(Clone)]
pub struct BasisFunction {
    value: RealFn,
    antiderivative: Option<RealFn>,
}

impl fmt::Debug for BasisFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisFunction")
            .field("analytic_integral", &self.antiderivative.is_some())
            .finish()
    }
}

impl BasisFunction {
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            antiderivative: None,
        }
    }

    pub fn with_antiderivative<F>(mut self, antiderivative: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.antiderivative = Some(Arc::new(antiderivative));
        self
    }

    pub fn constant() -> Self {
        Self::new(|_| 1.0).with_antiderivative(|t| t)
    }

    pub fn cos_pi() -> Self {
        Self::new(|t| (PI * t).cos()).with_antiderivative(|t| (PI * t).sin() / PI)
    }

    pub fn monomial(degree: i32) -> Self {
        Self::new(move |t| t.powi(degree)).with_antiderivative(move |t| t.powi(degree + 1) / (degree + 1) as f64)
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.value)(t)
    }

    pub fn has_antiderivative(&self) -> bool {
        self.antiderivative.is_some()
    }

    /// `∫_0^x ψ`, analytic when available, else by quadrature.
    pub fn integral(&self, x: f64) -> Result<f64> {
        match &self.antiderivative {
            Some(big) => Ok(big(x) - big(0.0)),
            None => quadrature_checked(|t| self.eval(t), 0.0, x),
        }
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn rule(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static GL20: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static GL40: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match n {
        20 => GL20.get_or_init(|| gauss_legendre(20)),
        _ => GL40.get_or_init(|| gauss_legendre(40)),
    }
}

fn quadrature(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = rule(n);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    half * nodes.iter().zip(weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
}

/// 20-point Gauss–Legendre on `[a, b]`, checked against the 40-point rule.
pub fn quadrature_checked(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    let coarse = quadrature(&f, a, b, 20);
    let fine = quadrature(&f, a, b, 40);
    let disagreement = (coarse - fine).abs();
    if !(disagreement <= 1e-10) {
        return Err(Error::Precision {
            what: format!("integral over [{a}, {b}]"),
            disagreement,
        });
    }
    Ok(coarse)
}

/// Basis, quadrature rule `(b, c)`, and the derived
/// `A_ij = ∫_0^{c_i} ψ_j`, `B_i = ∫_0^1 ψ_i`, `M_ij = ψ_j(c_i)`.
#[derive(Debug, Clone)]
pub struct GalerkinTableau {
    pub name: String,
    pub psi: Vec<BasisFunction>,
    pub b: Vector,
    pub c: Vector,
    pub a: Matrix,
    pub big_b: Vector,
    pub m: Matrix,
    m_inv: Matrix,
}

fn validate_rule(psi: &[BasisFunction], b: &Vector, c: &Vector) -> Result<usize> {
    let s = psi.len();
    if s == 0 {
        return Err(Error::Invalid("tableau needs at least one stage".into()));
    }
    if b.len() != s || c.len() != s {
        return Err(Error::Dimension(format!(
            "{s} basis functions with {} weights and {} nodes",
            b.len(),
            c.len()
        )));
    }
    if let Some(i) = b.iter().position(|w| *w == 0.0 || !w.is_finite()) {
        return Err(Error::Invalid(format!("quadrature weight b_{} must be nonzero", i + 1)));
    }
    if let Some(i) = c.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Invalid(format!("quadrature node c_{} lies outside [0, 1]", i + 1)));
    }
    Ok(s)
}

impl GalerkinTableau {
    /// Derives `A`, `B`, `M` from the basis; integrals are analytic where an
    /// antiderivative is supplied, else 20-point Gauss–Legendre.
    pub fn build(name: impl Into<String>, psi: Vec<BasisFunction>, b: Vector, c: Vector) -> Result<Self> {
        let s = validate_rule(&psi, &b, &c)?;
        let mut a = Matrix::zeros(s, s);
        let mut big_b = Vector::zeros(s);
        for j in 0..s {
            big_b[j] = psi[j].integral(1.0)?;
            for i in 0..s {
                a[(i, j)] = psi[j].integral(c[i])?;
            }
        }
        let m = Matrix::from_fn(s, s, |i, j| psi[j].eval(c[i]));
        Self::from_coefficients(name, psi, b, c, a, big_b, m)
    }

    /// Takes the derived coefficients as given.
    pub fn from_coefficients(
        name: impl Into<String>,
        psi: Vec<BasisFunction>,
        b: Vector,
        c: Vector,
        a: Matrix,
        big_b: Vector,
        m: Matrix,
    ) -> Result<Self> {
        let s = validate_rule(&psi, &b, &c)?;
        if a.shape() != (s, s) || m.shape() != (s, s) || big_b.len() != s {
            return Err(Error::Dimension(format!("tableau coefficients do not match s = {s}")));
        }
        let condition = condition_number(&m);
        if !(condition < LINEAR_SINGULAR_CONDITION) {
            return Err(Error::SingularBlock { block: "M", condition });
        }
        let m_inv = m.clone().try_inverse().ok_or(Error::SingularBlock { block: "M", condition })?;
        Ok(Self {
            name: name.into(),
            psi,
            b,
            c,
            a,
            big_b,
            m,
            m_inv,
        })
    }

    /// One stage, `ψ = 1`, `b = (1)`, `c = (0)`: forward Euler.
    pub fn euler() -> Self {
        Self::from_coefficients(
            "euler",
            vec![BasisFunction::constant()],
            Vector::from_element(1, 1.0),
            Vector::from_element(1, 0.0),
            Matrix::zeros(1, 1),
            Vector::from_element(1, 1.0),
            Matrix::from_element(1, 1, 1.0),
        )
        .expect("built-in tableau is valid")
    }

    /// Two stages, `ψ = (1, cos πτ)`, `b = (½, ½)`, `c = (0, 1)`.
    pub fn stormer_verlet() -> Self {
        Self::from_coefficients(
            "stormer_verlet",
            vec![BasisFunction::constant(), BasisFunction::cos_pi()],
            Vector::from_column_slice(&[0.5, 0.5]),
            Vector::from_column_slice(&[0.0, 1.0]),
            Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
            Vector::from_column_slice(&[1.0, 0.0]),
            Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]),
        )
        .expect("built-in tableau is valid")
    }

    pub fn stages(&self) -> usize {
        self.psi.len()
    }

    pub fn m_inverse(&self) -> &Matrix {
        &self.m_inv
    }

    /// Largest gap between the stored coefficients and those derived from the basis.
    pub fn coefficient_defect(&self) -> Result<f64> {
        let rebuilt = Self::build(self.name.clone(), self.psi.clone(), self.b.clone(), self.c.clone())?;
        Ok((&rebuilt.a - &self.a)
            .amax()
            .max((&rebuilt.big_b - &self.big_b).amax())
            .max((&rebuilt.m - &self.m).amax()))
    }
}

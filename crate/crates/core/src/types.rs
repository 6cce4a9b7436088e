//! Phase points and the scalar two-point functions (discrete Hamiltonians and
//! discrete Lagrangians) that generate one step of a symplectic map.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::newton::{fd_gradient, inf_norm, NewtonConfig};

pub type Vector = DVector<f64>;

pub type ScalarFn = Arc<dyn Fn(&Vector, &Vector) -> f64 + Send + Sync>;
pub type PartialFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;

/// A state/costate pair `(q, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vector,
    pub p: Vector,
}

impl PhasePoint {
    pub fn new(q: Vector, p: Vector) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::Dimension(format!(
                "phase point has q of length {} and p of length {}",
                q.len(),
                p.len()
            )));
        }
        if q.iter().chain(p.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Invalid("phase point has non-finite entries".into()));
        }
        Ok(Self { q, p })
    }

    pub fn from_slices(q: &[f64], p: &[f64]) -> Result<Self> {
        Self::new(Vector::from_column_slice(q), Vector::from_column_slice(p))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Stacked coordinates `(q, p)` of length `2n`.
    pub fn to_vector(&self) -> Vector {
        let n = self.dim();
        Vector::from_fn(2 * n, |i, _| if i < n { self.q[i] } else { self.p[i - n] })
    }

    pub fn from_vector(z: &Vector) -> Result<Self> {
        if !z.len().is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "stacked phase vector has odd length {}",
                z.len()
            )));
        }
        let n = z.len() / 2;
        Self::new(z.rows(0, n).into_owned(), z.rows(n, n).into_owned())
    }
}

/// A scalar function of two vector arguments with optional analytic partials.
///
/// Missing partials fall back to central finite differences.
#[derive(Clone)]
pub struct TwoPointFunction {
    value: ScalarFn,
    d1: Option<PartialFn>,
    d2: Option<PartialFn>,
}

impl fmt::Debug for TwoPointFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoPointFunction")
            .field("analytic_d1", &self.d1.is_some())
            .field("analytic_d2", &self.d2.is_some())
            .finish()
    }
}

impl TwoPointFunction {
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(&Vector, &Vector) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            d1: None,
            d2: None,
        }
    }

    pub fn with_d1<F>(mut self, d1: F) -> Self
    where
        F: Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
    {
        self.d1 = Some(Arc::new(d1));
        self
    }

    pub fn with_d2<F>(mut self, d2: F) -> Self
    where
        F: Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
    {
        self.d2 = Some(Arc::new(d2));
        self
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.d1.is_some() && self.d2.is_some()
    }

    pub fn value(&self, a: &Vector, b: &Vector) -> Result<f64> {
        let v = (self.value)(a, b);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { coordinate: 0 })
        }
    }

    pub fn d1(&self, a: &Vector, b: &Vector, cfg: &NewtonConfig) -> Result<Vector> {
        match &self.d1 {
            Some(d1) => finite(d1(a, b)),
            None => fd_gradient(|x| (self.value)(x, b), a, cfg),
        }
    }

    pub fn d2(&self, a: &Vector, b: &Vector, cfg: &NewtonConfig) -> Result<Vector> {
        match &self.d2 {
            Some(d2) => finite(d2(a, b)),
            None => fd_gradient(|x| (self.value)(a, x), b, cfg),
        }
    }

    /// Largest scaled disagreement `‖analytic − fd‖∞ / (1 + ‖analytic‖∞)`
    /// between the supplied partials and finite differences at `(a, b)`.
    /// Zero when no analytic partials are present.
    pub fn partial_defect(&self, a: &Vector, b: &Vector, cfg: &NewtonConfig) -> Result<f64> {
        let mut worst = 0.0_f64;
        if let Some(d1) = &self.d1 {
            let exact = finite(d1(a, b))?;
            let fd = fd_gradient(|x| (self.value)(x, b), a, cfg)?;
            worst = worst.max(inf_norm(&(&exact - fd)) / (1.0 + inf_norm(&exact)));
        }
        if let Some(d2) = &self.d2 {
            let exact = finite(d2(a, b))?;
            let fd = fd_gradient(|x| (self.value)(a, x), b, cfg)?;
            worst = worst.max(inf_norm(&(&exact - fd)) / (1.0 + inf_norm(&exact)));
        }
        Ok(worst)
    }
}

fn finite(v: Vector) -> Result<Vector> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(coordinate) => Err(Error::NonFinite { coordinate }),
        None => Ok(v),
    }
}

macro_rules! two_point_newtype {
    ($(#[$meta:meta])* $name:ident, $first:literal, $second:literal) => {
        $(#[$meta])*
        #[derive(Clone, Debug)]
        pub struct $name(pub TwoPointFunction);

        impl $name {
            #[doc = concat!("Builds from a value function of `(", $first, ", ", $second, ")`.")]
            pub fn new<F>(value: F) -> Self
            where
                F: Fn(&Vector, &Vector) -> f64 + Send + Sync + 'static,
            {
                Self(TwoPointFunction::new(value))
            }

            #[doc = concat!("Analytic partial with respect to `", $first, "`.")]
            pub fn with_d1<F>(self, d1: F) -> Self
            where
                F: Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
            {
                Self(self.0.with_d1(d1))
            }

            #[doc = concat!("Analytic partial with respect to `", $second, "`.")]
            pub fn with_d2<F>(self, d2: F) -> Self
            where
                F: Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
            {
                Self(self.0.with_d2(d2))
            }

            pub fn value(&self, a: &Vector, b: &Vector) -> Result<f64> {
                self.0.value(a, b)
            }

            pub fn d1(&self, a: &Vector, b: &Vector, cfg: &NewtonConfig) -> Result<Vector> {
                self.0.d1(a, b, cfg)
            }

            pub fn d2(&self, a: &Vector, b: &Vector, cfg: &NewtonConfig) -> Result<Vector> {
                self.0.d2(a, b, cfg)
            }

            pub fn partial_defect(&self, a: &Vector, b: &Vector, cfg: &NewtonConfig) -> Result<f64> {
                self.0.partial_defect(a, b, cfg)
            }
        }
    };
}

two_point_newtype!(
    /// Right discrete Hamiltonian `H⁺(q_k, p_{k+1})`, a type-two generating function.
    DiscreteHamiltonianRight,
    "q",
    "p_next"
);
two_point_newtype!(
    /// Left discrete Hamiltonian `H⁻(p_k, q_{k+1})`, a type-three generating function.
    DiscreteHamiltonianLeft,
    "p",
    "q_next"
);
two_point_newtype!(
    /// Discrete Lagrangian `L_d(q_k, q_{k+1})`.
    DiscreteLagrangian,
    "q",
    "q_next"
);

/// A discrete Hamiltonian of either handedness.
#[derive(Clone, Debug)]
pub enum DiscreteHamiltonian {
    Right(DiscreteHamiltonianRight),
    Left(DiscreteHamiltonianLeft),
}

impl From<DiscreteHamiltonianRight> for DiscreteHamiltonian {
    fn from(h: DiscreteHamiltonianRight) -> Self {
        DiscreteHamiltonian::Right(h)
    }
}

impl From<DiscreteHamiltonianLeft> for DiscreteHamiltonian {
    fn from(h: DiscreteHamiltonianLeft) -> Self {
        DiscreteHamiltonian::Left(h)
    }
}

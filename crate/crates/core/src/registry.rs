//! Name-keyed registries of interchangeable strategies.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::docp::{Cubic, Interpolator, Multilinear};
use crate::error::{Error, Result};
use crate::galerkin::{heisenberg_system, ControlSystem, FnControlSystem, GalerkinTableau};
use crate::models::{HamiltonianModel, HenonHeiles, Nonseparable, Pendulum, Shear};
use crate::types::Vector;

/// Strategies of one kind, looked up by name at runtime.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, Arc<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, entry: Arc<T>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Invalid(format!("{} `{name}` is already registered", self.kind)));
        }
        self.entries.insert(name, entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries.get(name).cloned().ok_or_else(|| {
            Error::Invalid(format!(
                "unknown {} `{name}` (known: {})",
                self.kind,
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}

pub fn hamiltonians() -> Registry<dyn HamiltonianModel> {
    let mut r: Registry<dyn HamiltonianModel> = Registry::new("Hamiltonian");
    let entries: [Arc<dyn HamiltonianModel>; 4] = [Arc::new(Shear { dim: 1 }), Arc::new(Pendulum), Arc::new(HenonHeiles), Arc::new(Nonseparable)];
    for e in entries {
        r.register(e.name().to_string(), e).expect("built-in names are distinct");
    }
    r
}

pub fn interpolators() -> Registry<dyn Interpolator> {
    let mut r: Registry<dyn Interpolator> = Registry::new("interpolator");
    r.register("multilinear", Arc::new(Multilinear)).expect("distinct");
    r.register("cubic", Arc::new(Cubic)).expect("distinct");
    r
}

pub fn tableaus() -> Registry<GalerkinTableau> {
    let mut r = Registry::new("tableau");
    r.register("euler", Arc::new(GalerkinTableau::euler())).expect("distinct");
    r.register("stormer_verlet", Arc::new(GalerkinTableau::stormer_verlet())).expect("distinct");
    r
}

/// `q = (x, v)`, `ẋ = v`, `v̇ = u`, `C = ½(x² + v² + u²)`.
pub fn double_integrator() -> Arc<dyn ControlSystem> {
    Arc::new(FnControlSystem::new(
        "double_integrator",
        2,
        1,
        |q, u| Vector::from_column_slice(&[q[1], u[0]]),
        |q, u| 0.5 * (q.norm_squared() + u.norm_squared()),
    ))
}

pub fn control_systems() -> Registry<dyn ControlSystem> {
    let mut r: Registry<dyn ControlSystem> = Registry::new("control system");
    r.register("heisenberg", heisenberg_system()).expect("distinct");
    r.register("double_integrator", double_integrator()).expect("distinct");
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_and_unknown_names() {
        let r = hamiltonians();
        assert_eq!(r.names(), vec!["henon_heiles", "nonseparable", "pendulum", "shear"]);
        assert_eq!(r.get("pendulum").unwrap().dim(), 1);
        let err = r.get("kepler").err().unwrap().to_string();
        assert!(err.contains("kepler") && err.contains("shear"));
    }

    #[test]
    fn duplicate_registration_fails() {
        let mut r = interpolators();
        assert!(r.register("cubic", Arc::new(Cubic)).is_err());
        assert_eq!(tableaus().get("stormer_verlet").unwrap().stages(), 2);
        assert_eq!(control_systems().get("heisenberg").unwrap().control_dim(), 2);
    }
}

//! Parameterized dynamical systems.
//!
//! A [`ModelSystem`] bundles an ordered parameter list with either an ODE
//! right-hand side ([`VectorField`]) or a closed-form observation map
//! ([`ClosedForm`]). Initial conditions are ordinary parameters of kind
//! [`ParamKind::InitialCondition`], so the Fisher information covers them too.

mod nonnormal;
mod normal_forms;
mod polynomial;
mod registry;
mod selkov;
mod toy;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TwigError};

pub use polynomial::{Coefficient, ModelDocument, ParamSpec, PolynomialSystem, SpecKind, Term};
pub use registry::{build_model, registry, ModelInfo, MAX_ORDER};
pub use selkov::{selkov_fixed_point, selkov_separatrix_b};

/// Relative finite-difference step: `h = FD_STEP * (1 + |x|)`.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Rate,
    /// Initial value of the given state component.
    InitialCondition {
        component: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub kind: ParamKind,
}

impl Parameter {
    pub fn rate(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            kind: ParamKind::Rate,
        }
    }

    pub fn initial(name: impl Into<String>, value: f64, component: usize) -> Self {
        Self {
            name: name.into(),
            value,
            kind: ParamKind::InitialCondition { component },
        }
    }

    pub fn is_initial_condition(&self) -> bool {
        matches!(self.kind, ParamKind::InitialCondition { .. })
    }
}

/// How the state vector is laid out geometrically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateKind {
    Cartesian,
    /// `radius` and `angle` index the polar components of the state.
    Polar {
        radius: usize,
        angle: usize,
    },
}

/// An ODE right-hand side `f(y; θ, t)`.
///
/// `params` is always the full parameter vector of the owning model,
/// initial-condition entries included. Analytic Jacobians are optional; the
/// model falls back to central differences when they return `None`.
pub trait VectorField: Send + Sync {
    fn rhs(&self, state: &[f64], params: &[f64], t: f64, out: &mut [f64]);

    fn state_jacobian(&self, _state: &[f64], _params: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        None
    }

    fn param_jacobian(&self, _state: &[f64], _params: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        None
    }

    /// Components that must stay strictly positive (logarithmic terms).
    fn positive_components(&self) -> Vec<usize> {
        Vec::new()
    }
}

/// An explicit trajectory `y(t; θ)`.
pub trait ClosedForm: Send + Sync {
    fn eval(&self, params: &[f64], t: f64, out: &mut [f64]);
}

#[derive(Clone)]
pub enum Dynamics {
    Ode(Arc<dyn VectorField>),
    ClosedForm(Arc<dyn ClosedForm>),
}

/// A parameterized dynamical system. Immutable once built.
#[derive(Clone)]
pub struct ModelSystem {
    pub name: String,
    pub state_dim: usize,
    pub parameters: Vec<Parameter>,
    pub coordinate_kind: CoordinateKind,
    /// Index of the parameter conventionally moved across the bifurcation.
    pub bifurcation_param: Option<usize>,
    dynamics: Dynamics,
}

impl fmt::Debug for ModelSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSystem")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("parameters", &self.parameters)
            .field("coordinate_kind", &self.coordinate_kind)
            .finish_non_exhaustive()
    }
}

impl ModelSystem {
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        parameters: Vec<Parameter>,
        coordinate_kind: CoordinateKind,
        dynamics: Dynamics,
    ) -> Result<Self> {
        let name = name.into();
        if state_dim == 0 {
            return Err(TwigError::InvalidModel("state_dim must be positive".into()));
        }
        for (i, p) in parameters.iter().enumerate() {
            if parameters[..i].iter().any(|q| q.name == p.name) {
                return Err(TwigError::InvalidModel(format!(
                    "duplicate parameter name `{}`",
                    p.name
                )));
            }
        }
        if let Dynamics::Ode(_) = dynamics {
            for c in 0..state_dim {
                let n = parameters
                    .iter()
                    .filter(|p| p.kind == ParamKind::InitialCondition { component: c })
                    .count();
                if n != 1 {
                    return Err(TwigError::InvalidModel(format!(
                        "state component {c} needs exactly one initial-condition parameter, found {n}"
                    )));
                }
            }
        }
        if let Some(ParamKind::InitialCondition { component }) = parameters
            .iter()
            .map(|p| p.kind)
            .find(|k| matches!(k, ParamKind::InitialCondition { component } if *component >= state_dim))
        {
            return Err(TwigError::InvalidModel(format!(
                "initial condition refers to component {component} of a {state_dim}-dimensional state"
            )));
        }
        Ok(Self {
            name,
            state_dim,
            parameters,
            coordinate_kind,
            bifurcation_param: None,
            dynamics,
        })
    }

    pub fn with_bifurcation_param(mut self, index: usize) -> Self {
        self.bifurcation_param = Some(index);
        self
    }

    pub fn n_params(&self) -> usize {
        self.parameters.len()
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn has_rhs(&self) -> bool {
        matches!(self.dynamics, Dynamics::Ode(_))
    }

    pub fn default_params(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.value).collect()
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.parameters
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| TwigError::UnknownParameter(name.to_string()))
    }

    pub fn param_names(&self) -> Vec<String> {
        self.parameters.iter().map(|p| p.name.clone()).collect()
    }

    /// Indices of initial-condition parameters, in parameter order.
    pub fn initial_condition_params(&self) -> Vec<usize> {
        (0..self.parameters.len())
            .filter(|&i| self.parameters[i].is_initial_condition())
            .collect()
    }

    /// Default parameters with the given named overrides applied.
    pub fn params_with(&self, overrides: &[(&str, f64)]) -> Result<Vec<f64>> {
        let mut p = self.default_params();
        for (name, value) in overrides {
            p[self.param_index(name)?] = *value;
        }
        Ok(p)
    }

    /// Initial state read from the initial-condition parameters.
    pub fn initial_state(&self, params: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.state_dim];
        for (p, v) in self.parameters.iter().zip(params) {
            if let ParamKind::InitialCondition { component } = p.kind {
                y[component] = *v;
            }
        }
        y
    }

    pub fn positive_components(&self) -> Vec<usize> {
        match &self.dynamics {
            Dynamics::Ode(f) => f.positive_components(),
            Dynamics::ClosedForm(_) => Vec::new(),
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameters.len() {
            return Err(TwigError::DimensionMismatch {
                what: "parameter vector",
                expected: self.parameters.len(),
                got: params.len(),
            });
        }
        Ok(())
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(TwigError::DimensionMismatch {
                what: "state vector",
                expected: self.state_dim,
                got: state.len(),
            });
        }
        Ok(())
    }

    fn field(&self) -> Result<&dyn VectorField> {
        match &self.dynamics {
            Dynamics::Ode(f) => Ok(f.as_ref()),
            Dynamics::ClosedForm(_) => Err(TwigError::InvalidModel(format!(
                "model `{}` is closed-form only and has no right-hand side",
                self.name
            ))),
        }
    }

    /// `f(y; θ, t)`. Overflow to a non-finite value is reported as divergence.
    pub fn eval_rhs(&self, state: &[f64], params: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_state(state)?;
        self.check_params(params)?;
        let mut out = vec![0.0; self.state_dim];
        self.field()?.rhs(state, params, t, &mut out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(TwigError::Divergence { t })
        }
    }

    /// Closed-form trajectory value, when the model has one.
    pub fn eval_closed_form(&self, params: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_params(params)?;
        match &self.dynamics {
            Dynamics::ClosedForm(g) => {
                let mut out = vec![0.0; self.state_dim];
                g.eval(params, t, &mut out);
                if out.iter().all(|v| v.is_finite()) {
                    Ok(out)
                } else {
                    Err(TwigError::Divergence { t })
                }
            }
            Dynamics::Ode(_) => Err(TwigError::InvalidModel(format!(
                "model `{}` has no closed form",
                self.name
            ))),
        }
    }

    /// `∂f/∂y`, analytic when available.
    pub fn state_jacobian(&self, state: &[f64], params: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.check_state(state)?;
        self.check_params(params)?;
        let jac = match self.field()?.state_jacobian(state, params, t) {
            Some(j) => j,
            None => return self.state_jacobian_fd(state, params, t),
        };
        finite_or(jac, "state jacobian")
    }

    /// Central-difference `∂f/∂y`.
    pub fn state_jacobian_fd(&self, state: &[f64], params: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.check_state(state)?;
        self.check_params(params)?;
        let f = self.field()?;
        let n = self.state_dim;
        let mut jac = DMatrix::zeros(n, n);
        let mut y = state.to_vec();
        let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
        for j in 0..n {
            let h = FD_STEP * (1.0 + state[j].abs());
            y[j] = state[j] + h;
            f.rhs(&y, params, t, &mut fp);
            y[j] = state[j] - h;
            f.rhs(&y, params, t, &mut fm);
            y[j] = state[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        finite_or(jac, "state jacobian")
    }

    /// `∂f/∂θ` (n × m), analytic when available, central differences otherwise.
    pub fn param_jacobian(&self, state: &[f64], params: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.check_state(state)?;
        self.check_params(params)?;
        match self.field()?.param_jacobian(state, params, t) {
            Some(j) => finite_or(j, "parameter jacobian"),
            None => self.param_jacobian_fd(state, params, t),
        }
    }

    /// Central-difference `∂f/∂θ` with step `1e-6 (1 + |θ_j|)`, ignoring any
    /// analytic Jacobian.
    pub fn param_jacobian_fd(&self, state: &[f64], params: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.check_state(state)?;
        self.check_params(params)?;
        if params.iter().any(|v| !v.is_finite()) {
            return Err(TwigError::NonFiniteJacobian { what: "parameters" });
        }
        let f = self.field()?;
        let (n, m) = (self.state_dim, params.len());
        let mut jac = DMatrix::zeros(n, m);
        let mut p = params.to_vec();
        let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
        for j in 0..m {
            if self.parameters[j].is_initial_condition() {
                continue;
            }
            let h = FD_STEP * (1.0 + params[j].abs());
            p[j] = params[j] + h;
            f.rhs(state, &p, t, &mut fp);
            p[j] = params[j] - h;
            f.rhs(state, &p, t, &mut fm);
            p[j] = params[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        finite_or(jac, "parameter jacobian")
    }
}

fn finite_or(jac: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if jac.iter().all(|v| v.is_finite()) {
        Ok(jac)
    } else {
        Err(TwigError::NonFiniteJacobian { what })
    }
}

/// Powers `y^0 ..= y^max` without repeated `powi` calls.
pub(crate) fn powers(y: f64, max: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(max + 1);
    let mut acc = 1.0;
    for _ in 0..=max {
        p.push(acc);
        acc *= y;
    }
    p
}

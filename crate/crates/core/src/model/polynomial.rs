//! User-defined models given as coefficient tables.
//!
//! Each state equation is a sum of monomial terms
//! `c · Π_j y_j^(e_j) · [ln y_l]`, where `c` is either a constant or a named
//! parameter. That is enough to express every built-in system, including the
//! logarithmic ones, without an expression parser.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CoordinateKind, Dynamics, ModelSystem, ParamKind, Parameter, VectorField};
use crate::error::{Result, TwigError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(f64),
    Param { param: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: Coefficient,
    pub powers: Vec<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_of: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    Rate,
    InitialCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub value: f64,
    pub kind: SpecKind,
    /// State component for an initial condition. Defaults to the order in
    /// which initial conditions appear.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
}

/// The JSON document describing a custom model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub state_dim: usize,
    pub params: Vec<ParamSpec>,
    pub equations: Vec<Vec<Term>>,
}

#[derive(Debug, Clone, Copy)]
enum Coeff {
    Constant(f64),
    Param(usize),
}

#[derive(Debug, Clone)]
struct CompiledTerm {
    coeff: Coeff,
    powers: Vec<i32>,
    log_of: Option<usize>,
}

impl CompiledTerm {
    fn monomial(&self, y: &[f64]) -> f64 {
        let mut v = 1.0;
        for (yj, &e) in y.iter().zip(&self.powers) {
            if e != 0 {
                v *= yj.powi(e);
            }
        }
        if let Some(l) = self.log_of {
            v *= y[l].ln();
        }
        v
    }

    fn coefficient(&self, params: &[f64]) -> f64 {
        match self.coeff {
            Coeff::Constant(c) => c,
            Coeff::Param(i) => params[i],
        }
    }

    /// ∂(monomial)/∂y_j.
    fn monomial_derivative(&self, y: &[f64], j: usize) -> f64 {
        let mut base = 1.0;
        let mut dpow = 0.0;
        for (k, (yk, &e)) in y.iter().zip(&self.powers).enumerate() {
            if k == j {
                if e != 0 {
                    dpow = e as f64 * yk.powi(e - 1);
                }
            } else if e != 0 {
                base *= yk.powi(e);
            }
        }
        let pj = if self.powers[j] == 0 {
            1.0
        } else {
            y[j].powi(self.powers[j])
        };
        match self.log_of {
            None => base * dpow,
            Some(l) if l == j => base * (dpow * y[j].ln() + pj / y[j]),
            Some(l) => base * dpow * y[l].ln(),
        }
    }
}

/// Compiled polynomial vector field.
#[derive(Debug, Clone)]
pub struct PolynomialSystem {
    equations: Vec<Vec<CompiledTerm>>,
    log_components: Vec<usize>,
}

impl VectorField for PolynomialSystem {
    fn rhs(&self, state: &[f64], params: &[f64], _t: f64, out: &mut [f64]) {
        for (o, eq) in out.iter_mut().zip(&self.equations) {
            *o = eq
                .iter()
                .map(|term| term.coefficient(params) * term.monomial(state))
                .sum();
        }
    }

    fn state_jacobian(&self, state: &[f64], params: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let n = state.len();
        let mut jac = DMatrix::zeros(n, n);
        for (i, eq) in self.equations.iter().enumerate() {
            for term in eq {
                let c = term.coefficient(params);
                for j in 0..n {
                    jac[(i, j)] += c * term.monomial_derivative(state, j);
                }
            }
        }
        Some(jac)
    }

    fn param_jacobian(&self, state: &[f64], params: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(state.len(), params.len());
        for (i, eq) in self.equations.iter().enumerate() {
            for term in eq {
                if let Coeff::Param(p) = term.coeff {
                    jac[(i, p)] += term.monomial(state);
                }
            }
        }
        Some(jac)
    }

    fn positive_components(&self) -> Vec<usize> {
        self.log_components.clone()
    }
}

impl ModelDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| TwigError::InvalidModel(e.to_string()))
    }

    /// Validate the table and build a [`ModelSystem`].
    pub fn build(&self, name: &str) -> Result<ModelSystem> {
        let n = self.state_dim;
        if self.equations.len() != n {
            return Err(TwigError::InvalidModel(format!(
                "{} equations for a {n}-dimensional state",
                self.equations.len()
            )));
        }
        let mut next_component = 0;
        let mut parameters = Vec::with_capacity(self.params.len());
        for spec in &self.params {
            let kind = match spec.kind {
                SpecKind::Rate => ParamKind::Rate,
                SpecKind::InitialCondition => {
                    let component = spec.component.unwrap_or(next_component);
                    next_component = component + 1;
                    ParamKind::InitialCondition { component }
                }
            };
            if !spec.value.is_finite() {
                return Err(TwigError::InvalidModel(format!(
                    "parameter `{}` has a non-finite value",
                    spec.name
                )));
            }
            parameters.push(Parameter {
                name: spec.name.clone(),
                value: spec.value,
                kind,
            });
        }

        let mut log_components = Vec::new();
        let mut equations = Vec::with_capacity(n);
        for (i, eq) in self.equations.iter().enumerate() {
            let mut compiled = Vec::with_capacity(eq.len());
            for term in eq {
                if term.powers.len() != n {
                    return Err(TwigError::InvalidModel(format!(
                        "equation {i}: term has {} exponents, expected {n}",
                        term.powers.len()
                    )));
                }
                let coeff = match &term.coeff {
                    Coefficient::Constant(c) => Coeff::Constant(*c),
                    Coefficient::Param { param } => {
                        let idx = parameters
                            .iter()
                            .position(|p| &p.name == param)
                            .ok_or_else(|| TwigError::UnknownParameter(param.clone()))?;
                        if parameters[idx].is_initial_condition() {
                            return Err(TwigError::InvalidModel(format!(
                                "initial condition `{param}` used as a coefficient"
                            )));
                        }
                        Coeff::Param(idx)
                    }
                };
                if let Some(l) = term.log_of {
                    if l >= n {
                        return Err(TwigError::InvalidModel(format!(
                            "equation {i}: log_of index {l} out of range"
                        )));
                    }
                    if !log_components.contains(&l) {
                        log_components.push(l);
                    }
                }
                compiled.push(CompiledTerm {
                    coeff,
                    powers: term.powers.clone(),
                    log_of: term.log_of,
                });
            }
            equations.push(compiled);
        }
        log_components.sort_unstable();

        let field = PolynomialSystem {
            equations,
            log_components,
        };
        ModelSystem::new(
            name,
            n,
            parameters,
            CoordinateKind::Cartesian,
            Dynamics::Ode(Arc::new(field)),
        )
    }
}

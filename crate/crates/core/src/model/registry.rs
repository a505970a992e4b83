use std::sync::Arc;

use super::nonnormal::{LogTranscritical, ShiftedLogTranscritical};
use super::normal_forms::{HopfPolar, ScalarNormalForm};
use super::selkov::{selkov_fixed_point, selkov_separatrix_b, Selkov};
use super::toy::ToyExponential;
use super::{CoordinateKind, Dynamics, ModelSystem, Parameter};
use crate::error::{Result, TwigError};

/// Largest number of appended correction terms any model accepts.
pub const MAX_ORDER: usize = 8;

/// Registry entry metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelInfo {
    pub name: &'static str,
    pub summary: &'static str,
    /// Highest supported order (0 when the model takes no corrections).
    pub max_order: usize,
}

const ENTRIES: &[ModelInfo] = &[
    ModelInfo {
        name: "toy_exponential",
        summary: "closed-form y = θ1 + exp(-θ2 t) + exp(θ3 t); offset, decay and growth modes",
        max_order: 0,
    },
    ModelInfo {
        name: "saddle_node",
        summary: "saddle-node normal form  y' = r + y^2 + Σ α_k y^(k+2)",
        max_order: MAX_ORDER,
    },
    ModelInfo {
        name: "transcritical",
        summary: "transcritical normal form  y' = r y - y^2 + Σ α_k y^(k+2)",
        max_order: MAX_ORDER,
    },
    ModelInfo {
        name: "pitchfork_super",
        summary: "supercritical pitchfork normal form  y' = r y - y^3 + Σ α_k y^(k+3)",
        max_order: MAX_ORDER,
    },
    ModelInfo {
        name: "pitchfork_sub",
        summary: "subcritical pitchfork normal form  y' = r y + y^3 + Σ α_k y^(k+3)",
        max_order: MAX_ORDER,
    },
    ModelInfo {
        name: "hopf_polar",
        summary: "Hopf normal form in polar coordinates  y' = μ y - y^3 + α1 y^4 + α2 y^5,  θ' = ω + β y^2 + Σ_{k≥3} α_k y^k",
        max_order: MAX_ORDER,
    },
    ModelInfo {
        name: "nonnormal_transcritical",
        summary: "transcritical not in normal form  y' = r ln y + y - 1 + Σ α_k (y-1)^(k+1)",
        max_order: MAX_ORDER,
    },
    ModelInfo {
        name: "modified_transcritical",
        summary: "movable transcritical  y' = r ln y + (y - α) + Σ b_k (y-α)^(k+1)",
        max_order: MAX_ORDER,
    },
    ModelInfo {
        name: "selkov",
        summary: "Sel'kov glycolysis oscillator with nuisance couplings c1..c4",
        max_order: 0,
    },
];

/// All registry entries, in a stable order.
pub fn registry() -> &'static [ModelInfo] {
    ENTRIES
}

fn alphas(prefix: &str, order: usize) -> impl Iterator<Item = Parameter> + '_ {
    (1..=order).map(move |k| Parameter::rate(format!("{prefix}{k}"), 0.0))
}

fn scalar(
    name: &str,
    field: ScalarNormalForm,
    order: usize,
    r: f64,
    y0: f64,
) -> Result<ModelSystem> {
    let mut params = vec![Parameter::rate("r", r)];
    params.extend(alphas("alpha", order));
    params.push(Parameter::initial("y0", y0, 0));
    Ok(ModelSystem::new(
        name,
        1,
        params,
        CoordinateKind::Cartesian,
        Dynamics::Ode(Arc::new(field)),
    )?
    .with_bifurcation_param(0))
}

/// Build a registry model with `order` correction terms appended.
///
/// Defaults sit at the bifurcation point (just on the stable side of it for
/// `pitchfork_sub`).
pub fn build_model(name: &str, order: usize) -> Result<ModelSystem> {
    let info = ENTRIES
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| TwigError::UnknownModel {
            name: name.to_string(),
            available: ENTRIES
                .iter()
                .map(|e| e.name)
                .collect::<Vec<_>>()
                .join(", "),
        })?;
    if order > info.max_order {
        return Err(TwigError::UnsupportedOrder {
            model: name.to_string(),
            order,
            max: info.max_order,
        });
    }

    match name {
        "toy_exponential" => ModelSystem::new(
            name,
            1,
            vec![
                Parameter::rate("theta1", 1.0),
                Parameter::rate("theta2", 1.0),
                Parameter::rate("theta3", 0.0),
            ],
            CoordinateKind::Cartesian,
            Dynamics::ClosedForm(Arc::new(ToyExponential)),
        ),
        "saddle_node" => scalar(name, ScalarNormalForm::saddle_node(order), order, 0.0, -1.0),
        "transcritical" => scalar(
            name,
            ScalarNormalForm::transcritical(order),
            order,
            0.0,
            1.0,
        ),
        "pitchfork_super" => scalar(
            name,
            ScalarNormalForm::pitchfork_super(order),
            order,
            0.0,
            1.0,
        ),
        // A small start keeps the trajectory inside the basin of the origin,
        // which for r = -0.01 ends at |y| = 0.1.
        "pitchfork_sub" => scalar(
            name,
            ScalarNormalForm::pitchfork_sub(order),
            order,
            -0.01,
            0.05,
        ),
        "hopf_polar" => {
            let mut params = vec![
                Parameter::rate("mu", 0.0),
                Parameter::rate("omega", 1.0),
                Parameter::rate("beta", 0.0),
            ];
            params.extend(alphas("alpha", order));
            params.push(Parameter::initial("y0", 1.0, 0));
            params.push(Parameter::initial("theta0", 0.0, 1));
            Ok(ModelSystem::new(
                name,
                2,
                params,
                CoordinateKind::Polar {
                    radius: 0,
                    angle: 1,
                },
                Dynamics::Ode(Arc::new(HopfPolar { order })),
            )?
            .with_bifurcation_param(0))
        }
        "nonnormal_transcritical" => {
            let mut params = vec![Parameter::rate("r", -1.0)];
            params.extend(alphas("alpha", order));
            params.push(Parameter::initial("y0", 0.5, 0));
            Ok(ModelSystem::new(
                name,
                1,
                params,
                CoordinateKind::Cartesian,
                Dynamics::Ode(Arc::new(LogTranscritical { order })),
            )?
            .with_bifurcation_param(0))
        }
        "modified_transcritical" => {
            let mut params = vec![Parameter::rate("r", -1.0), Parameter::rate("alpha", 1.0)];
            params.extend(alphas("b", order));
            params.push(Parameter::initial("y0", 0.5, 0));
            Ok(ModelSystem::new(
                name,
                1,
                params,
                CoordinateKind::Cartesian,
                Dynamics::Ode(Arc::new(ShiftedLogTranscritical { order, a: 1.0 })),
            )?
            .with_bifurcation_param(0))
        }
        "selkov" => {
            let a = 0.1;
            let b = selkov_separatrix_b(a).expect("a < 1/8");
            let [xf, yf] = selkov_fixed_point(a, b);
            let params = vec![
                Parameter::rate("a", a),
                Parameter::rate("b", b),
                Parameter::rate("c1", 0.0),
                Parameter::rate("c2", 0.0),
                Parameter::rate("c3", 0.0),
                Parameter::rate("c4", 0.0),
                Parameter::initial("x0", xf + 0.1, 0),
                Parameter::initial("y0", yf + 0.1, 1),
            ];
            Ok(ModelSystem::new(
                name,
                2,
                params,
                CoordinateKind::Cartesian,
                Dynamics::Ode(Arc::new(Selkov)),
            )?
            .with_bifurcation_param(1))
        }
        _ => unreachable!("registry entry without a constructor"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_builds_at_order_zero() {
        for e in registry() {
            let m = build_model(e.name, 0).unwrap();
            assert_eq!(m.name, e.name);
        }
    }

    #[test]
    fn registry_contains_required_models() {
        let names: Vec<_> = registry().iter().map(|e| e.name).collect();
        for want in [
            "toy_exponential",
            "saddle_node",
            "transcritical",
            "pitchfork_super",
            "pitchfork_sub",
            "hopf_polar",
            "nonnormal_transcritical",
            "modified_transcritical",
            "selkov",
        ] {
            assert!(names.contains(&want), "{want}");
        }
    }

    #[test]
    fn saddle_node_order_two_layout() {
        let m = build_model("saddle_node", 2).unwrap();
        assert_eq!(m.param_names(), ["r", "alpha1", "alpha2", "y0"]);
        assert_eq!(m.default_params(), [0.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn hopf_order_five_layout() {
        let m = build_model("hopf_polar", 5).unwrap();
        assert_eq!(
            m.param_names(),
            [
                "mu", "omega", "beta", "alpha1", "alpha2", "alpha3", "alpha4", "alpha5", "y0",
                "theta0"
            ]
        );
        assert_eq!(m.initial_condition_params(), [8, 9]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            build_model("lorenz", 0),
            Err(TwigError::UnknownModel { .. })
        ));
        assert!(matches!(
            build_model("saddle_node", MAX_ORDER + 1),
            Err(TwigError::UnsupportedOrder { .. })
        ));
        assert!(matches!(
            build_model("selkov", 1),
            Err(TwigError::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn selkov_fixed_point_residual() {
        let m = build_model("selkov", 0).unwrap();
        let p = m.params_with(&[("b", 0.5)]).unwrap();
        let f = m.eval_rhs(&selkov_fixed_point(0.1, 0.5), &p, 0.0).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-15));
    }
}

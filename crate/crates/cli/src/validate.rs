//! `twig validate`: sensitivity integration against closed forms and finite
//! differences.

use anyhow::Result;

use twig_core::integrate::{
    finite_difference_jacobian, integrate_with_sensitivities, SampleGrid, TrajectoryJacobian,
};
use twig_core::model::ModelSystem;
use twig_core::oracles::{Family, OracleFamily, Which};

pub const TOLERANCE: f64 = 1e-4;
/// Entries smaller than this are skipped in relative comparisons.
const NEGLIGIBLE: f64 = 1e-10;
const SAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub worst: f64,
    /// Parameter and time of the worst entry.
    pub at: Option<(String, f64)>,
    pub compared: usize,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            worst: 0.0,
            at: None,
            compared: 0,
        }
    }

    fn record(&mut self, got: f64, want: f64, param: &str, t: f64) {
        if want.abs() <= NEGLIGIBLE {
            return;
        }
        self.compared += 1;
        let err = (got - want).abs() / want.abs();
        if err > self.worst || err.is_nan() {
            self.worst = err;
            self.at = Some((param.to_string(), t));
        }
    }
}

/// The toy model's derivatives in closed form.
fn toy_check(params: &[f64], tj: &TrajectoryJacobian) -> Check {
    let mut check = Check::new("closed form");
    let names = ["theta1", "theta2", "theta3"];
    for (i, &t) in tj.grid.times.iter().enumerate() {
        let want = [1.0, -t * (-params[1] * t).exp(), t * (params[2] * t).exp()];
        for (j, w) in want.into_iter().enumerate() {
            check.record(tj.entry(i, 0, j), w, names[j], t);
        }
    }
    check
}

/// Oracle comparison for the one-dimensional normal forms at `r = 0` with all
/// corrections off. Returns `None` where no closed form applies.
fn oracle_check(model: &ModelSystem, params: &[f64], tj: &TrajectoryJacobian) -> Option<Check> {
    let family = Family::from_model_name(&model.name)?;
    let names = model.param_names();
    let ic = model.initial_condition_params();
    let at_bifurcation = names
        .iter()
        .zip(params)
        .enumerate()
        .all(|(j, (_, &v))| ic.contains(&j) || v == 0.0);
    if !at_bifurcation {
        return None;
    }
    let oracle = OracleFamily::new(family, params[ic[0]]);
    let mut check = Check::new("oracle");
    for (i, &t) in tj.grid.times.iter().enumerate() {
        if oracle.singular_time().is_some_and(|ts| t >= ts) {
            break;
        }
        for (j, name) in names.iter().enumerate() {
            let which = match name.as_str() {
                "r" => Which::R,
                n => match n.strip_prefix("alpha").and_then(|k| k.parse().ok()) {
                    Some(k) => Which::Alpha(k),
                    None => continue,
                },
            };
            if let Ok(want) = oracle.sensitivity(which, t) {
                check.record(tj.entry(i, 0, j), want, name, t);
            }
        }
    }
    Some(check)
}

pub fn validate(model: &ModelSystem, t_max: f64) -> Result<Vec<Check>> {
    let params = model.default_params();
    let grid = SampleGrid::new(t_max, SAMPLES)?;
    let tj = integrate_with_sensitivities(model, &params, &grid, None)?;
    let fd = finite_difference_jacobian(model, &params, &grid)?;
    let mut checks: Vec<Check> = if model.name == "toy_exponential" {
        vec![toy_check(&params, &tj)]
    } else {
        oracle_check(model, &params, &tj).into_iter().collect()
    };
    let names = model.param_names();
    let k = tj.n_obs();
    let mut fd_check = Check::new("finite differences");
    for (i, &t) in grid.times.iter().enumerate() {
        for r in 0..k {
            for (j, name) in names.iter().enumerate() {
                fd_check.record(fd.entry(i, r, j), tj.entry(i, r, j), name, t);
            }
        }
    }
    checks.push(fd_check);
    Ok(checks)
}

/// Print the table; returns whether every check is within tolerance.
pub fn report(model: &ModelSystem, t_max: f64, checks: &[Check]) -> bool {
    println!(
        "validate {} (t_max = {t_max}, {} parameters)",
        model.name,
        model.n_params()
    );
    if checks.len() == 1 {
        println!("  no closed form at these parameters; finite-difference check only");
    }
    let mut ok = true;
    for c in checks {
        let pass = c.worst <= TOLERANCE;
        ok &= pass;
        let at =
            c.at.as_ref()
                .map_or_else(String::new, |(p, t)| format!(" at {p}, t = {t:.6e}"));
        println!(
            "  {:<20} max rel err {:.3e} over {} entries{at}  {}",
            c.name,
            c.worst,
            c.compared,
            if pass { "ok" } else { "BREACH" }
        );
    }
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use twig_core::model::build_model;

    #[test]
    fn saddle_node_meets_the_oracle() {
        let model = build_model("saddle_node", 2).unwrap();
        let checks = validate(&model, 5.0).unwrap();
        assert_eq!(checks[0].name, "oracle");
        assert!(
            checks.iter().all(|c| c.worst < 1e-6 && c.compared > 0),
            "{checks:?}"
        );
    }

    #[test]
    fn selkov_uses_finite_differences_only() {
        let model = build_model("selkov", 0).unwrap();
        let checks = validate(&model, 50.0).unwrap();
        assert_eq!(checks.len(), 1);
        assert!(checks[0].worst < TOLERANCE);
    }

    #[test]
    fn toy_derivatives_match_closed_form() {
        let model = build_model("toy_exponential", 0).unwrap();
        let checks = validate(&model, 3.0).unwrap();
        assert_eq!(checks[0].name, "closed form");
        assert!(
            checks[0].worst < 1e-6 && checks[0].compared == 150,
            "{checks:?}"
        );
    }

    #[test]
    fn off_bifurcation_has_no_oracle() {
        let model = build_model("pitchfork_sub", 0).unwrap();
        let tj = integrate_with_sensitivities(
            &model,
            &model.default_params(),
            &SampleGrid::new(1.0, 4).unwrap(),
            None,
        )
        .unwrap();
        assert!(oracle_check(&model, &model.default_params(), &tj).is_none());
    }
}

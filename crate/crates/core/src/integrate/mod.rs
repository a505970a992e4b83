//! Trajectories, forward sensitivities and the sampled Jacobian `J`.
//!
//! The sensitivity matrix `S = ∂y/∂θ` obeys the variational equation
//! `Ṡ = f_y S + f_θ` with `S(0)` equal to one in each initial-condition slot.
//! It is integrated together with the state as one augmented system.

pub mod dopri;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TwigError};
use crate::model::{CoordinateKind, Dynamics, ModelSystem, ParamKind, FD_STEP};
pub use dopri::{CompensatedState, Dopri5, Solution, DIVERGENCE_BOUND};

/// Uniform sample times `t_i = t0 + (i/n) t_max`, `i = 1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub t0: f64,
    pub t_max: f64,
    pub n_samples: usize,
    pub times: Vec<f64>,
}

impl SampleGrid {
    pub fn new(t_max: f64, n_samples: usize) -> Result<Self> {
        Self::with_start(0.0, t_max, n_samples)
    }

    pub fn with_start(t0: f64, t_max: f64, n_samples: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(TwigError::InvalidGrid("n_samples must be positive".into()));
        }
        if !(t_max > 0.0) || !t_max.is_finite() || !t0.is_finite() {
            return Err(TwigError::InvalidGrid(format!(
                "t_max = {t_max} must be positive and finite"
            )));
        }
        let n = n_samples as f64;
        let mut times: Vec<f64> = (1..=n_samples)
            .map(|i| t0 + (i as f64 / n) * t_max)
            .collect();
        // exact endpoint regardless of rounding in i/n
        times[n_samples - 1] = t0 + t_max;
        Ok(Self {
            t0,
            t_max,
            n_samples,
            times,
        })
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.t_max
    }
}

/// Which quantities count as observations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    /// The listed state components, in order.
    Components(Vec<usize>),
    /// `(y cos θ, y sin θ)` for a polar state: the planar position of the
    /// oscillator, which is blind to whole turns of the angle.
    PolarProjection { radius: usize, angle: usize },
}

impl Observation {
    /// Every state component for Cartesian models, the planar projection for
    /// polar ones.
    pub fn default_for(model: &ModelSystem) -> Self {
        match model.coordinate_kind {
            CoordinateKind::Cartesian => Self::all_components(model),
            CoordinateKind::Polar { radius, angle } => Self::PolarProjection { radius, angle },
        }
    }

    pub fn all_components(model: &ModelSystem) -> Self {
        Self::Components((0..model.state_dim).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Components(c) => c.len(),
            Self::PolarProjection { .. } => 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self, state_dim: usize) -> Result<()> {
        let bad = match self {
            Self::Components(c) => c.is_empty() || c.iter().any(|&i| i >= state_dim),
            Self::PolarProjection { radius, angle } => {
                radius == angle || *radius >= state_dim || *angle >= state_dim
            }
        };
        if bad {
            return Err(TwigError::InvalidModel(format!(
                "observation {self:?} does not fit a {state_dim}-dimensional state"
            )));
        }
        Ok(())
    }

    /// Observed values at a state.
    pub fn observe(&self, state: &[f64]) -> Vec<f64> {
        match self {
            Self::Components(c) => c.iter().map(|&i| state[i]).collect(),
            Self::PolarProjection { radius, angle } => {
                let (r, a) = (state[*radius], state[*angle]);
                vec![r * a.cos(), r * a.sin()]
            }
        }
    }

    /// `∂(observation)/∂(state)` at a state.
    pub fn jacobian(&self, state: &[f64]) -> DMatrix<f64> {
        let n = state.len();
        match self {
            Self::Components(c) => {
                let mut g = DMatrix::zeros(c.len(), n);
                for (row, &i) in c.iter().enumerate() {
                    g[(row, i)] = 1.0;
                }
                g
            }
            Self::PolarProjection { radius, angle } => {
                let (r, a) = (state[*radius], state[*angle]);
                let mut g = DMatrix::zeros(2, n);
                g[(0, *radius)] = a.cos();
                g[(0, *angle)] = -r * a.sin();
                g[(1, *radius)] = a.sin();
                g[(1, *angle)] = r * a.cos();
                g
            }
        }
    }
}

/// How sampled trajectories are shifted before entering the Jacobian.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Recenter {
    #[default]
    None,
    /// Subtract a fixed point from the states only. `J` is unchanged.
    States(Vec<f64>),
    /// Subtract the fixed point and its parameter sensitivity `∂y*/∂θ`
    /// (`n × m`), so parameters that merely move the equilibrium drop out.
    Full {
        location: Vec<f64>,
        sensitivity: DMatrix<f64>,
    },
}

impl Recenter {
    fn location(&self) -> Option<&[f64]> {
        match self {
            Self::None => None,
            Self::States(l) | Self::Full { location: l, .. } => Some(l),
        }
    }
}

/// Options for assembling a [`TrajectoryJacobian`].
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianOptions {
    pub observation: Observation,
    pub recenter: Recenter,
    pub integrator: Dopri5,
}

impl JacobianOptions {
    pub fn for_model(model: &ModelSystem) -> Self {
        Self {
            observation: Observation::default_for(model),
            recenter: Recenter::None,
            integrator: Dopri5::default(),
        }
    }
}

/// Sampled trajectory plus `J[(i·n_obs + k), j] = ∂obs_k(t_i)/∂θ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryJacobian {
    pub grid: SampleGrid,
    /// `n_samples × state_dim`, with the recentering offset already removed.
    pub states: DMatrix<f64>,
    pub jacobian: DMatrix<f64>,
    pub observation: Observation,
    /// Offset subtracted from every state, if any.
    pub center: Option<Vec<f64>>,
}

impl TrajectoryJacobian {
    pub fn n_obs(&self) -> usize {
        self.observation.len()
    }

    /// Sampled state `i` before recentering.
    pub fn raw_state(&self, i: usize) -> Vec<f64> {
        let mut s: Vec<f64> = self.states.row(i).iter().copied().collect();
        if let Some(c) = &self.center {
            for (v, c) in s.iter_mut().zip(c) {
                *v += c;
            }
        }
        s
    }

    /// Jacobian entry for a sample, observation and parameter.
    pub fn entry(&self, sample: usize, obs: usize, param: usize) -> f64 {
        self.jacobian[(sample * self.n_obs() + obs, param)]
    }
}

/// States and full sensitivity matrices at requested times. Entries are `None`
/// past an integration failure.
#[derive(Debug, Clone)]
pub struct SensitivityRun {
    pub times: Vec<f64>,
    pub states: Vec<Option<Vec<f64>>>,
    /// `∂y/∂θ` (`state_dim × m`) at each time.
    pub sensitivities: Vec<Option<DMatrix<f64>>>,
    pub mesh: Vec<f64>,
    pub failure: Option<TwigError>,
}

impl SensitivityRun {
    /// Number of leading times (in sorted order) that were reached.
    pub fn is_complete(&self) -> bool {
        self.states.iter().all(Option::is_some)
    }
}

fn check_params(model: &ModelSystem, params: &[f64]) -> Result<()> {
    if params.len() != model.n_params() {
        return Err(TwigError::DimensionMismatch {
            what: "parameter vector",
            expected: model.n_params(),
            got: params.len(),
        });
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(TwigError::InvalidModel("parameters must be finite".into()));
    }
    Ok(())
}

/// `S(0)`: identity in the initial-condition slots.
pub fn initial_sensitivity(model: &ModelSystem) -> DMatrix<f64> {
    let mut s0 = DMatrix::zeros(model.state_dim, model.n_params());
    for (j, p) in model.parameters.iter().enumerate() {
        if let ParamKind::InitialCondition { component } = p.kind {
            s0[(component, j)] = 1.0;
        }
    }
    s0
}

/// Integrate state and sensitivities once, sampling at arbitrary `times`
/// (all `≥ 0`). Integration failures are recorded, not raised, so callers
/// can keep the samples that were reached.
pub fn integrate_samples(
    model: &ModelSystem,
    params: &[f64],
    times: &[f64],
    integrator: &Dopri5,
) -> Result<SensitivityRun> {
    check_params(model, params)?;
    let (n, m) = (model.state_dim, model.n_params());
    let t_end = times.iter().copied().fold(0.0, f64::max);

    if let Dynamics::ClosedForm(_) = model.dynamics() {
        return closed_form_samples(model, params, times);
    }

    let mut z0 = model.initial_state(params);
    z0.extend(initial_sensitivity(model).transpose().iter()); // row-major S
    if t_end <= 0.0 {
        let s0 = initial_sensitivity(model);
        return Ok(SensitivityRun {
            times: times.to_vec(),
            states: times.iter().map(|_| Some(z0[..n].to_vec())).collect(),
            sensitivities: times.iter().map(|_| Some(s0.clone())).collect(),
            mesh: vec![0.0],
            failure: None,
        });
    }

    let rhs = |t: f64, z: &[f64], dz: &mut [f64]| {
        let y = &z[..n];
        let fy = match model.eval_rhs(y, params, t) {
            Ok(v) => v,
            Err(_) => {
                dz.fill(f64::NAN);
                return;
            }
        };
        dz[..n].copy_from_slice(&fy);
        let (a, b) = match (
            model.state_jacobian(y, params, t),
            model.param_jacobian(y, params, t),
        ) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                dz.fill(f64::NAN);
                return;
            }
        };
        // dS[i][j] = Σ_k A[i][k] S[k][j] + B[i][j]
        for i in 0..n {
            for j in 0..m {
                let mut acc = b[(i, j)];
                for k in 0..n {
                    acc += a[(i, k)] * z[n + k * m + j];
                }
                dz[n + i * m + j] = acc;
            }
        }
    };
    let stepper = Dopri5 {
        guarded: n,
        ..*integrator
    };
    let sol = stepper.integrate(rhs, 0.0, &z0, t_end, times)?;
    let states = sol
        .samples
        .iter()
        .map(|s| s.as_ref().map(|z| z[..n].to_vec()))
        .collect();
    let sensitivities = sol
        .samples
        .iter()
        .map(|s| s.as_ref().map(|z| DMatrix::from_row_slice(n, m, &z[n..])))
        .collect();
    Ok(SensitivityRun {
        times: times.to_vec(),
        states,
        sensitivities,
        mesh: sol.mesh,
        failure: sol.failure,
    })
}

fn closed_form_samples(
    model: &ModelSystem,
    params: &[f64],
    times: &[f64],
) -> Result<SensitivityRun> {
    let (n, m) = (model.state_dim, model.n_params());
    let mut states = Vec::with_capacity(times.len());
    let mut sens = Vec::with_capacity(times.len());
    let mut p = params.to_vec();
    for &t in times {
        states.push(Some(model.eval_closed_form(params, t)?));
        let mut s = DMatrix::zeros(n, m);
        for j in 0..m {
            let h = FD_STEP * (1.0 + params[j].abs());
            p[j] = params[j] + h;
            let plus = model.eval_closed_form(&p, t)?;
            p[j] = params[j] - h;
            let minus = model.eval_closed_form(&p, t)?;
            p[j] = params[j];
            for i in 0..n {
                s[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        sens.push(Some(s));
    }
    Ok(SensitivityRun {
        times: times.to_vec(),
        states,
        sensitivities: sens,
        mesh: Vec::new(),
        failure: None,
    })
}

/// Build the Jacobian for one grid out of per-sample states and sensitivities.
pub fn assemble(
    grid: &SampleGrid,
    states: &[Vec<f64>],
    sensitivities: &[DMatrix<f64>],
    observation: &Observation,
    recenter: &Recenter,
) -> Result<TrajectoryJacobian> {
    let ns = grid.n_samples;
    if states.len() != ns || sensitivities.len() != ns {
        return Err(TwigError::DimensionMismatch {
            what: "samples",
            expected: ns,
            got: states.len().min(sensitivities.len()),
        });
    }
    let n = states.first().map_or(0, Vec::len);
    observation.validate(n)?;
    let m = sensitivities[0].ncols();
    let k = observation.len();
    if let Some(loc) = recenter.location() {
        if loc.len() != n {
            return Err(TwigError::DimensionMismatch {
                what: "recentering offset",
                expected: n,
                got: loc.len(),
            });
        }
    }

    let mut st = DMatrix::zeros(ns, n);
    let mut jac = DMatrix::zeros(ns * k, m);
    for i in 0..ns {
        let y = &states[i];
        let mut s = sensitivities[i].clone();
        if let Recenter::Full { sensitivity, .. } = recenter {
            s -= sensitivity;
        }
        let g = observation.jacobian(y);
        let rows = &g * &s;
        jac.view_mut((i * k, 0), (k, m)).copy_from(&rows);
        for c in 0..n {
            st[(i, c)] = y[c] - recenter.location().map_or(0.0, |l| l[c]);
        }
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(TwigError::NonFiniteJacobian {
            what: "trajectory jacobian",
        });
    }
    Ok(TrajectoryJacobian {
        grid: grid.clone(),
        states: st,
        jacobian: jac,
        observation: observation.clone(),
        center: recenter.location().map(<[f64]>::to_vec),
    })
}

/// Integrate the augmented system on `grid` and assemble `J`.
pub fn integrate_with_options(
    model: &ModelSystem,
    params: &[f64],
    grid: &SampleGrid,
    opts: &JacobianOptions,
) -> Result<TrajectoryJacobian> {
    let run = integrate_samples(model, params, &grid.times, &opts.integrator)?;
    if let Some(err) = run.failure {
        return Err(err);
    }
    let states: Vec<Vec<f64>> = run.states.into_iter().map(Option::unwrap).collect();
    let sens: Vec<DMatrix<f64>> = run.sensitivities.into_iter().map(Option::unwrap).collect();
    assemble(grid, &states, &sens, &opts.observation, &opts.recenter)
}

/// Integrate with sensitivities using the model's default observation.
///
/// A `recenter` point is subtracted from the sampled states only; use
/// [`integrate_with_options`] with [`Recenter::Full`] to also remove the
/// equilibrium's parameter dependence from `J`.
pub fn integrate_with_sensitivities(
    model: &ModelSystem,
    params: &[f64],
    grid: &SampleGrid,
    recenter: Option<&[f64]>,
) -> Result<TrajectoryJacobian> {
    let opts = JacobianOptions {
        recenter: recenter.map_or(Recenter::None, |c| Recenter::States(c.to_vec())),
        ..JacobianOptions::for_model(model)
    };
    integrate_with_options(model, params, grid, &opts)
}

/// Plain (non-augmented) trajectory sampled on `times`.
pub fn integrate_states(
    model: &ModelSystem,
    params: &[f64],
    times: &[f64],
    integrator: &Dopri5,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_params(model, params)?;
    if let Dynamics::ClosedForm(_) = model.dynamics() {
        let s = times
            .iter()
            .map(|&t| model.eval_closed_form(params, t))
            .collect::<Result<Vec<_>>>()?;
        return Ok((s, Vec::new()));
    }
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let y0 = model.initial_state(params);
    if t_end <= 0.0 {
        return Ok((times.iter().map(|_| y0.clone()).collect(), vec![0.0]));
    }
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| match model.eval_rhs(y, params, t) {
        Ok(v) => dy.copy_from_slice(&v),
        Err(_) => dy.fill(f64::NAN),
    };
    let sol = integrator.integrate(rhs, 0.0, &y0, t_end, times)?;
    let mesh = sol.mesh.clone();
    Ok((sol.complete()?, mesh))
}

/// Central differences in each parameter, re-integrating the plain system
/// with `θ_j ± h`, `h = 1e-6 (1 + |θ_j|)`.
///
/// All perturbed runs replay the step sequence of the unperturbed run, so the
/// quotient differentiates one fixed discretization. That discretization is
/// only controlled for the state, so the runs use [`Dopri5::reference`]
/// tolerances to keep the quotient's own error well below the `1e-4` the
/// cross-check is meant to resolve.
pub fn finite_difference_jacobian(
    model: &ModelSystem,
    params: &[f64],
    grid: &SampleGrid,
) -> Result<TrajectoryJacobian> {
    finite_difference_with(
        model,
        params,
        grid,
        &Observation::default_for(model),
        &Dopri5::reference(),
    )
}

pub fn finite_difference_with(
    model: &ModelSystem,
    params: &[f64],
    grid: &SampleGrid,
    observation: &Observation,
    integrator: &Dopri5,
) -> Result<TrajectoryJacobian> {
    check_params(model, params)?;
    observation.validate(model.state_dim)?;
    let (ns, m, k) = (grid.n_samples, model.n_params(), observation.len());
    let (base, mesh) = integrate_states(model, params, &grid.times, integrator)?;

    // Sample times join the mesh so every sample is an accumulated state, which
    // the compensated replay carries to well below double spacing.
    let mut replay_mesh = mesh.clone();
    replay_mesh.extend(grid.times.iter().copied());
    replay_mesh.sort_by(f64::total_cmp);
    replay_mesh.dedup();
    let run = |p: &[f64]| -> Result<Vec<CompensatedState>> {
        if model.has_rhs() {
            let rhs = |t: f64, y: &[f64], dy: &mut [f64]| match model.eval_rhs(y, p, t) {
                Ok(v) => dy.copy_from_slice(&v),
                Err(_) => dy.fill(f64::NAN),
            };
            integrator.replay_compensated(rhs, &replay_mesh, &model.initial_state(p), &grid.times)
        } else {
            let states = integrate_states(model, p, &grid.times, integrator)?.0;
            Ok(states
                .into_iter()
                .map(|s| {
                    let lo = vec![0.0; s.len()];
                    (s, lo)
                })
                .collect())
        }
    };

    let mut jac = DMatrix::zeros(ns * k, m);
    let mut p = params.to_vec();
    for j in 0..m {
        let h = FD_STEP * (1.0 + params[j].abs());
        p[j] = params[j] + h;
        let plus = run(&p)?;
        p[j] = params[j] - h;
        let minus = run(&p)?;
        p[j] = params[j];
        for i in 0..ns {
            let (op, om) = (
                observation.observe(&plus[i].0),
                observation.observe(&minus[i].0),
            );
            // first-order contribution of the low-order parts
            let dlo: Vec<f64> = plus[i]
                .1
                .iter()
                .zip(&minus[i].1)
                .map(|(a, b)| a - b)
                .collect();
            let glo = observation.jacobian(&plus[i].0) * nalgebra::DVector::from_vec(dlo);
            for r in 0..k {
                jac[(i * k + r, j)] = ((op[r] - om[r]) + glo[r]) / (2.0 * h);
            }
        }
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(TwigError::NonFiniteJacobian {
            what: "finite-difference jacobian",
        });
    }
    let mut st = DMatrix::zeros(ns, model.state_dim);
    for (i, s) in base.iter().enumerate() {
        for (c, v) in s.iter().enumerate() {
            st[(i, c)] = *v;
        }
    }
    Ok(TrajectoryJacobian {
        grid: grid.clone(),
        states: st,
        jacobian: jac,
        observation: observation.clone(),
        center: None,
    })
}

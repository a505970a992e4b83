use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{spectrum_of, FimSpectrum};
use crate::equilibria::{
    detect_oscillation, find_fixed_point, fixed_point_sensitivity, interior_fixed_point,
    oscillation_coordinates, FixedPoint, Oscillation,
};
use crate::error::{Result, TwigError};
use crate::integrate::{
    assemble, integrate_samples, integrate_states, Dopri5, Observation, Recenter, SampleGrid,
};
use crate::model::ModelSystem;

/// Dense grid and observed samples for the oscillation diagnostic.
type DenseSamples = (SampleGrid, DMatrix<f64>);
/// Spectrum, Jacobian and sampled states of one horizon.
type HorizonResult = (FimSpectrum, DMatrix<f64>, Vec<Vec<f64>>);

/// Samples of the final horizon used by the dense oscillation diagnostic.
const DIAGNOSTIC_SAMPLES: usize = 4000;

/// How the sweep shifts trajectories before building `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecenterMode {
    #[default]
    None,
    /// Subtract the fixed point from sampled states only.
    States,
    /// Also subtract the fixed point's parameter sensitivity from `J`.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub t_min: f64,
    pub t_max: f64,
    /// Number of geometric horizons.
    pub count: usize,
    pub n_samples: usize,
    pub recenter: RecenterMode,
    /// Defaults to [`Observation::default_for`] the model.
    pub observation: Option<Observation>,
    pub integrator: Dopri5,
    /// Newton start for recentering; defaults to the last trajectory sample.
    pub fixed_point_guess: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            t_min: 1e-2,
            t_max: 1e3,
            count: 60,
            n_samples: 50,
            recenter: RecenterMode::None,
            observation: None,
            integrator: Dopri5::default(),
            fixed_point_guess: None,
        }
    }
}

/// Geometric horizons `t_min … t_max` (endpoints exact).
pub fn horizon_grid(t_min: f64, t_max: f64, count: usize) -> Result<Vec<f64>> {
    if count < 8 {
        return Err(TwigError::InvalidSweep(format!(
            "need at least 8 horizons, got {count}"
        )));
    }
    if !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) {
        return Err(TwigError::InvalidSweep(format!(
            "horizons need 0 < t_min < t_max, got {t_min} .. {t_max}"
        )));
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    let mut h: Vec<f64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect();
    h[0] = t_min;
    h[count - 1] = t_max;
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    /// First horizon that could not be completed.
    pub t_max: f64,
    pub error: String,
}

/// FIM spectra over widening horizons with directions tracked between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwigSweep {
    /// All requested horizons.
    pub horizons: Vec<f64>,
    /// Spectra of the completed horizons (a prefix of `horizons`).
    pub spectra: Vec<FimSpectrum>,
    /// `tracking[s][k]`: column of `spectra[s]` carrying tracked direction `k`.
    /// Direction `k` is column `k` of the first spectrum.
    pub tracking: Vec<Vec<usize>>,
    /// `|⟨v_k(s-1), v_k(s)⟩|` per step and tracked direction (1 at step 0).
    pub overlaps: Vec<Vec<f64>>,
    /// Whether each tracked pair is the maximum of its overlap-matrix row.
    pub row_max: Vec<Vec<bool>>,
    pub param_names: Vec<String>,
    pub initial_condition_params: Vec<usize>,
    pub failure: Option<SweepFailure>,
    /// Dense oscillation test over the last completed horizon.
    pub oscillation: Option<Oscillation>,
    /// Per column of the final spectrum: secular drift of the response's
    /// projection onto the flow (only for oscillatory systems).
    pub final_drift: Option<Vec<f64>>,
    pub fixed_point: Option<FixedPoint>,
}

impl TwigSweep {
    /// Track directions across a sequence of spectra (no model diagnostics).
    pub fn from_spectra(
        horizons: Vec<f64>,
        spectra: Vec<FimSpectrum>,
        param_names: Vec<String>,
        initial_condition_params: Vec<usize>,
    ) -> Self {
        let (tracking, overlaps, row_max) = track(&spectra);
        Self {
            horizons,
            spectra,
            tracking,
            overlaps,
            row_max,
            param_names,
            initial_condition_params,
            failure: None,
            oscillation: None,
            final_drift: None,
            fixed_point: None,
        }
    }

    pub fn n_directions(&self) -> usize {
        self.spectra.first().map_or(0, FimSpectrum::dim)
    }

    pub fn is_partial(&self) -> bool {
        self.failure.is_some()
    }

    pub fn completed_horizons(&self) -> Vec<f64> {
        self.spectra.iter().map(|s| s.t_max).collect()
    }

    /// Eigenvalue of tracked direction `k` at every completed horizon.
    pub fn tracked_eigenvalues(&self, k: usize) -> Vec<f64> {
        self.spectra
            .iter()
            .zip(&self.tracking)
            .map(|(s, t)| s.eigenvalues[t[k]])
            .collect()
    }

    /// Column of the final spectrum carrying tracked direction `k`.
    pub fn final_column(&self, k: usize) -> usize {
        self.tracking.last().map_or(k, |t| t[k])
    }

    /// Smallest overlap of any tracked pair over the sweep.
    pub fn min_overlap(&self) -> f64 {
        self.overlaps.iter().flatten().copied().fold(1.0, f64::min)
    }
}

/// Greedy maximal-overlap matching between consecutive spectra.
#[allow(clippy::type_complexity)]
fn track(spectra: &[FimSpectrum]) -> (Vec<Vec<usize>>, Vec<Vec<f64>>, Vec<Vec<bool>>) {
    let Some(first) = spectra.first() else {
        return (Vec::new(), Vec::new(), Vec::new());
    };
    let m = first.dim();
    let mut tracking = vec![(0..m).collect::<Vec<_>>()];
    let mut overlaps = vec![vec![1.0; m]];
    let mut row_max = vec![vec![true; m]];
    for s in 1..spectra.len() {
        let prev_cols = &tracking[s - 1];
        // rows: tracked direction (via its previous column); cols: new columns
        let o = DMatrix::from_fn(m, m, |k, j| {
            spectra[s - 1]
                .eigenvectors
                .column(prev_cols[k])
                .dot(&spectra[s].eigenvectors.column(j))
                .abs()
        });
        let mut pairs: Vec<(usize, usize)> =
            (0..m).flat_map(|k| (0..m).map(move |j| (k, j))).collect();
        // ties go to the pair earliest in eigenvalue order
        pairs.sort_by(|a, b| {
            o[*b]
                .total_cmp(&o[*a])
                .then(prev_cols[a.0].cmp(&prev_cols[b.0]))
                .then(a.1.cmp(&b.1))
        });
        let mut assign = vec![usize::MAX; m];
        let mut used = vec![false; m];
        for (k, j) in pairs {
            if assign[k] == usize::MAX && !used[j] {
                assign[k] = j;
                used[j] = true;
            }
        }
        overlaps.push((0..m).map(|k| o[(k, assign[k])]).collect());
        row_max.push(
            (0..m)
                .map(|k| (0..m).all(|j| o[(k, j)] <= o[(k, assign[k])]))
                .collect(),
        );
        tracking.push(assign);
    }
    (tracking, overlaps, row_max)
}

fn recenter_for(
    model: &ModelSystem,
    params: &[f64],
    config: &SweepConfig,
) -> Result<(Recenter, Option<FixedPoint>, Option<DenseSamples>)> {
    // Dense samples of the longest horizon serve both the fixed-point guess and
    // the oscillation diagnostic.
    let dense = dense_samples(model, params, config.t_max, &config.integrator);
    if config.recenter == RecenterMode::None {
        return Ok((Recenter::None, None, dense));
    }
    let fp = match (&config.fixed_point_guess, &dense) {
        (Some(g), _) => find_fixed_point(model, params, g)?,
        (None, Some((grid, states))) => {
            let coords = oscillation_coordinates(model, states);
            if detect_oscillation(&coords, grid).oscillatory {
                // second half only: the cycle, not the transient
                let h = states.nrows() / 2;
                let tail = states.rows(h, states.nrows() - h).into_owned();
                let tgrid = SampleGrid {
                    t0: grid.times[h - 1],
                    t_max: grid.end() - grid.times[h - 1],
                    n_samples: tail.nrows(),
                    times: grid.times[h..].to_vec(),
                };
                interior_fixed_point(model, params, &tail, &tgrid)?
            } else {
                let last: Vec<f64> = states.row(states.nrows() - 1).iter().copied().collect();
                find_fixed_point(model, params, &last)?
            }
        }
        (None, None) => find_fixed_point(model, params, &model.initial_state(params))?,
    };
    let recenter = match config.recenter {
        RecenterMode::States => Recenter::States(fp.location.clone()),
        RecenterMode::Full => Recenter::Full {
            location: fp.location.clone(),
            sensitivity: fixed_point_sensitivity(model, params, &fp)?,
        },
        RecenterMode::None => unreachable!(),
    };
    Ok((recenter, Some(fp), dense))
}

fn dense_samples(
    model: &ModelSystem,
    params: &[f64],
    t_max: f64,
    integrator: &Dopri5,
) -> Option<(SampleGrid, DMatrix<f64>)> {
    let grid = SampleGrid::new(t_max, DIAGNOSTIC_SAMPLES).ok()?;
    let (states, _) = integrate_states(model, params, &grid.times, integrator).ok()?;
    let m = DMatrix::from_fn(states.len(), model.state_dim, |i, c| states[i][c]);
    Some((grid, m))
}

/// Compute the FIM spectrum at every horizon of `config` and track directions.
///
/// The augmented system is integrated once over the union of all sample times;
/// dense output makes each horizon's samples identical to a separate run.
/// Spectra are computed in parallel and merged by horizon index. A blow-up
/// ends the sweep early: the completed prefix is returned with the first
/// failed horizon recorded.
pub fn run_sweep(model: &ModelSystem, params: &[f64], config: &SweepConfig) -> Result<TwigSweep> {
    let horizons = horizon_grid(config.t_min, config.t_max, config.count)?;
    if config.n_samples < 4 {
        return Err(TwigError::InvalidSweep(format!(
            "need at least 4 samples per horizon, got {}",
            config.n_samples
        )));
    }
    if params.len() != model.n_params() {
        return Err(TwigError::DimensionMismatch {
            what: "parameter vector",
            expected: model.n_params(),
            got: params.len(),
        });
    }
    let observation = config
        .observation
        .clone()
        .unwrap_or_else(|| Observation::default_for(model));
    let (recenter, fixed_point, dense) = recenter_for(model, params, config)?;

    let grids = horizons
        .iter()
        .map(|&h| SampleGrid::new(h, config.n_samples))
        .collect::<Result<Vec<_>>>()?;
    let mut all: Vec<f64> = grids.iter().flat_map(|g| g.times.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let run = integrate_samples(model, params, &all, &config.integrator)?;
    let slot: HashMap<u64, usize> = all
        .iter()
        .enumerate()
        .map(|(i, t)| (t.to_bits(), i))
        .collect();

    type HorizonData = (Vec<Vec<f64>>, Vec<DMatrix<f64>>);
    let gather = |g: &SampleGrid| -> Option<HorizonData> {
        let mut st = Vec::with_capacity(g.n_samples);
        let mut se = Vec::with_capacity(g.n_samples);
        for t in &g.times {
            let i = slot[&t.to_bits()];
            st.push(run.states[i].clone()?);
            se.push(run.sensitivities[i].clone()?);
        }
        Some((st, se))
    };

    let results: Vec<Option<Result<HorizonResult>>> = grids
        .par_iter()
        .map(|g| {
            let (st, se) = gather(g)?;
            Some(
                assemble(g, &st, &se, &observation, &recenter).and_then(|tj| {
                    let spec = spectrum_of(&tj.jacobian, g.t_max)?;
                    Ok((spec, tj.jacobian, st))
                }),
            )
        })
        .collect();

    let mut spectra = Vec::new();
    let mut failure = None;
    let mut last_jacobian = None;
    for (h, r) in horizons.iter().zip(results) {
        match r {
            Some(Ok((spec, jac, st))) => {
                spectra.push(spec);
                last_jacobian = Some((jac, st));
            }
            Some(Err(error)) => {
                failure = Some(SweepFailure {
                    t_max: *h,
                    error: error.to_string(),
                });
                break;
            }
            None => {
                let error = run
                    .failure
                    .clone()
                    .unwrap_or(TwigError::HorizonExceeded { t: *h });
                failure = Some(SweepFailure {
                    t_max: *h,
                    error: error.to_string(),
                });
                break;
            }
        }
    }

    let mut sweep = TwigSweep::from_spectra(
        horizons,
        spectra,
        model.param_names(),
        model.initial_condition_params(),
    );
    sweep.failure = failure;
    sweep.fixed_point = fixed_point;

    // Oscillation diagnostic over the last completed horizon.
    if let (Some(last), Some((jac, states))) = (sweep.spectra.last(), last_jacobian) {
        let t_last = last.t_max;
        let osc = match dense.filter(|(g, _)| g.end() == t_last) {
            Some((g, s)) => detect_oscillation(&oscillation_coordinates(model, &s), &g),
            None => match dense_samples(model, params, t_last, &config.integrator) {
                Some((g, s)) => detect_oscillation(&oscillation_coordinates(model, &s), &g),
                None => Oscillation {
                    oscillatory: false,
                    period_estimate: None,
                },
            },
        };
        sweep.oscillation = Some(osc);
        if osc.oscillatory && model.has_rhs() {
            let grid = SampleGrid::new(t_last, config.n_samples)?;
            sweep.final_drift = Some(phase_drift(
                model,
                params,
                &grid,
                &states,
                &jac,
                &observation,
                last,
            )?);
        }
    }
    Ok(sweep)
}

/// Secular drift of each final-horizon direction along the flow.
///
/// A parameter change `δθ = v` moves sample `i` of the observation by
/// `r_i = J_i v`. Projecting `r_i` onto the observed flow `F_i = G(y_i) f(y_i)`
/// gives a time shift `δτ_i = r_i·F_i / |F_i|²`. A pure frequency change makes
/// `δτ` grow linearly in `t`; the absolute least-squares slope of `δτ` over the
/// second half of the samples is returned per direction.
fn phase_drift(
    model: &ModelSystem,
    params: &[f64],
    grid: &SampleGrid,
    states: &[Vec<f64>],
    jacobian: &DMatrix<f64>,
    observation: &Observation,
    spectrum: &FimSpectrum,
) -> Result<Vec<f64>> {
    let k = observation.len();
    let ns = grid.n_samples;
    let mut flows = Vec::with_capacity(ns);
    for (i, y) in states.iter().enumerate() {
        let f = model.eval_rhs(y, params, grid.times[i])?;
        let g = observation.jacobian(y);
        flows.push(g * nalgebra::DVector::from_vec(f));
    }
    let half = ns / 2;
    let mut drift = Vec::with_capacity(spectrum.dim());
    for d in 0..spectrum.dim() {
        let r = jacobian * spectrum.eigenvectors.column(d);
        let mut ts = Vec::new();
        let mut taus = Vec::new();
        for i in half..ns {
            let fi = &flows[i];
            let norm2 = fi.norm_squared();
            if norm2 == 0.0 {
                continue;
            }
            let dot: f64 = (0..k).map(|c| r[i * k + c] * fi[c]).sum();
            ts.push(grid.times[i]);
            taus.push(dot / norm2);
        }
        drift.push(if ts.len() >= 2 {
            super::ols_slope(&ts, &taus).abs()
        } else {
            0.0
        });
    }
    Ok(drift)
}

//! Fixed points, their stability, and oscillation detection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TwigError};
use crate::integrate::SampleGrid;
use crate::model::{CoordinateKind, ModelSystem};

/// Residual tolerance for a converged fixed point (max norm).
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Real parts within this of zero count as marginal.
pub const MARGINAL_TOL: f64 = 1e-8;
pub const MAX_NEWTON_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 20;
const POSITIVE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub location: Vec<f64>,
    pub residual_norm: f64,
    pub stability: Stability,
    pub eigenvalues: Vec<Eigenvalue>,
    pub iterations: usize,
}

impl FixedPoint {
    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|e| e.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn classify_stability(eigenvalues: &[Eigenvalue]) -> Stability {
    let max_re = eigenvalues
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_re > MARGINAL_TOL {
        Stability::Unstable
    } else if max_re < -MARGINAL_TOL {
        Stability::Stable
    } else {
        Stability::Marginal
    }
}

/// State components that take part in the root find. The angle of a polar
/// model has no equilibrium (θ̇ = ω ≠ 0) and is carried along unchanged.
fn active_components(model: &ModelSystem) -> Vec<usize> {
    match model.coordinate_kind {
        CoordinateKind::Cartesian => (0..model.state_dim).collect(),
        CoordinateKind::Polar { angle, .. } => {
            (0..model.state_dim).filter(|&i| i != angle).collect()
        }
    }
}

fn restrict(v: &[f64], idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

fn restrict_square(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

fn residual(
    model: &ModelSystem,
    y: &[f64],
    params: &[f64],
    active: &[usize],
) -> Option<(DVector<f64>, f64)> {
    let f = model.eval_rhs(y, params, 0.0).ok()?;
    let r = restrict(&f, active);
    let norm = r.amax();
    norm.is_finite().then_some((r, norm))
}

fn linearization(
    model: &ModelSystem,
    y: &[f64],
    params: &[f64],
    active: &[usize],
) -> Result<Vec<Eigenvalue>> {
    let a = restrict_square(&model.state_jacobian(y, params, 0.0)?, active);
    let mut ev: Vec<Eigenvalue> = a
        .complex_eigenvalues()
        .iter()
        .map(|c| Eigenvalue { re: c.re, im: c.im })
        .collect();
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(ev)
}

/// Damped Newton iteration on `f(y; θ) = 0` with a finite-difference state
/// Jacobian.
///
/// A step is halved (up to 20 times) until the residual decreases. Components
/// that enter a logarithm are kept above `1e-12`.
pub fn find_fixed_point(model: &ModelSystem, params: &[f64], guess: &[f64]) -> Result<FixedPoint> {
    if guess.len() != model.state_dim {
        return Err(TwigError::DimensionMismatch {
            what: "fixed-point guess",
            expected: model.state_dim,
            got: guess.len(),
        });
    }
    if guess.iter().any(|v| !v.is_finite()) {
        return Err(TwigError::InvalidModel(
            "fixed-point guess must be finite".into(),
        ));
    }
    let active = active_components(model);
    let positive = model.positive_components();
    let clamp = |y: &mut Vec<f64>| {
        for &i in &positive {
            if y[i] <= POSITIVE_FLOOR {
                y[i] = POSITIVE_FLOOR;
            }
        }
    };

    let mut y = guess.to_vec();
    clamp(&mut y);
    let (mut r, mut norm) =
        residual(model, &y, params, &active).ok_or(TwigError::Divergence { t: 0.0 })?;
    let mut iterations = 0;
    while norm > RESIDUAL_TOL {
        if iterations >= MAX_NEWTON_ITERATIONS {
            return Err(TwigError::NoConvergence {
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let jac = restrict_square(&model.state_jacobian_fd(&y, params, 0.0)?, &active);
        let step = jac
            .lu()
            .solve(&r)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or(TwigError::SingularJacobian {
                iteration: iterations,
            })?;

        let mut lambda = 1.0;
        let mut best: Option<(Vec<f64>, DVector<f64>, f64)> = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = y.clone();
            for (k, &i) in active.iter().enumerate() {
                trial[i] -= lambda * step[k];
            }
            clamp(&mut trial);
            if let Some((rt, nt)) = residual(model, &trial, params, &active) {
                if nt < norm {
                    best = Some((trial, rt, nt));
                    break;
                }
                if best.as_ref().is_none_or(|b| nt < b.2) {
                    best = Some((trial, rt, nt));
                }
            }
            lambda *= 0.5;
        }
        match best {
            Some((trial, rt, nt)) => {
                y = trial;
                r = rt;
                norm = nt;
            }
            None => {
                return Err(TwigError::NoConvergence {
                    iterations,
                    residual: norm,
                })
            }
        }
    }

    // Independent re-evaluation of the residual for the returned point.
    let (_, residual_norm) =
        residual(model, &y, params, &active).ok_or(TwigError::Divergence { t: 0.0 })?;
    let eigenvalues = linearization(model, &y, params, &active)?;
    Ok(FixedPoint {
        location: y,
        residual_norm,
        stability: classify_stability(&eigenvalues),
        eigenvalues,
        iterations,
    })
}

/// `∂y*/∂θ = −(∂f/∂y)⁻¹ ∂f/∂θ` at a fixed point (`state_dim × m`).
///
/// Rows of components excluded from the root find (the polar angle) are zero,
/// as are initial-condition columns.
pub fn fixed_point_sensitivity(
    model: &ModelSystem,
    params: &[f64],
    fixed_point: &FixedPoint,
) -> Result<DMatrix<f64>> {
    let active = active_components(model);
    let y = &fixed_point.location;
    let a = restrict_square(&model.state_jacobian(y, params, 0.0)?, &active);
    let b_full = model.param_jacobian(y, params, 0.0)?;
    let b = DMatrix::from_fn(active.len(), b_full.ncols(), |r, c| b_full[(active[r], c)]);
    let x = a
        .lu()
        .solve(&b)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or(TwigError::SingularJacobian { iteration: 0 })?;
    let mut out = DMatrix::zeros(model.state_dim, b_full.ncols());
    for (k, &i) in active.iter().enumerate() {
        for j in 0..b_full.ncols() {
            out[(i, j)] = -x[(k, j)];
        }
    }
    Ok(out)
}

/// Excursions within this fraction of `1 + |mean|` of the centre are treated
/// as integration noise by [`detect_oscillation`].
pub const OSCILLATION_NOISE: f64 = 1e-6;

/// Result of [`detect_oscillation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub oscillatory: bool,
    pub period_estimate: Option<f64>,
}

impl Oscillation {
    const NONE: Self = Self {
        oscillatory: false,
        period_estimate: None,
    };
}

/// Sign-change test for sustained oscillation.
///
/// Each column of `samples` (one row per grid time) is centred on its mean
/// over the second half of the window. A column oscillates when it changes
/// sign at least three times over the window, at least once of them in the
/// second half, so a transient that has died out does not count. The period
/// is the mean spacing of upward zero crossings (twice the mean spacing of
/// all crossings when there is only one upward crossing). Samples within
/// [`OSCILLATION_NOISE`] of the centre are skipped, so integration noise
/// around a settled state is not mistaken for a cycle.
pub fn detect_oscillation(samples: &DMatrix<f64>, grid: &SampleGrid) -> Oscillation {
    let ns = samples.nrows();
    if ns < 8 || grid.times.len() != ns {
        return Oscillation::NONE;
    }
    let half = ns / 2;
    let times = &grid.times;
    let mut best: Option<(usize, Vec<(f64, bool)>)> = None;

    for col in samples.column_iter() {
        let v: Vec<f64> = col.iter().copied().collect();
        if v.iter().any(|x| !x.is_finite()) {
            continue;
        }
        let mean = v[half..].iter().sum::<f64>() / (ns - half) as f64;
        let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let scale = c.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let tail_scale = c[half..].iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let eps = OSCILLATION_NOISE * (1.0 + mean.abs());
        // ignore columns that are constant at the end up to noise
        if scale == 0.0 || tail_scale <= eps {
            continue;
        }
        let mut crossings = Vec::new(); // (time, upward)
        let mut prev: Option<(usize, f64)> = None;
        for (i, &x) in c.iter().enumerate() {
            if x.abs() <= eps {
                continue;
            }
            if let Some((j, p)) = prev {
                if p.signum() != x.signum() {
                    // linear interpolation of the crossing time
                    let tc = times[j] + (times[i] - times[j]) * p / (p - x);
                    crossings.push((tc, x > 0.0));
                }
            }
            prev = Some((i, x));
        }
        let in_tail = crossings.iter().filter(|(t, _)| *t >= times[half]).count();
        if crossings.len() >= 3
            && in_tail >= 1
            && best.as_ref().is_none_or(|b| crossings.len() > b.1.len())
        {
            best = Some((crossings.len(), crossings));
        }
    }

    let Some((_, crossings)) = best else {
        return Oscillation::NONE;
    };
    let up: Vec<f64> = crossings.iter().filter(|c| c.1).map(|c| c.0).collect();
    let period = if up.len() >= 2 {
        Some((up[up.len() - 1] - up[0]) / (up.len() - 1) as f64)
    } else {
        let all: Vec<f64> = crossings.iter().map(|c| c.0).collect();
        Some(2.0 * (all[all.len() - 1] - all[0]) / (all.len() - 1) as f64)
    };
    Oscillation {
        oscillatory: true,
        period_estimate: period,
    }
}

/// Observed coordinates used for oscillation tests: the planar projection for
/// polar models, the raw state otherwise.
pub fn oscillation_coordinates(model: &ModelSystem, states: &DMatrix<f64>) -> DMatrix<f64> {
    match model.coordinate_kind {
        CoordinateKind::Cartesian => states.clone(),
        CoordinateKind::Polar { radius, angle } => DMatrix::from_fn(states.nrows(), 2, |i, k| {
            let (r, a) = (states[(i, radius)], states[(i, angle)]);
            if k == 0 {
                r * a.cos()
            } else {
                r * a.sin()
            }
        }),
    }
}

/// The equilibrium enclosed by a sampled limit cycle, found by Newton's method
/// from the cycle's centroid.
pub fn interior_fixed_point(
    model: &ModelSystem,
    params: &[f64],
    cycle_samples: &DMatrix<f64>,
    grid: &SampleGrid,
) -> Result<FixedPoint> {
    if cycle_samples.ncols() != model.state_dim {
        return Err(TwigError::DimensionMismatch {
            what: "cycle samples",
            expected: model.state_dim,
            got: cycle_samples.ncols(),
        });
    }
    let coords = oscillation_coordinates(model, cycle_samples);
    if !detect_oscillation(&coords, grid).oscillatory {
        return Err(TwigError::NotOscillatory);
    }
    let ns = cycle_samples.nrows() as f64;
    let guess: Vec<f64> = match model.coordinate_kind {
        CoordinateKind::Cartesian => cycle_samples.column_iter().map(|c| c.sum() / ns).collect(),
        CoordinateKind::Polar { radius, angle } => {
            let cx = coords.column(0).sum() / ns;
            let cy = coords.column(1).sum() / ns;
            let mut g = vec![0.0; model.state_dim];
            g[radius] = cx.hypot(cy);
            g[angle] = cy.atan2(cx);
            g
        }
    };
    find_fixed_point(model, params, &guess)
}

/// Value of parameter `index` in `[lo, hi]` where the leading real part of
/// the linearization at the tracked fixed point crosses zero, by bisection.
///
/// `guess` seeds the fixed point at the first evaluation; later evaluations
/// start from the previous solution.
pub fn hopf_parameter(
    model: &ModelSystem,
    params: &[f64],
    index: usize,
    lo: f64,
    hi: f64,
    guess: &[f64],
) -> Result<f64> {
    let mut start = guess.to_vec();
    let mut p = params.to_vec();
    let mut eval = |v: f64, start: &mut Vec<f64>| -> Result<f64> {
        p[index] = v;
        let fp = find_fixed_point(model, &p, start)?;
        *start = fp.location.clone();
        Ok(fp.max_real_part())
    };
    let (mut a, mut b) = (lo, hi);
    let mut fa = eval(a, &mut start)?;
    let fb = eval(b, &mut start)?;
    if fa.signum() == fb.signum() {
        return Err(TwigError::NoHopfCrossing { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = eval(mid, &mut start)?;
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate_states, Dopri5};
    use crate::model::{build_model, selkov_fixed_point};

    #[test]
    fn pitchfork_origin() {
        let m = build_model("pitchfork_super", 0).unwrap();
        let fp = find_fixed_point(&m, &m.default_params(), &[0.5]).unwrap();
        assert!(fp.location[0].abs() < 1e-3);
        assert!(fp.residual_norm <= RESIDUAL_TOL);
        // Newton converges only linearly onto the triple root
        assert!(fp.max_real_part().abs() < 1e-6);
    }

    #[test]
    fn pitchfork_stability_off_bifurcation() {
        let m = build_model("pitchfork_super", 0).unwrap();
        let p = m.params_with(&[("r", -0.5)]).unwrap();
        let fp = find_fixed_point(&m, &p, &[0.3]).unwrap();
        assert_eq!(fp.stability, Stability::Stable);
        let p = m.params_with(&[("r", 0.25)]).unwrap();
        let fp = find_fixed_point(&m, &p, &[0.3]).unwrap();
        assert!((fp.location[0] - 0.5).abs() < 1e-9);
        assert_eq!(fp.stability, Stability::Stable);
        let origin = find_fixed_point(&m, &p, &[0.0]).unwrap();
        assert_eq!(origin.stability, Stability::Unstable);
    }

    #[test]
    fn selkov_fixed_point_example() {
        let m = build_model("selkov", 0).unwrap();
        let p = m.params_with(&[("b", 0.5)]).unwrap();
        let fp = find_fixed_point(&m, &p, &[0.5, 1.4]).unwrap();
        let want = selkov_fixed_point(0.1, 0.5);
        assert!((fp.location[0] - want[0]).abs() < 1e-10);
        assert!((fp.location[1] - want[1]).abs() < 1e-10);
    }

    #[test]
    fn log_transcritical_example() {
        let m = build_model("nonnormal_transcritical", 0).unwrap();
        let fp = find_fixed_point(&m, &m.default_params(), &[1.2]).unwrap();
        assert!((fp.location[0] - 1.0).abs() < 1e-4);
        assert!(fp.residual_norm <= RESIDUAL_TOL);
    }

    #[test]
    fn log_domain_is_respected() {
        let m = build_model("nonnormal_transcritical", 0).unwrap();
        let p = m.params_with(&[("r", -2.0)]).unwrap();
        // the big first Newton step would leave the domain y > 0
        let fp = find_fixed_point(&m, &p, &[3.0]).unwrap();
        assert!(fp.location[0] > 0.0);
    }

    #[test]
    fn singular_jacobian_is_reported() {
        let doc = r#"{"state_dim": 1,
            "params": [{"name": "c", "value": 1.0, "kind": "rate"},
                       {"name": "y0", "value": 0.0, "kind": "initial_condition"}],
            "equations": [[{"coeff": {"param": "c"}, "powers": [0]}]]}"#;
        let m = crate::model::ModelDocument::from_json(doc)
            .unwrap()
            .build("c")
            .unwrap();
        let err = find_fixed_point(&m, &m.default_params(), &[0.0]).unwrap_err();
        assert_eq!(err, TwigError::SingularJacobian { iteration: 1 });
    }

    #[test]
    fn sine_oscillation() {
        let n = 50;
        let grid = SampleGrid::new(4.0 * std::f64::consts::PI, n).unwrap();
        let s = DMatrix::from_fn(n, 1, |i, _| grid.times[i].sin());
        let o = detect_oscillation(&s, &grid);
        assert!(o.oscillatory);
        let p = o.period_estimate.unwrap();
        assert!((p / std::f64::consts::TAU - 1.0).abs() < 0.05, "{p}");
    }

    #[test]
    fn long_sine_period_from_upward_crossings() {
        let grid = SampleGrid::new(100.0, 2000).unwrap();
        let s = DMatrix::from_fn(2000, 1, |i, _| (grid.times[i] * 0.7).sin() + 3.0);
        let p = detect_oscillation(&s, &grid).period_estimate.unwrap();
        assert!((p - std::f64::consts::TAU / 0.7).abs() < 0.01);
    }

    #[test]
    fn decay_and_constants_are_not_oscillatory() {
        let m = build_model("pitchfork_super", 0).unwrap();
        let grid = SampleGrid::new(100.0, 50).unwrap();
        let (st, _) =
            integrate_states(&m, &m.default_params(), &grid.times, &Dopri5::default()).unwrap();
        let s = DMatrix::from_fn(50, 1, |i, _| st[i][0]);
        assert!(!detect_oscillation(&s, &grid).oscillatory);
        assert!(!detect_oscillation(&DMatrix::from_element(50, 2, 1.5), &grid).oscillatory);
        assert!(!detect_oscillation(&DMatrix::from_element(4, 1, 1.0), &grid).oscillatory);
    }

    #[test]
    fn hopf_interior_point_is_origin() {
        let m = build_model("hopf_polar", 0).unwrap();
        let p = m.params_with(&[("mu", 0.25)]).unwrap();
        let grid = SampleGrid::new(60.0, 400).unwrap();
        let (st, _) = integrate_states(&m, &p, &grid.times, &Dopri5::default()).unwrap();
        let s = DMatrix::from_fn(400, 2, |i, k| st[i][k]);
        let fp = interior_fixed_point(&m, &p, &s, &grid).unwrap();
        assert!(fp.location[0].abs() < 1e-9);
        assert_eq!(fp.stability, Stability::Unstable);
    }

    #[test]
    fn noise_around_a_plateau_is_not_a_cycle() {
        let grid = SampleGrid::new(100.0, 400).unwrap();
        let v: Vec<f64> = grid
            .times
            .iter()
            .enumerate()
            .map(|(i, t)| 1.0 - (-t).exp() + 5e-9 * if i % 3 == 0 { 1.0 } else { -1.0 })
            .collect();
        let osc = detect_oscillation(&DMatrix::from_column_slice(400, 1, &v), &grid);
        assert!(!osc.oscillatory);
    }

    #[test]
    fn constant_input_is_flagged() {
        let m = build_model("selkov", 0).unwrap();
        let grid = SampleGrid::new(10.0, 20).unwrap();
        let s = DMatrix::from_element(20, 2, 0.7);
        let err = interior_fixed_point(&m, &m.default_params(), &s, &grid).unwrap_err();
        assert_eq!(err, TwigError::NotOscillatory);
    }

    #[test]
    fn selkov_hopf_locus_matches_closed_form() {
        let m = build_model("selkov", 0).unwrap();
        let p = m.default_params();
        let b = hopf_parameter(&m, &p, 1, 0.3, 0.5, &[0.42, 2.0]).unwrap();
        assert!(
            (b - crate::model::selkov_separatrix_b(0.1).unwrap()).abs() < 1e-10,
            "{b}"
        );
    }

    #[test]
    fn fixed_point_sensitivity_matches_closed_form() {
        let m = build_model("selkov", 0).unwrap();
        let p = m.params_with(&[("b", 0.5)]).unwrap();
        let fp = find_fixed_point(&m, &p, &[0.5, 1.4]).unwrap();
        let s = fixed_point_sensitivity(&m, &p, &fp).unwrap();
        // x* = b, y* = b / (a + b²)
        let (a, b) = (0.1, 0.5);
        let d = a + b * b;
        assert!((s[(0, 1)] - 1.0).abs() < 1e-9);
        assert!((s[(0, 0)]).abs() < 1e-9);
        assert!((s[(1, 0)] + b / (d * d)).abs() < 1e-9);
        assert!((s[(1, 1)] - (a - b * b) / (d * d)).abs() < 1e-9);
        assert_eq!(s[(0, 6)], 0.0);
    }
}

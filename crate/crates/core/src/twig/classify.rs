use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_sweep, SweepConfig, TwigSweep};
use crate::error::{Result, TwigError};
use crate::model::ModelSystem;

/// Minimum phase drift for a direction to count as a frequency direction.
pub const DRIFT_THRESHOLD: f64 = 1e-8;

const MIN_TAIL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Hyperrelevant,
    Relevant,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    /// Tracked direction index (its column in the first spectrum).
    pub index: usize,
    /// Rank by eigenvalue at the final horizon (0 = largest).
    pub final_rank: usize,
    pub relevance: Relevance,
    /// Least-squares slope of `log10 λ` against `log10 t_max` over the tail.
    pub slope: f64,
    pub final_eigenvalue: f64,
    pub dominant_param: String,
    pub dominant_index: usize,
    pub dominant_participation: f64,
    /// Participation of every parameter at the final horizon.
    pub participation: Vec<f64>,
    pub eigenvector: Vec<f64>,
    /// Below the resolution floor at the final horizon; irrelevant by fiat.
    pub floored: bool,
    pub frequency_flag: bool,
    pub phase_drift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwigReport {
    pub param_names: Vec<String>,
    /// Ordered by tracked direction index.
    pub directions: Vec<DirectionReport>,
    /// Non-irrelevant directions minus frequency-flagged ones.
    pub codimension: usize,
    /// Non-irrelevant directions before the frequency correction.
    pub raw_codimension: usize,
    pub frequency_flags: Vec<bool>,
    pub dominant_params: Vec<String>,
    pub converged: bool,
    /// Tracked index of the direction with the largest final eigenvalue.
    pub leading_direction: usize,
    /// Leading non-frequency eigenvector at the final horizon (unit norm).
    pub separatrix_normal: Vec<f64>,
    pub oscillatory: bool,
    pub period_estimate: Option<f64>,
    pub final_t_max: f64,
    pub tail_fraction: f64,
    pub slope_tol: f64,
    pub tail_points: usize,
    pub partial: bool,
    /// Smallest overlap of a tracked pair between adjacent horizons.
    pub min_tracking_overlap: f64,
    /// Tracked pairs with overlap below `1/√m` or not maximal in their row.
    pub tracking_warnings: usize,
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn log10_floor(v: f64) -> f64 {
    v.max(f64::MIN_POSITIVE).log10()
}

/// Classify each tracked direction by the growth of its eigenvalue over the
/// last `tail_fraction` of completed horizons.
pub fn classify(sweep: &TwigSweep, tail_fraction: f64, slope_tol: f64) -> Result<TwigReport> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(TwigError::InvalidSweep(format!(
            "tail_fraction {tail_fraction} not in (0, 1]"
        )));
    }
    if !(slope_tol >= 0.0 && slope_tol.is_finite()) {
        return Err(TwigError::InvalidSweep(format!(
            "slope_tol {slope_tol} must be non-negative"
        )));
    }
    let n = sweep.spectra.len();
    let last = sweep.spectra.last().ok_or(TwigError::EmptySweep)?;
    let tail = (tail_fraction * n as f64).ceil() as usize;
    if tail < MIN_TAIL {
        return Err(TwigError::InsufficientTail {
            needed: MIN_TAIL,
            have: tail,
        });
    }
    let m = sweep.n_directions();
    let logt: Vec<f64> = sweep.spectra[n - tail..]
        .iter()
        .map(|s| s.t_max.log10())
        .collect();

    let mut directions = Vec::with_capacity(m);
    for d in 0..m {
        let lam = sweep.tracked_eigenvalues(d);
        let logl: Vec<f64> = lam[n - tail..].iter().map(|&v| log10_floor(v)).collect();
        let slope = ols_slope(&logt, &logl);
        let col = sweep.final_column(d);
        let floored = last.is_floored(col);
        let relevance = if floored || slope < -slope_tol {
            Relevance::Irrelevant
        } else if slope > slope_tol {
            Relevance::Hyperrelevant
        } else {
            Relevance::Relevant
        };
        let (dom, share) = last.dominant_param(col);
        directions.push(DirectionReport {
            index: d,
            final_rank: col,
            relevance,
            slope,
            final_eigenvalue: last.eigenvalues[col],
            dominant_param: sweep.param_names.get(dom).cloned().unwrap_or_default(),
            dominant_index: dom,
            dominant_participation: share,
            participation: last.participation.column(col).iter().copied().collect(),
            eigenvector: last.eigenvectors.column(col).iter().copied().collect(),
            floored,
            frequency_flag: false,
            phase_drift: sweep.final_drift.as_ref().map(|dr| dr[col]),
        });
    }

    // Frequency direction: the hyperrelevant direction whose response drifts
    // most along the flow, when the system oscillates.
    let oscillatory = sweep.oscillation.is_some_and(|o| o.oscillatory);
    if oscillatory {
        let candidate = directions
            .iter()
            .filter(|d| d.relevance == Relevance::Hyperrelevant)
            .filter_map(|d| {
                d.phase_drift
                    .filter(|&x| x > DRIFT_THRESHOLD)
                    .map(|x| (d.index, x))
            })
            .fold(None, |best: Option<(usize, f64)>, c| match best {
                Some(b) if b.1 >= c.1 => Some(b),
                _ => Some(c),
            });
        if let Some((idx, _)) = candidate {
            directions[idx].frequency_flag = true;
        }
    }

    let raw_codimension = directions
        .iter()
        .filter(|d| d.relevance != Relevance::Irrelevant)
        .count();
    let flagged = directions.iter().filter(|d| d.frequency_flag).count();

    let lowest = m.div_ceil(4);
    let converged = sweep.initial_condition_params.iter().all(|&j| {
        let (col, _) = super::argmax(last.participation.row(j).iter().copied());
        col >= m - lowest
    });

    let by_rank = |pred: &dyn Fn(&DirectionReport) -> bool| {
        directions
            .iter()
            .filter(|d| pred(d))
            .min_by_key(|d| d.final_rank)
            .map(|d| d.index)
    };
    let leading_direction = by_rank(&|_| true).unwrap_or(0);
    let normal_dir = by_rank(&|d| !d.frequency_flag).unwrap_or(leading_direction);
    let separatrix_normal = directions[normal_dir].eigenvector.clone();

    let bound = 1.0 / (m as f64).sqrt();
    let tracking_warnings = sweep
        .overlaps
        .iter()
        .zip(&sweep.row_max)
        .flat_map(|(o, r)| o.iter().zip(r))
        .filter(|(o, r)| **o < bound || !**r)
        .count();

    Ok(TwigReport {
        param_names: sweep.param_names.clone(),
        codimension: raw_codimension.saturating_sub(flagged),
        raw_codimension,
        frequency_flags: directions.iter().map(|d| d.frequency_flag).collect(),
        dominant_params: directions
            .iter()
            .map(|d| d.dominant_param.clone())
            .collect(),
        directions,
        converged,
        leading_direction,
        separatrix_normal,
        oscillatory,
        period_estimate: sweep.oscillation.and_then(|o| o.period_estimate),
        final_t_max: last.t_max,
        tail_fraction,
        slope_tol,
        tail_points: tail,
        partial: sweep.is_partial(),
        min_tracking_overlap: sweep.min_overlap(),
        tracking_warnings,
    })
}

/// Result of one offset of a near-bifurcation scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearBifurcationEntry {
    pub offset: f64,
    pub param: String,
    pub param_value: f64,
    pub report: Option<TwigReport>,
    pub error: Option<String>,
    /// Horizons at which the local slopes are evaluated (geometric midpoints).
    pub slope_horizons: Vec<f64>,
    /// Local log-log slope of the leading direction between adjacent horizons.
    pub leading_local_slopes: Vec<f64>,
    pub max_local_slope: Option<f64>,
    /// First horizon after the peak local slope where the slope falls below
    /// `slope_tol`: the end of the intermediate hyperrelevant regime.
    pub intermediate_end: Option<f64>,
}

/// Sweep and classify at `base + offset` of the bifurcation parameter for
/// each offset. Failures are recorded per entry.
pub fn near_bifurcation_profile(
    model: &ModelSystem,
    base_params: &[f64],
    offsets: &[f64],
    config: &SweepConfig,
    tail_fraction: f64,
    slope_tol: f64,
) -> Result<Vec<NearBifurcationEntry>> {
    let index = model.bifurcation_param.ok_or_else(|| {
        TwigError::InvalidModel(format!(
            "model '{}' has no bifurcation parameter",
            model.name
        ))
    })?;
    if base_params.len() != model.n_params() {
        return Err(TwigError::DimensionMismatch {
            what: "parameter vector",
            expected: model.n_params(),
            got: base_params.len(),
        });
    }
    let name = model.parameters[index].name.clone();
    Ok(offsets
        .par_iter()
        .map(|&offset| {
            let mut p = base_params.to_vec();
            p[index] += offset;
            let mut entry = NearBifurcationEntry {
                offset,
                param: name.clone(),
                param_value: p[index],
                report: None,
                error: None,
                slope_horizons: Vec::new(),
                leading_local_slopes: Vec::new(),
                max_local_slope: None,
                intermediate_end: None,
            };
            let result = run_sweep(model, &p, config)
                .and_then(|s| Ok((classify(&s, tail_fraction, slope_tol)?, s)));
            match result {
                Ok((report, sweep)) => {
                    let lam = sweep.tracked_eigenvalues(report.leading_direction);
                    let t = sweep.completed_horizons();
                    for w in 0..t.len().saturating_sub(1) {
                        entry.slope_horizons.push((t[w] * t[w + 1]).sqrt());
                        entry.leading_local_slopes.push(
                            (log10_floor(lam[w + 1]) - log10_floor(lam[w]))
                                / (t[w + 1] / t[w]).log10(),
                        );
                    }
                    let (peak, max) = super::argmax(entry.leading_local_slopes.iter().copied());
                    if !entry.leading_local_slopes.is_empty() {
                        entry.max_local_slope = Some(max);
                        entry.intermediate_end = (peak + 1..entry.leading_local_slopes.len())
                            .find(|&w| entry.leading_local_slopes[w] < slope_tol)
                            .map(|w| entry.slope_horizons[w]);
                    }
                    entry.report = Some(report);
                }
                Err(e) => entry.error = Some(e.to_string()),
            }
            entry
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_model;
    use crate::twig::{spectrum_of, FimSpectrum};
    use nalgebra::DMatrix;

    /// Diagonal Jacobians with prescribed power laws `λ_k ∝ t^{e_k}`.
    fn synthetic(exps: &[f64], ic: Vec<usize>) -> TwigSweep {
        let horizons = crate::twig::horizon_grid(1.0, 1e4, 20).unwrap();
        let spectra: Vec<FimSpectrum> = horizons
            .iter()
            .map(|&t| {
                let j = DMatrix::from_fn(exps.len(), exps.len(), |r, c| {
                    if r == c {
                        t.powf(exps[c] / 2.0)
                    } else {
                        0.0
                    }
                });
                spectrum_of(&j, t).unwrap()
            })
            .collect();
        let names = (0..exps.len()).map(|i| format!("p{i}")).collect();
        TwigSweep::from_spectra(horizons, spectra, names, ic)
    }

    #[test]
    fn slope() {
        assert!((ols_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-15);
        assert_eq!(ols_slope(&[1.0, 1.0], &[0.0, 5.0]), 0.0);
    }

    #[test]
    fn power_laws_are_classified() {
        let s = synthetic(&[1.0, 0.05, -1.0, -3.0], vec![3]);
        let r = classify(&s, 0.25, 0.2).unwrap();
        let rel: Vec<_> = r.directions.iter().map(|d| d.relevance).collect();
        // the tracked indices follow the first spectrum's ordering
        let by_param = |p: usize| {
            r.directions
                .iter()
                .find(|d| d.dominant_index == p)
                .unwrap()
                .relevance
        };
        assert_eq!(by_param(0), Relevance::Hyperrelevant);
        assert_eq!(by_param(1), Relevance::Relevant);
        assert_eq!(by_param(2), Relevance::Irrelevant);
        assert_eq!(rel.len(), 4);
        assert_eq!(r.codimension, 2);
        assert_eq!(r.raw_codimension, 2);
        assert!(r.converged);
        assert_eq!(r.separatrix_normal, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn unconverged_initial_condition() {
        let s = synthetic(&[1.0, 0.0, -1.0, -3.0], vec![0]);
        assert!(!classify(&s, 0.25, 0.2).unwrap().converged);
    }

    #[test]
    fn too_short_tail() {
        let s = synthetic(&[1.0, 0.0], vec![]);
        assert_eq!(
            classify(&s, 0.1, 0.2).unwrap_err(),
            TwigError::InsufficientTail { needed: 4, have: 2 }
        );
        assert!(classify(&s, 0.0, 0.2).is_err());
    }

    #[test]
    fn transcritical_leading_is_relevant() {
        let m = build_model("transcritical", 0).unwrap();
        let s = run_sweep(&m, &m.default_params(), &SweepConfig::default()).unwrap();
        let r = classify(&s, 0.25, 0.2).unwrap();
        let lead = &r.directions[r.leading_direction];
        assert_eq!(lead.relevance, Relevance::Relevant);
        assert_eq!(lead.dominant_param, "r");
        assert!(lead.slope.abs() < 0.15, "{}", lead.slope);
    }

    #[test]
    fn profile_reports_per_offset() {
        let m = build_model("pitchfork_super", 0).unwrap();
        let cfg = SweepConfig {
            t_min: 0.1,
            t_max: 1e3,
            count: 24,
            ..SweepConfig::default()
        };
        let out = near_bifurcation_profile(&m, &m.default_params(), &[-0.1, 0.0], &cfg, 0.25, 0.2)
            .unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].param, "r");
        assert_eq!(out[0].param_value, -0.1);
        // away from the bifurcation the rise ends; at it, it never does
        assert!(out[0].intermediate_end.is_some());
        assert!(out[0].max_local_slope.unwrap() > 0.2);
        let at = out[1].report.as_ref().unwrap();
        assert_eq!(
            at.directions[at.leading_direction].relevance,
            Relevance::Hyperrelevant
        );
    }

    #[test]
    fn profile_keeps_going_after_a_failure() {
        let m = build_model("saddle_node", 0).unwrap();
        let cfg = SweepConfig {
            t_min: 0.1,
            t_max: 100.0,
            count: 8,
            ..SweepConfig::default()
        };
        // r = 1 blows up quickly, so the tail is too short to classify
        let out = near_bifurcation_profile(&m, &m.default_params(), &[1.0, -1.0], &cfg, 0.5, 0.2)
            .unwrap();
        assert!(out[0].error.is_some());
        assert!(out[1].report.is_some());
    }
}

//! Time-widening FIM analysis: spectra, sweeps over the horizon, direction
//! tracking and relevance classification.

mod classify;
mod sweep;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TwigError};
use crate::integrate::TrajectoryJacobian;

pub use classify::{
    classify, near_bifurcation_profile, ols_slope, DirectionReport, NearBifurcationEntry,
    Relevance, TwigReport, DRIFT_THRESHOLD,
};
pub use sweep::{horizon_grid, run_sweep, RecenterMode, SweepConfig, SweepFailure, TwigSweep};

/// Singular values below this fraction of the largest are not resolved.
pub const RANK_FLOOR: f64 = 1e-12;

/// Eigen-decomposition of `JᵀJ` at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FimSpectrum {
    pub t_max: f64,
    /// Descending, non-negative.
    pub eigenvalues: Vec<f64>,
    /// `m × m`, column `k` pairs with `eigenvalues[k]`. Each column is signed so
    /// its largest-magnitude component is positive.
    pub eigenvectors: DMatrix<f64>,
    /// `p[(i, k)] = V[(i, k)]²`: share of parameter `i` in direction `k`.
    pub participation: DMatrix<f64>,
    /// Number of trailing eigenvalues clamped at the resolution floor.
    pub rank_floor: usize,
}

impl FimSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Whether column `k` sits at the resolution floor.
    pub fn is_floored(&self, k: usize) -> bool {
        k >= self.dim() - self.rank_floor
    }

    /// Parameter with the largest participation in column `k` (first on ties).
    pub fn dominant_param(&self, k: usize) -> (usize, f64) {
        argmax(self.participation.column(k).iter().copied())
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
}

/// Spectrum of the FIM of a sampled trajectory Jacobian.
pub fn fim_spectrum(tj: &TrajectoryJacobian) -> Result<FimSpectrum> {
    spectrum_of(&tj.jacobian, tj.grid.t_max)
}

/// Spectrum of `JᵀJ` computed from the SVD of `J`; the product is never formed.
pub fn spectrum_of(jacobian: &DMatrix<f64>, t_max: f64) -> Result<FimSpectrum> {
    let m = jacobian.ncols();
    if m == 0 {
        return Err(TwigError::DimensionMismatch {
            what: "jacobian columns",
            expected: 1,
            got: 0,
        });
    }
    if jacobian.iter().any(|v| !v.is_finite()) {
        return Err(TwigError::NonFiniteJacobian { what: "fim input" });
    }
    // Zero rows leave JᵀJ unchanged and give the thin SVD a full V.
    let j = if jacobian.nrows() < m {
        let mut padded = DMatrix::zeros(m, m);
        padded.rows_mut(0, jacobian.nrows()).copy_from(jacobian);
        padded
    } else {
        jacobian.clone()
    };
    let svd = nalgebra::linalg::SVD::try_new(j, false, true, f64::EPSILON, 0)
        .ok_or(TwigError::SvdFailure { t_max })?;
    let v_t = svd.v_t.ok_or(TwigError::SvdFailure { t_max })?;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let sigma_max = svd.singular_values[order[0]];
    let floor = RANK_FLOOR * sigma_max;

    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenvectors = DMatrix::zeros(m, m);
    let mut rank_floor = 0;
    for (k, &src) in order.iter().enumerate() {
        let s = svd.singular_values[src];
        if s < floor || sigma_max == 0.0 {
            rank_floor += 1;
            eigenvalues.push(floor * floor);
        } else {
            eigenvalues.push(s * s);
        }
        let mut col: Vec<f64> = v_t.row(src).iter().copied().collect();
        canonicalize_sign(&mut col);
        eigenvectors.set_column(k, &nalgebra::DVector::from_vec(col));
    }
    let participation = eigenvectors.map(|v| v * v);
    Ok(FimSpectrum {
        t_max,
        eigenvalues,
        eigenvectors,
        participation,
        rank_floor,
    })
}

/// Flip `v` so its largest-magnitude component (first on ties) is positive.
pub fn canonicalize_sign(v: &mut [f64]) {
    let (i, _) = argmax(v.iter().map(|x| x.abs()));
    if v.get(i).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate_with_sensitivities, SampleGrid};
    use crate::model::build_model;

    #[test]
    fn identity_jacobian() {
        let s = spectrum_of(&DMatrix::identity(3, 3), 1.0).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0; 3]);
        assert_eq!(s.rank_floor, 0);
        for k in 0..3 {
            assert!((s.participation.column(k).sum() - 1.0).abs() < 1e-12);
            assert!((s.eigenvectors.column(k).amax() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_parameter_is_sum_of_squares() {
        let j = DMatrix::from_column_slice(4, 1, &[1.0, -2.0, 0.5, 3.0]);
        let s = spectrum_of(&j, 2.0).unwrap();
        assert!((s.eigenvalues[0] - 14.25).abs() < 1e-12);
        assert_eq!(s.eigenvectors[(0, 0)], 1.0);
    }

    #[test]
    fn wide_jacobian_is_padded() {
        let j = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 2.0]);
        let s = spectrum_of(&j, 1.0).unwrap();
        assert!((s.eigenvalues[0] - 9.0).abs() < 1e-12);
        assert_eq!(s.rank_floor, 2);
        assert!(s.is_floored(1) && s.is_floored(2) && !s.is_floored(0));
        let v = s.eigenvectors.column(0);
        assert!((v[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rank_floor_counts_degenerate_directions() {
        let j = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let s = spectrum_of(&j, 1.0).unwrap();
        assert_eq!(s.rank_floor, 1);
        assert!(s.eigenvalues[1] > 0.0 && s.eigenvalues[1] <= 1e-24 * s.eigenvalues[0] * 1.0001);
    }

    #[test]
    fn non_finite_is_rejected() {
        let j = DMatrix::from_element(2, 2, f64::NAN);
        assert!(matches!(
            spectrum_of(&j, 1.0),
            Err(TwigError::NonFiniteJacobian { .. })
        ));
    }

    #[test]
    fn pitchfork_leading_direction_is_r() {
        let m = build_model("pitchfork_super", 2).unwrap();
        let g = SampleGrid::new(1e3, 50).unwrap();
        let tj = integrate_with_sensitivities(&m, &m.default_params(), &g, None).unwrap();
        let s = fim_spectrum(&tj).unwrap();
        let (p, share) = s.dominant_param(0);
        assert_eq!(p, 0);
        assert!(share >= 0.99, "{share}");
    }

    #[test]
    fn sign_canonicalization() {
        let mut v = vec![0.1, -0.9, 0.3];
        canonicalize_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }
}

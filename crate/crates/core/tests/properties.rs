//! Invariants of the FIM spectrum and the classifier over random inputs.

use nalgebra::DMatrix;
use proptest::prelude::*;

use twig_core::twig::{classify, horizon_grid, ols_slope, spectrum_of, FimSpectrum, TwigSweep};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn any_jacobian() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..12, 1usize..7).prop_flat_map(|(r, c)| matrix(r, c))
}

/// Spectra of `diag(t^{e_k})`-scaled columns: a sweep with known slopes.
fn power_law_sweep(exponents: &[f64], scale: f64) -> TwigSweep {
    let horizons = horizon_grid(1e-2, 1e3, 30).unwrap();
    let m = exponents.len();
    let spectra: Vec<FimSpectrum> = horizons
        .iter()
        .map(|&t| {
            let j = DMatrix::from_fn(m, m, |i, k| {
                if i == k {
                    scale * t.powf(exponents[k] / 2.0)
                } else {
                    0.0
                }
            });
            spectrum_of(&j, t).unwrap()
        })
        .collect();
    let names = (0..m).map(|k| format!("p{k}")).collect();
    TwigSweep::from_spectra(horizons, spectra, names, Vec::new())
}

proptest! {
    #[test]
    fn spectrum_is_psd_and_normalized(j in any_jacobian()) {
        let s = spectrum_of(&j, 1.0).unwrap();
        prop_assert_eq!(s.dim(), j.ncols());
        for w in s.eigenvalues.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for k in 0..s.dim() {
            prop_assert!(s.eigenvalues[k] >= 0.0);
            prop_assert!((s.participation.column(k).sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn svd_matches_explicit_fim(j in matrix(8, 4)) {
        let s = spectrum_of(&j, 1.0).unwrap();
        let fim = j.transpose() * &j;
        let mut brute: Vec<f64> = fim.symmetric_eigenvalues().iter().copied().collect();
        brute.sort_by(|a, b| b.total_cmp(a));
        let top = brute[0].max(1e-300);
        for (k, (a, b)) in s.eigenvalues.iter().zip(&brute).enumerate() {
            if s.is_floored(k) {
                continue;
            }
            prop_assert!((a - b).abs() <= 1e-8 * top, "{} vs {}", a, b);
        }
        // each resolved eigenvector satisfies F v = λ v
        for k in 0..s.dim() - s.rank_floor {
            let v = s.eigenvectors.column(k);
            let r = &fim * v - v * s.eigenvalues[k];
            prop_assert!(r.amax() <= 1e-8 * top);
        }
    }

    #[test]
    fn eigenvectors_are_sign_canonical(j in any_jacobian()) {
        let s = spectrum_of(&j, 1.0).unwrap();
        for k in 0..s.dim() {
            let col = s.eigenvectors.column(k);
            let i = col.iamax();
            prop_assert!(col[i] > 0.0);
        }
    }

    #[test]
    fn uniform_scaling_keeps_eigenvectors(j in matrix(6, 3), c in 1e-3f64..1e3) {
        let a = spectrum_of(&j, 1.0).unwrap();
        let b = spectrum_of(&(&j * c), 1.0).unwrap();
        prop_assume!(a.rank_floor == 0);
        let gaps_ok = a.eigenvalues.windows(2).all(|w| w[0] - w[1] > 1e-3 * w[0]);
        prop_assume!(gaps_ok);
        for k in 0..a.dim() {
            prop_assert!((b.eigenvalues[k] / (c * c) - a.eigenvalues[k]).abs() <= 1e-9 * a.eigenvalues[0]);
            let overlap = a.eigenvectors.column(k).dot(&b.eigenvectors.column(k)).abs();
            prop_assert!((overlap - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn classification_is_scale_invariant(
        exps in prop::collection::vec(-4.0f64..3.0, 2..5),
        scale in 1e-3f64..1e3,
    ) {
        // keep the synthetic slopes away from the class boundaries
        prop_assume!(exps.iter().all(|e| (e.abs() - 0.2).abs() > 0.05 && (e - 1.0).abs() > 0.05));
        let base = classify(&power_law_sweep(&exps, 1.0), 0.25, 0.2).unwrap();
        let scaled = classify(&power_law_sweep(&exps, scale), 0.25, 0.2).unwrap();
        let rel = |r: &twig_core::twig::TwigReport| r.directions.iter().map(|d| d.relevance).collect::<Vec<_>>();
        prop_assert_eq!(rel(&base), rel(&scaled));
        prop_assert_eq!(base.codimension, scaled.codimension);
        prop_assert_eq!(&base.dominant_params, &scaled.dominant_params);
        for (a, b) in base.directions.iter().zip(&scaled.directions) {
            prop_assert!((a.slope - b.slope).abs() < 1e-6);
        }
    }

    #[test]
    fn slopes_of_power_laws_are_recovered(exps in prop::collection::vec(-3.0f64..3.0, 1..4)) {
        let distinct = exps.iter().enumerate().all(|(i, a)| exps[..i].iter().all(|b| (a - b).abs() > 0.1));
        prop_assume!(distinct);
        let report = classify(&power_law_sweep(&exps, 1.0), 0.25, 0.2).unwrap();
        for d in &report.directions {
            let k: usize = d.dominant_param[1..].parse().unwrap();
            prop_assert!((d.slope - exps[k]).abs() < 1e-6, "{} vs {}", d.slope, exps[k]);
        }
    }

    #[test]
    fn ols_recovers_lines(a in -5.0f64..5.0, b in -5.0f64..5.0, n in 2usize..40) {
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.37 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|x| a * x + b).collect();
        prop_assert!((ols_slope(&x, &y) - a).abs() < 1e-9);
    }

    #[test]
    fn horizon_grid_is_geometric(t_min in 1e-3f64..1.0, decades in 0.5f64..5.0, count in 8usize..80) {
        let t_max = t_min * 10f64.powf(decades);
        let h = horizon_grid(t_min, t_max, count).unwrap();
        prop_assert_eq!(h.len(), count);
        prop_assert!((h[0] - t_min).abs() <= 1e-12 * t_min);
        prop_assert!((h[count - 1] - t_max).abs() <= 1e-12 * t_max);
        let r = h[1] / h[0];
        for w in h.windows(2) {
            prop_assert!((w[1] / w[0] - r).abs() <= 1e-9 * r);
        }
    }
}

//! End-to-end sweeps: recentering, partial runs, near-bifurcation profiles
//! and equilibria of the registry models.

use twig_core::equilibria::{find_fixed_point, hopf_parameter, Stability};
use twig_core::integrate::{integrate_with_sensitivities, SampleGrid};
use twig_core::model::{build_model, selkov_separatrix_b};
use twig_core::twig::{
    classify, near_bifurcation_profile, run_sweep, RecenterMode, Relevance, SweepConfig,
};

fn quick() -> SweepConfig {
    SweepConfig {
        t_min: 0.1,
        t_max: 100.0,
        count: 20,
        ..SweepConfig::default()
    }
}

#[test]
fn recentered_stable_pitchfork_settles() {
    let model = build_model("pitchfork_super", 2).unwrap();
    let params = model.params_with(&[("r", -0.1)]).unwrap();
    let fp = find_fixed_point(&model, &params, &[0.01]).unwrap();
    assert!(fp.location[0].abs() < 1e-10);
    let grid = SampleGrid::new(1e3, 50).unwrap();
    let tj = integrate_with_sensitivities(&model, &params, &grid, Some(&fp.location)).unwrap();
    let last = tj.states.row(grid.n_samples - 1).norm();
    assert!(last < 1e-6, "{last}");
}

#[test]
fn sweeps_are_reproducible() {
    let model = build_model("transcritical", 2).unwrap();
    let params = model.default_params();
    let a = run_sweep(&model, &params, &quick()).unwrap();
    let b = run_sweep(&model, &params, &quick()).unwrap();
    assert_eq!(a.spectra, b.spectra);
    assert_eq!(a.tracking, b.tracking);
}

#[test]
fn blow_up_gives_a_partial_sweep() {
    let model = build_model("pitchfork_sub", 0).unwrap();
    let params = model.params_with(&[("r", 0.0), ("y0", 1.0)]).unwrap();
    let sweep = run_sweep(&model, &params, &quick()).unwrap();
    assert!(sweep.is_partial());
    let failure = sweep.failure.as_ref().unwrap();
    assert!(failure.t_max > 0.5);
    assert!(sweep.completed_horizons().iter().all(|&t| t < 0.5));
    let report = classify(&sweep, 0.25, 0.2);
    // a handful of horizons still classify, too few do not
    if let Ok(r) = report {
        assert!(r.partial);
    }
}

#[test]
fn saddle_node_r_is_hyperrelevant() {
    let model = build_model("saddle_node", 1).unwrap();
    let sweep = run_sweep(&model, &model.default_params(), &SweepConfig::default()).unwrap();
    let report = classify(&sweep, 0.25, 0.2).unwrap();
    let lead = &report.directions[report.leading_direction];
    assert_eq!(lead.dominant_param, "r");
    assert_eq!(lead.relevance, Relevance::Hyperrelevant);
    assert!((lead.slope - 2.0).abs() < 0.2, "{}", lead.slope);
    assert_eq!(report.codimension, 1);
}

#[test]
fn near_bifurcation_profile_orders_offsets() {
    let model = build_model("pitchfork_super", 0).unwrap();
    let offsets = [-0.05, 0.0, 0.05];
    let entries = near_bifurcation_profile(
        &model,
        &model.default_params(),
        &offsets,
        &quick(),
        0.25,
        0.2,
    )
    .unwrap();
    assert_eq!(entries.len(), 3);
    for (e, &o) in entries.iter().zip(&offsets) {
        assert_eq!(e.offset, o);
        assert_eq!(e.param, "r");
        assert!(e.error.is_none(), "{:?}", e.error);
        assert_eq!(e.leading_local_slopes.len(), e.slope_horizons.len());
    }
    let tail = |i: usize| {
        let r = entries[i].report.as_ref().unwrap();
        r.directions[r.leading_direction].slope
    };
    // information grows fastest at the bifurcation itself
    assert!(tail(0) < 0.0 && tail(1) > 0.8 && tail(2) < tail(1));
}

#[test]
fn selkov_default_sits_on_the_hopf_locus() {
    let model = build_model("selkov", 0).unwrap();
    let params = model.default_params();
    let b = params[model.param_index("b").unwrap()];
    assert!((b - selkov_separatrix_b(0.1).unwrap()).abs() < 1e-12);
    let fp = find_fixed_point(&model, &params, &[0.5, 1.6]).unwrap();
    assert_eq!(fp.stability, Stability::Marginal);
    let found = hopf_parameter(&model, &params, 1, 0.3, 0.5, &[0.5, 1.6]).unwrap();
    assert!((found - b).abs() < 1e-8, "{found} vs {b}");
}

#[test]
fn full_recentering_removes_fixed_point_drift() {
    // off the bifurcation the equilibrium is hyperbolic and moves with alpha
    let model = build_model("modified_transcritical", 0).unwrap();
    let params = model.params_with(&[("r", -2.0)]).unwrap();
    let alpha = model.param_index("alpha").unwrap();
    let plain = classify(&run_sweep(&model, &params, &quick()).unwrap(), 0.25, 0.2).unwrap();
    let sweep = run_sweep(
        &model,
        &params,
        &SweepConfig {
            recenter: RecenterMode::Full,
            ..quick()
        },
    )
    .unwrap();
    assert!(sweep.fixed_point.is_some());
    let full = classify(&sweep, 0.25, 0.2).unwrap();
    let lead = &plain.directions[plain.leading_direction];
    assert_eq!(lead.dominant_index, alpha);
    assert_eq!(lead.relevance, Relevance::Relevant);
    assert!(full
        .directions
        .iter()
        .all(|d| d.relevance == Relevance::Irrelevant));
}

//! Models described as JSON coefficient tables behave like the built-ins.

use approx::assert_relative_eq;

use twig_core::integrate::{integrate_with_sensitivities, SampleGrid};
use twig_core::model::{build_model, ModelDocument};
use twig_core::twig::{classify, run_sweep, SweepConfig};

const SADDLE_NODE: &str = r#"{
    "state_dim": 1,
    "params": [
        {"name": "r", "value": 0.0, "kind": "rate"},
        {"name": "alpha1", "value": 0.0, "kind": "rate"},
        {"name": "y0", "value": -1.0, "kind": "initial_condition"}
    ],
    "equations": [[
        {"coeff": {"param": "r"}, "powers": [0]},
        {"coeff": 1.0, "powers": [2]},
        {"coeff": {"param": "alpha1"}, "powers": [3]}
    ]]
}"#;

#[test]
fn custom_saddle_node_matches_the_registry() {
    let custom = ModelDocument::from_json(SADDLE_NODE)
        .unwrap()
        .build("custom")
        .unwrap();
    let builtin = build_model("saddle_node", 1).unwrap();
    assert_eq!(custom.param_names(), builtin.param_names());
    let grid = SampleGrid::new(30.0, 25).unwrap();
    let a = integrate_with_sensitivities(&custom, &custom.default_params(), &grid, None).unwrap();
    let b = integrate_with_sensitivities(&builtin, &builtin.default_params(), &grid, None).unwrap();
    for (x, y) in a.jacobian.iter().zip(b.jacobian.iter()) {
        assert_relative_eq!(x, y, max_relative = 1e-9, epsilon = 1e-14);
    }
    let report = classify(
        &run_sweep(&custom, &custom.default_params(), &SweepConfig::default()).unwrap(),
        0.25,
        0.2,
    )
    .unwrap();
    assert_eq!(
        report.directions[report.leading_direction].dominant_param,
        "r"
    );
}

#[test]
fn malformed_documents_are_rejected() {
    let unknown_param = SADDLE_NODE.replace(r#"{"param": "alpha1"}"#, r#"{"param": "nope"}"#);
    assert!(ModelDocument::from_json(&unknown_param)
        .and_then(|d| d.build("x"))
        .is_err());
    let bad_powers = SADDLE_NODE.replace(r#""powers": [2]"#, r#""powers": [2, 1]"#);
    assert!(ModelDocument::from_json(&bad_powers)
        .and_then(|d| d.build("x"))
        .is_err());
    assert!(ModelDocument::from_json("{").is_err());
}

use noisykernel::harness::{
    emit_report, read_json_report, records_from_csv, run_experiment, CheckStatus, ExperimentConfig, OutputFormat,
};
use noisykernel::Error;

fn raw(format: &str, extra: serde_json::Value) -> String {
    let mut v = serde_json::json!({
        "name": "pipeline",
        "signal": {"family": "circle_embed", "scale": 1.0},
        "noise": {"family": "gaussian_like", "sigma": {"kind": "diagonal", "values": [1.0, 2.0]}},
        "radii": {"family": "two_point", "low": 0.7, "high": 1.3},
        "kernel": {"family": "euclidean_distance", "func": {"kind": "gaussian", "s": 0.5}},
        "grid": [[20, 2], [20, 8], [20, 32]],
        "replications": 3,
        "base_seed": 5,
        "checks": ["frobenius_gap", "weyl", "centering", "laplacian"],
        "output": {"path": format!("out.{format}"), "format": format}
    });
    for (k, val) in extra.as_object().unwrap() {
        v[k] = val.clone();
    }
    v.to_string()
}

fn config(format: &str, extra: serde_json::Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&raw(format, extra)).unwrap()
}

#[test]
fn diagonal_covariance_must_match_dimension() {
    // a two-entry diagonal only fits p = 2
    let err = ExperimentConfig::from_json(&raw("csv", serde_json::json!({}))).unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "noise"), "{err}");
}

fn good(format: &str) -> ExperimentConfig {
    config(
        format,
        serde_json::json!({"noise": {"family": "gaussian_like", "sigma": {"kind": "ar1", "rho": 0.5}}}),
    )
}

#[test]
fn csv_run_round_trips() {
    let cfg = good("csv");
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.records.len(), 9);
    let dir = tempfile::tempdir().unwrap();
    let path = cfg.output.resolve(Some(dir.path()));
    let files = emit_report(&out.records, &out.aggregate, cfg.output.format, &path).unwrap();
    assert_eq!(files.len(), 2);
    let back = records_from_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, out.records);
    assert!(out.aggregate.passed(), "{:?}", out.aggregate.checks);
    let fit = out.aggregate.fit.expect("three grid points with positive brackets");
    assert!(fit.c_hat > 0.0);
}

#[test]
fn json_run_round_trips() {
    let cfg = good("json");
    let out = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    emit_report(&out.records, &out.aggregate, OutputFormat::Json, &path).unwrap();
    let back = read_json_report(&path).unwrap();
    assert_eq!(back.records, out.records);
    assert_eq!(back.aggregate, out.aggregate);
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for i in 0..2 {
        let cfg = good("csv");
        let out = run_experiment(&cfg).unwrap();
        let path = dir.path().join(format!("{i}.csv"));
        emit_report(&out.records, &out.aggregate, OutputFormat::Csv, &path).unwrap();
        texts.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    let other = run_experiment(&config(
        "csv",
        serde_json::json!({
            "noise": {"family": "gaussian_like", "sigma": {"kind": "ar1", "rho": 0.5}},
            "base_seed": 6
        }),
    ))
    .unwrap();
    assert_ne!(records_from_csv(&String::from_utf8(texts[0].clone()).unwrap()).unwrap(), other.records);
}

#[test]
fn dot_product_run_reports_no_bracket() {
    let cfg = config(
        "csv",
        serde_json::json!({
            "noise": {"family": "sphere_uniform"},
            "kernel": {"family": "dot_product", "func": {"kind": "affine", "a": 1.0, "b": 0.5}},
            "checks": ["dotproduct", "weyl"],
            "grid": [[15, 50], [15, 800]]
        }),
    );
    let out = run_experiment(&cfg).unwrap();
    assert!(out.records.iter().all(|r| r.bracket_b == 0.0));
    assert!(out.aggregate.fit.is_none());
    let dot = &out.aggregate.checks[0];
    assert_eq!(dot.status, CheckStatus::Pass, "{dot:?}");
}

#[test]
fn unbounded_signal_counts_nothing_out_of_domain() {
    let cfg = config(
        "csv",
        serde_json::json!({
            "signal": {"family": "gaussian_lowrank", "intrinsic_dim": 2},
            "noise": {"family": "sphere_uniform"},
            "grid": [[10, 20]]
        }),
    );
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.records[0].out_of_domain_count, 0);
}

#[test]
fn narrow_declared_domain_counts_pairs() {
    let cfg = config(
        "csv",
        serde_json::json!({
            "noise": {"family": "sphere_uniform"},
            "kernel": {"family": "euclidean_distance", "func": {"kind": "gaussian", "s": 0.5},
                       "domain_interval": [100.0, 200.0]},
            "grid": [[10, 20]],
            "replications": 1
        }),
    );
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.records[0].out_of_domain_count, 45);
}

#[test]
fn unknown_model_keys_are_rejected() {
    for (key, value) in [
        ("noise", serde_json::json!({"family": "gaussian_like", "sigma": {"kind": "identity", "scale": 2.0}})),
        ("noise", serde_json::json!({"family": "sphere_uniform", "sigma": {"kind": "identity"}})),
        ("radii", serde_json::json!({"family": "constant_one", "value": 1.0})),
        ("signal", serde_json::json!({"family": "circle_embed", "radius": 1.0})),
    ] {
        let mut extra = serde_json::json!({"noise": {"family": "sphere_uniform"}});
        extra[key] = value;
        let err = ExperimentConfig::from_json(&raw("csv", extra)).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, ref reason } if field.starts_with(key) && reason.contains("unknown field")),
            "{key}: {err}"
        );
    }
}

use std::fs;
use std::path::Path;

use gne::cli::{main_with_args, Fixture, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK};
use gne::game::kkt_residual;
use gne::scenarios::build_sensor_network;

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn gne(args: &[&str]) -> i32 {
    main_with_args(
        std::iter::once("gne")
            .chain(args.iter().copied())
            .chain(["--quiet"]),
    )
}

const SHORT_RUN: &str = r#"{
    "scenario": "sensor_network",
    "algorithm": "alg1",
    "gain": {"c": 30.0},
    "integrator": {"step": 0.001, "horizon": 2.0, "stride": 70, "stop_on_convergence": false}
}"#;

#[test]
fn run_output_is_reproducible_and_strided() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT_RUN);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(
            gne(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]),
            1
        );
    }
    let csv_a = fs::read(a.join("trajectory.csv")).unwrap();
    let csv_b = fs::read(b.join("trajectory.csv")).unwrap();
    assert_eq!(csv_a, csv_b);

    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(gne::dynamics::CSV_SCHEMA));
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,kkt_residual"));
    assert!(header.ends_with("tracking_error"));
    let steps = 2000usize;
    assert_eq!(lines.count(), steps.div_ceil(70) + 1);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["algorithm"], "alg1");
    assert_eq!(summary["converged"], false);
}

#[test]
fn export_adds_action_columns_and_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SHORT_RUN
            .replace("\"alg1\"", "\"alg2\"")
            .replace("{\"c\": 30.0}", "{\"gamma\": 1.0}"),
    );
    let out = dir.path().join("e");
    gne(&[
        "export",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    let traj: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("trajectory.json")).unwrap()).unwrap();
    let records = traj.as_array().unwrap();
    assert_eq!(records[0]["x"].as_array().unwrap().len(), 10);
    assert!(!records.is_empty());
    assert!(out.join("scenario.json").exists());
}

#[test]
fn oracle_fixture_is_a_kkt_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"scenario": "sensor_network", "algorithm": "oracle", "integrator": {"step": 0.001, "horizon": 1.0}}"#,
    );
    let out = dir.path().join("o");
    assert_eq!(
        gne(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]),
        EXIT_OK
    );
    let fixture: Fixture =
        serde_json::from_str(&fs::read_to_string(out.join("fixture.json")).unwrap()).unwrap();
    let bundle = build_sensor_network(0).unwrap();
    assert_eq!(fixture.scenario, bundle.describe());
    let r = kkt_residual(
        bundle.general_game(),
        &fixture.point.x,
        &fixture.point.lambda,
    )
    .unwrap();
    assert!(r <= 1e-7, "residual {r}");
}

#[test]
fn oversized_step_is_reported_as_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SHORT_RUN.replace("0.001", "10.0").replace("2.0", "1000.0"),
    );
    let out = dir.path().join("d");
    assert_eq!(
        gne(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]),
        EXIT_DIVERGENCE
    );
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SHORT_RUN.replace("\"gain\"", "\"gian\""));
    assert_eq!(
        gne(&[
            "run",
            "--config",
            &cfg,
            "--out",
            dir.path().to_str().unwrap()
        ]),
        EXIT_CONFIG
    );
    assert_eq!(
        gne(&["run", "--config", "/nonexistent/config.json"]),
        EXIT_CONFIG
    );
    assert_eq!(gne(&["frobnicate"]), EXIT_CONFIG);
}

#[test]
fn gains_prints_for_every_scenario() {
    for s in gne::scenarios::SCENARIOS {
        assert_eq!(gne(&["gains", s]), EXIT_OK);
        assert_eq!(
            gne(&["gains", s, "--format", "json", "--seed", "3"]),
            EXIT_OK
        );
    }
}

//! Integration tests for the command layer: artifact contents, determinism,
//! config round-trips and exit codes.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;

use perturb2d::cli::{cmd_expand, cmd_forward, cmd_gpt, cmd_study, CliError};
use perturb2d::config::StudyConfig;
use perturb2d::forward_oracle::AnnulusReference;

const DISK_CONFIG: &str = r#"
schema_version = 1

[domain]
radius = 1.0
nodes = 128

[[inclusions]]
shape = "disk"
radius = 0.2
center = [0.0, 0.0]
scale = 1.0
conductivity = 2.0

[boundary_data]
kind = "neumann"
modes = [[1, 1.0, 0.0]]

[gpt]
order = 1
"#;

fn parse(config: &str) -> StudyConfig {
    StudyConfig::from_toml(config).unwrap()
}

/// Read every artifact except the timestamped sidecar log.
fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "run.log")
        .map(|e| {
            (
                e.file_name().to_string_lossy().to_string(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn gpt_command_emits_disk_closed_form() {
    let config = parse(DISK_CONFIG);
    let dir = tempfile::tempdir().unwrap();
    cmd_gpt(&config, dir.path(), true).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("gpt_inclusion0.json")).unwrap())
            .unwrap();
    assert_eq!(json["schema_version"], 1);
    // unit-scale disk of radius 0.2 and k = 2: m11 = |B|/λ = π(0.2)²/1.5
    let expected = PI * 0.04 / 1.5;
    let entries = json["entries"].as_array().unwrap();
    let m11 = entries
        .iter()
        .find(|e| e["i"] == serde_json::json!([1, 0]) && e["j"] == serde_json::json!([1, 0]))
        .unwrap()["value"]
        .as_f64()
        .unwrap();
    assert!((m11 - expected).abs() < 1e-9);
    // the reference value for the unit disk at k = 2 is 2π/3 ≈ 2.0944
    assert!((m11 / 0.04 - 2.0 * PI / 3.0).abs() < 1e-8);
    // csv flat form carries the same entry
    let csv = fs::read_to_string(dir.path().join("gpt_inclusion0.csv")).unwrap();
    assert!(csv.starts_with("# gpt-table schema_version=1\n"));
    assert!(csv.lines().any(|l| l.starts_with("1,0,1,0,")));
}

#[test]
fn gpt_parity_for_centered_ellipse() {
    let config_text = DISK_CONFIG
        .replace(
            "shape = \"disk\"\nradius = 0.2",
            "shape = \"ellipse\"\nsemi_axes = [0.2, 0.1]",
        )
        .replace("order = 1", "order = 2");
    let config = parse(&config_text);
    let dir = tempfile::tempdir().unwrap();
    cmd_gpt(&config, dir.path(), true).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("gpt_inclusion0.json")).unwrap())
            .unwrap();
    for entry in json["entries"].as_array().unwrap() {
        let i: Vec<u64> = entry["i"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap())
            .collect();
        let j: Vec<u64> = entry["j"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap())
            .collect();
        if (i[0] + i[1] + j[0] + j[1]) % 2 == 1 {
            let v = entry["value"].as_f64().unwrap();
            assert!(v.abs() < 1e-12, "parity entry {i:?},{j:?} = {v:.3e}");
        }
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let config = parse(DISK_CONFIG);
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    cmd_gpt(&config, dir1.path(), true).unwrap();
    cmd_forward(&config, dir1.path(), true).unwrap();
    cmd_gpt(&config, dir2.path(), true).unwrap();
    cmd_forward(&config, dir2.path(), true).unwrap();
    assert_eq!(artifact_bytes(dir1.path()), artifact_bytes(dir2.path()));
}

#[test]
fn forward_matches_annulus_and_emits_density_blocks() {
    let config = parse(&DISK_CONFIG.replace("conductivity = 2.0", "conductivity = 5.0"));
    let dir = tempfile::tempdir().unwrap();
    cmd_forward(&config, dir.path(), true).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("forward.json")).unwrap())
            .unwrap();
    let reference = AnnulusReference::neumann(1.0, 0.2, 5.0, 1).unwrap();
    let x1 = json["x1"].as_array().unwrap();
    let x2 = json["x2"].as_array().unwrap();
    let values = json["values"].as_array().unwrap();
    for p in 0..values.len() {
        let theta = x2[p].as_f64().unwrap().atan2(x1[p].as_f64().unwrap());
        let expected = reference.boundary_trace(theta);
        assert!((values[p].as_f64().unwrap() - expected).abs() < 1e-9);
    }
    assert_eq!(json["densities"].as_array().unwrap().len(), 1);

    // two inclusions emit two density blocks
    let two = r#"
schema_version = 1

[domain]
radius = 1.0
nodes = 128

[[inclusions]]
shape = "disk"
radius = 1.0
center = [0.4, 0.0]
scale = 0.05
conductivity = 5.0

[[inclusions]]
shape = "disk"
radius = 1.0
center = [-0.4, 0.0]
scale = 0.05
conductivity = 0.2

[boundary_data]
kind = "neumann"
modes = [[1, 1.0, 0.0]]
"#;
    let config = parse(two);
    let dir = tempfile::tempdir().unwrap();
    cmd_forward(&config, dir.path(), true).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("forward.json")).unwrap())
            .unwrap();
    assert_eq!(json["densities"].as_array().unwrap().len(), 2);
}

const EXPAND_CONFIG: &str = r#"
schema_version = 1

[domain]
radius = 1.0
nodes = 128

[[inclusions]]
shape = "kite"
center = [0.3, 0.1]
scale = 0.05
conductivity = 5.0

[boundary_data]
kind = "neumann"
modes = [[1, 1.0, 0.0]]

[expansion]
orders = [2]
"#;

#[test]
fn expand_columns_sum_and_zero_gpt_dry_run() {
    let config = parse(EXPAND_CONFIG);
    let dir = tempfile::tempdir().unwrap();
    cmd_expand(&config, dir.path(), true).unwrap();
    let csv = fs::read_to_string(dir.path().join("expand_order2.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "# boundary-table schema_version=1");
    let header = lines.next().unwrap();
    assert!(header.starts_with("node,x1,x2,background,value"));
    for line in lines {
        let fields: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect();
        let (background, value) = (fields[2], fields[3]);
        let term_sum: f64 = fields[4..].iter().sum();
        assert!(
            (background + term_sum - value).abs() < 1e-14,
            "columns do not sum: {line}"
        );
    }

    // zeroed GPT returns the background exactly
    let config = parse(&EXPAND_CONFIG.replace("orders = [2]", "orders = [2]\nzero_gpt = true"));
    let dir = tempfile::tempdir().unwrap();
    cmd_expand(&config, dir.path(), true).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("expand_order2.json")).unwrap())
            .unwrap();
    let values = json["values"].as_array().unwrap();
    let background = json["background"].as_array().unwrap();
    for p in 0..values.len() {
        assert_eq!(values[p].as_f64().unwrap(), background[p].as_f64().unwrap());
    }
}

#[test]
fn study_passes_and_fails_by_slope() {
    let study = r#"
schema_version = 1

[domain]
radius = 1.0
nodes = 128

[[inclusions]]
shape = "kite"
center = [0.3, 0.1]
conductivity = 5.0

[boundary_data]
kind = "neumann"
modes = [[1, 1.0, 0.0]]

[expansion]
orders = [1]

[study]
eps_grid = [0.1, 0.07, 0.05]
slope_tolerance = 0.3
randomized_checks = true
"#;
    let config = parse(study);
    let dir = tempfile::tempdir().unwrap();
    cmd_study(&config, dir.path(), true).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("study.json")).unwrap()).unwrap();
    assert_eq!(json["pass"], true);
    assert_eq!(json["verdicts"][0]["order"], 1);
    assert!(json["verdicts"][0]["slope"].as_f64().unwrap() >= 2.7);
    assert_eq!(json["randomized_checks"]["pass"], true);
    let residuals_csv = fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
    assert_eq!(residuals_csv.lines().count(), 2 + 3); // comment + header + 3 eps rows

    // an unattainable slope target must fail with the study exit class
    let impossible = study.replace("slope_tolerance = 0.3", "slope_tolerance = -10.0");
    let config = parse(&impossible);
    let dir = tempfile::tempdir().unwrap();
    match cmd_study(&config, dir.path(), true) {
        Err(CliError::StudyFailed) => {}
        other => panic!("expected StudyFailed, got {other:?}"),
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("study.json")).unwrap()).unwrap();
    assert_eq!(json["pass"], false);
}

#[test]
fn config_echo_round_trips() {
    let config = parse(EXPAND_CONFIG);
    let dir = tempfile::tempdir().unwrap();
    cmd_expand(&config, dir.path(), true).unwrap();
    let echoed = fs::read_to_string(dir.path().join("config_echo.toml")).unwrap();
    let reparsed = StudyConfig::from_toml(&echoed).unwrap();
    assert_eq!(config, reparsed);
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_perturb2d");
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.toml");
    fs::write(&config_path, DISK_CONFIG).unwrap();

    let ok = Command::new(exe)
        .args(["gpt", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--quiet")
        .status()
        .unwrap();
    assert_eq!(ok.code(), Some(0));

    // config errors exit with 2
    fs::write(&config_path, "schema_version = 9").unwrap();
    let bad = Command::new(exe)
        .args(["gpt", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("out2"))
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(2));

    // a failing study exits with 4
    fs::write(
        &config_path,
        EXPAND_CONFIG.replace(
            "[expansion]\norders = [2]",
            "[expansion]\norders = [1]\n\n[study]\neps_grid = [0.1, 0.07, 0.05]\nslope_tolerance = -10.0",
        ),
    )
    .unwrap();
    let study = Command::new(exe)
        .args(["study", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("out3"))
        .arg("--quiet")
        .status()
        .unwrap();
    assert_eq!(study.code(), Some(4));
}

#[test]
fn cli_overrides_apply() {
    let exe = env!("CARGO_BIN_EXE_perturb2d");
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.toml");
    fs::write(&config_path, EXPAND_CONFIG).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(exe)
        .args(["expand", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out)
        .args(["--order", "1", "--eps", "0.04", "--quiet"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("expand_order1.json").exists());
    assert!(!out.join("expand_order2.json").exists());
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("expand_order1.json")).unwrap()).unwrap();
    assert_eq!(json["eps"].as_f64().unwrap(), 0.04);
}

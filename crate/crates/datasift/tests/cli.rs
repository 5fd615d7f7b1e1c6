//! End-to-end checks of the installed binary: artifact layout, override
//! flags, multi-seed fan-out, and exit codes.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_datasift"))
}

fn write_config(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("run.json");
    let config = serde_json::json!({
        "data": {"synthetic_benchmark": {"n": 2000}},
        "method": "datasift",
        "partition": {"fixed_g": {"g": 2}},
        "seed": 3,
        "out_dir": dir.join("out"),
    });
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn runs_a_config_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let output = bin().arg("--config").arg(&config).output().unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("datasift seed=3 parity"), "stdout: {stdout}");
    assert!(dir.path().join("out/trace.csv").exists());
    assert!(dir.path().join("out/summary.json").exists());
}

#[test]
fn overrides_replace_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out2 = dir.path().join("other");
    let output = bin()
        .arg("--config").arg(&config)
        .arg("--method").arg("random")
        .arg("--seed").arg("9")
        .arg("--budget-frac").arg("0.1")
        .arg("--out").arg(&out2)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out2.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["method"], "random");
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["budget"], 150); // 0.1 × 1500-point pool
}

#[test]
fn seed_fanout_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let output = bin()
        .arg("--config").arg(&config)
        .arg("--seeds").arg("1,2")
        .arg("--budget-frac").arg("0.05")
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert!(dir.path().join("out/seed-1/trace.csv").exists());
    assert!(dir.path().join("out/seed-2/trace.csv").exists());
}

#[test]
fn bad_method_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let output = bin()
        .arg("--config").arg(&config)
        .arg("--method").arg("clairvoyant")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("unknown method"));
}

#[test]
fn missing_data_file_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let schema = dir.path().join("schema.json");
    std::fs::write(
        &schema,
        serde_json::json!({
            "label": {"column": "y", "positive": ["1"]},
            "sensitive": {"column": "s", "privileged": ["1"]},
            "features": [{"column": "x"}]
        })
        .to_string(),
    )
    .unwrap();
    let config_path = dir.path().join("run.json");
    let config = serde_json::json!({
        "data": {"csv": {"path": dir.path().join("nope.csv"), "schema": schema}},
        "method": "random",
        "seed": 1,
        "out_dir": dir.path().join("out"),
    });
    std::fs::write(&config_path, config.to_string()).unwrap();
    let output = bin().arg("--config").arg(&config_path).output().unwrap();
    assert_eq!(output.status.code(), Some(3));
}

use std::path::{Path, PathBuf};
use std::process::Command;

fn out_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nlgibbs-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run(out: &Path, args: &[&str]) -> std::process::Output {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json");
    let output = Command::new(env!("CARGO_BIN_EXE_nlgibbs"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--seed", "3", "--threads", "2"])
        .args(args)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

#[test]
fn writes_spectrum_kernel_and_state_exports() {
    let out = out_dir("exports");
    run(&out, &["spectrum"]);
    assert!(std::fs::read_to_string(out.join("spectrum.csv")).unwrap().lines().count() > 1);

    run(&out, &["kernel"]);
    let kernel = json(out.join("kernel.json"));
    for entry in kernel["entries"].as_array().unwrap() {
        assert_eq!(entry.as_array().unwrap().len(), 6);
    }

    run(&out, &["gibbs", "--temperature", "2", "--export-state", "--dm", "1,2"]);
    assert!(json(out.join("gibbs.json")).is_object());
    assert!(json(out.join("state.json")).is_object());
    assert!(json(out.join("gibbs_dm2.json")).is_object());
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn partition_convergence_report() {
    let out = out_dir("converge");
    run(&out, &["converge", "partition"]);
    let report = json(out.join("partition.json"));
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert_eq!(report["config"]["classical"]["seed"], 3);
    let csv = std::fs::read_to_string(out.join("partition.csv")).unwrap();
    assert!(csv.starts_with("temperature,"));
    assert_eq!(csv.lines().count(), 3);
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn rejects_unknown_config_fields() {
    let dir = out_dir("bad");
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, r#"{"temperatures": [2, 4], "lambda": 1}"#).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_nlgibbs"))
        .arg("--config")
        .arg(&bad)
        .arg("spectrum")
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

use std::path::Path;
use std::process::Command;

fn vsg_sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vsg-sim"))
}

fn default_config() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

#[test]
fn check_config_accepts_default() {
    let out = vsg_sim()
        .args(["check-config", "--config"])
        .arg(default_config())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok"));
}

#[test]
fn check_config_reports_all_violations() {
    let text = std::fs::read_to_string(default_config())
        .unwrap()
        .replace("v_dc = 400.0", "v_dc = 0.0")
        .replace("m_max = 0.9", "m_max = 0.95");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let out = vsg_sim()
        .args(["check-config", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("v_dc"), "{stderr}");
    assert!(stderr.contains("m_max"), "{stderr}");
}

#[test]
fn missing_config_is_io_error() {
    let out = vsg_sim()
        .args(["check-config", "--config", "/nonexistent/cfg.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn design_prints_duty() {
    let out = vsg_sim()
        .args(["design", "--boost", "1.2", "--k", "1", "--p", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let d: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((d - 1.0 / 12.0).abs() < 1e-12);

    let out = vsg_sim()
        .args(["design", "--boost", "0.5", "--k", "1", "--p", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_outputs() {
    let text = std::fs::read_to_string(default_config())
        .unwrap()
        .replace("t_end = 1.2", "t_end = 0.35")
        .replace("time = 0.8", "time = 0.3")
        .replace("time = 0.4", "time = 0.2");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.toml");
    std::fs::write(&path, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = vsg_sim()
        .args(["simulate", "--config"])
        .arg(&path)
        .arg("--out-dir")
        .arg(&out_dir)
        .args(["--decimation", "10"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("timeseries.csv")).unwrap();
    // 0.35 s at 20 us steps, every 10th step, plus t = 0
    assert_eq!(csv.lines().count(), 1 + 1751);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["run"]["decimation"], 10);
}

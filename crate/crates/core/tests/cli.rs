use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vqs"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vqs-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_flag_is_a_config_error() {
    let out = bin().args(["kernels", "dump", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = temp_dir("badkey");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "experiment = vem-cancel\nno_such_key = 1\n").unwrap();
    let out = bin().args(["run"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = bin().args(["run", "/definitely/not/a/file.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn kernels_dump_is_byte_deterministic() {
    let run = || {
        let out = bin()
            .args(["kernels", "dump", "--tmin", "0.1", "--tmax", "100", "--points", "50"])
            .output()
            .unwrap();
        assert!(out.status.success());
        out.stdout
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("tau,"), "header: {header}");
    assert_eq!(lines.count(), 50);
}

#[test]
fn run_experiment_writes_manifest_and_summary() {
    let dir = temp_dir("run");
    let cfg = dir.join("vem.cfg");
    std::fs::write(&cfg, "experiment = vem-cancel\n").unwrap();
    let out = bin()
        .args(["run"])
        .arg(&cfg)
        .env("VQS_OUTPUT_DIR", &dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let exp_dir = dir.join("vem-cancel");
    let manifest = std::fs::read_to_string(exp_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"constants\""));
    let summary = std::fs::read_to_string(exp_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"pass\""));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn classical_eom_reports_runaway_on_stderr() {
    let out = bin()
        .args(["eom", "classical", "--a0", "1.0", "--t-end-t0", "5.0"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().next().unwrap().starts_with("t,"));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("\"runaway\": true") || stderr.contains("\"runaway\":true"), "{stderr}");
}

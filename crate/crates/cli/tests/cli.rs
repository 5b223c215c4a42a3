use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_vitalcode");

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/programs/sample.dsl")
}

fn vitalcode(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("VITALCODE_MAC_KEY")
        .output()
        .unwrap()
}

fn signed(dir: &TempDir, key: &str) -> String {
    let prom = dir.path().join("prom.bin");
    let out = vitalcode(&[
        "sign",
        sample().to_str().unwrap(),
        "--key",
        key,
        "--seed",
        "3",
        "-o",
        prom.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    prom.to_str().unwrap().to_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn sign_is_deterministic() {
    let (d1, d2) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let a = std::fs::read(signed(&d1, "251")).unwrap();
    let b = std::fs::read(signed(&d2, "251")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn run_prints_outputs_and_accepts() {
    let dir = TempDir::new().unwrap();
    let prom = signed(&dir, "65537");
    let inputs = dir.path().join("in.json");
    std::fs::write(&inputs, r#"[{"a": 2, "b": 3}, {"a": -7, "b": 1}]"#).unwrap();
    let out = vitalcode(&["run", &prom, "--inputs", inputs.to_str().unwrap(), "--cycles", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<serde_json::Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0]["verdict"], "Accept");
    assert_eq!(lines[0]["outputs"]["sum"], 20);
    assert_eq!(lines[1]["outputs"]["copy"], -8);
}

#[test]
fn run_rejects_corrupt_prom_as_config_error() {
    let dir = TempDir::new().unwrap();
    let prom = signed(&dir, "251");
    let mut bytes = std::fs::read(&prom).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&prom, bytes).unwrap();
    let inputs = dir.path().join("in.json");
    std::fs::write(&inputs, r#"{"a": 1, "b": 1}"#).unwrap();
    assert_eq!(
        vitalcode(&["run", &prom, "--inputs", inputs.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn inject_single_bit_faults_are_all_detected() {
    let dir = TempDir::new().unwrap();
    let prom = signed(&dir, "2147483647");
    let out = vitalcode(&["inject", &prom, "--model", "F1", "--trials", "2000", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["undetected_wrong_output"], 0);
    assert_eq!(report["trials"], 2000);
}

#[test]
fn inject_reports_unknown_target() {
    let dir = TempDir::new().unwrap();
    let prom = signed(&dir, "251");
    let out = vitalcode(&["inject", &prom, "--model", "F6", "--target", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn channel_writes_json_and_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"schemes": ["crc32", "hmac-16"], "threats": [{"kind": "forge_payload"}], "trials": 50, "seed": 4,
            "mac_key_ref": "hex:00112233445566778899aabbccddeeff"}"#,
    )
    .unwrap();
    let (json, csv) = (dir.path().join("r.json"), dir.path().join("r.csv"));
    let out = vitalcode(&[
        "channel",
        "--config",
        cfg.to_str().unwrap(),
        "-o",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&json).unwrap();
    assert!(!text.contains("00112233"), "key leaked into report");
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 2);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);
}

#[test]
fn channel_env_key_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"schemes": ["hmac"], "threats": [{"kind": "replay"}], "trials": 10, "seed": 1}"#,
    )
    .unwrap();
    let missing = vitalcode(&["channel", "--config", cfg.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    let out = Command::new(BIN)
        .args(["channel", "--config", cfg.to_str().unwrap()])
        .env("VITALCODE_MAC_KEY", "abcdef")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn channel_rejects_unknown_fields() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"schemes": ["crc8"], "threats": [], "trials": 1, "seed": 1, "colour": "red"}"#,
    )
    .unwrap();
    assert_eq!(
        vitalcode(&["channel", "--config", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn redundancy_matches_model() {
    let out = vitalcode(&[
        "redundancy",
        "--p",
        "0.01",
        "--q",
        "0.001",
        "--policy",
        "2oo3",
        "--trials",
        "50000",
        "--seed",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["trials"], 50000);
}

#[test]
fn redundancy_bad_probability_is_config_error() {
    assert_eq!(vitalcode(&["redundancy", "--p", "1.5"]).status.code(), Some(2));
}

#[test]
fn vectors_all_pass() {
    let out = vitalcode(&["vectors"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.lines().count() >= 8);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}

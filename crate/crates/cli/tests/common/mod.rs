#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn tna(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tna"))
        .args(args)
        .output()
        .expect("run tna binary")
}

/// Runs one command against `config`, writing under `out`.
pub fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--config", config.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    tna(&args)
}

pub fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

pub fn bundle(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("bundle.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Bundle bytes with the creation timestamp blanked.
pub fn bundle_without_timestamp(dir: &Path) -> Vec<u8> {
    let mut v = bundle(dir);
    v["provenance"]["created_at"] = serde_json::Value::Null;
    serde_json::to_vec_pretty(&v).unwrap()
}

/// Writes `config.toml` pointing at `events.csv` in `dir`.
pub fn write_project(dir: &Path, events: &str, config_tail: &str) -> PathBuf {
    std::fs::write(dir.join("events.csv"), events).unwrap();
    let cfg = dir.join("config.toml");
    std::fs::write(
        &cfg,
        format!("seed = 7\n[input]\nevents = \"events.csv\"\n[sessionization]\nmode = \"whole_unit\"\n{config_tail}"),
    )
    .unwrap();
    cfg
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hermite_lab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hermite-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("HERMITE_LAB_OUT")
        .output()
        .unwrap()
}

#[test]
fn rank_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rank.toml");
    fs::write(&cfg, "schema_version = 1\nsubcommand = \"rank\"\n\n[rank]\npolynomial = [\"-1\", 0, \"1/2\"]\n").unwrap();
    let out = dir.path().join("out");
    let o = hermite_lab(&out, &["rank", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("rank: 2"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("rank.json")).unwrap()).unwrap();
    assert_eq!(v["expansion"]["2"], "1/2");
    assert_eq!(v["mean_term"], "-1/2");
    assert!(out.join("config.resolved.toml").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // Wrong schema version is a validation error.
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "schema_version = 7\n[rank]\npolynomial = [0, 1]\n").unwrap();
    let o = hermite_lab(&out, &["rank", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    // So is an unknown subcommand.
    assert_eq!(hermite_lab(&out, &["integrate"]).status.code(), Some(2));
    assert!(!out.exists());
    let o = Command::new(env!("CARGO_BIN_EXE_hermite-lab")).arg("--help").output().unwrap();
    assert!(o.status.success());
}

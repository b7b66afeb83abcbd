use std::process::Command;

fn dcqe(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dcqe")).args(args).output().unwrap()
}

#[test]
fn unknown_scenario_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcqe(&["scenario", "double-slit", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("double-slit"));
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    // idler arm shorter than the signal arm breaks the delayed-choice geometry
    let mut c = dcqe_core::ApparatusConfig::default();
    c.la = 0.5;
    std::fs::write(&cfg, c.to_json_pretty()).unwrap();
    let out =
        dcqe(&["simulate", "--events", "10", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn simulate_writes_events_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcqe(&["simulate", "--events", "100", "--seed", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let events = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert_eq!(events.lines().next(), Some("pair_id,channel,t,x"));
    assert_eq!(events.lines().count(), 201);
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 3"));
}

#[test]
fn coincide_reads_events_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(dcqe(&["simulate", "--events", "1000", "--out", d]).status.success());
    let input = dir.path().join("events.csv");
    let out = dcqe(&["coincide", "--input", input.to_str().unwrap(), "--out", d]);
    assert!(out.status.success());
    let records = std::fs::read_to_string(dir.path().join("coincidences.csv")).unwrap();
    assert_eq!(records.lines().count(), 1001);
}

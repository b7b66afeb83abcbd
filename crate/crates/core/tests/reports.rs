use std::fs;
use std::path::Path;

use dcqe_core::analysis::report::config_hash;
use dcqe_core::{
    match_coincidences, nominal_offsets, run_scenario, run_simulation, Apparatus, ApparatusConfig, EventStreams,
    Scenario, ScenarioOptions, SimOptions,
};

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn scenario_reports_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, workers) in [(&a, Some(1)), (&b, Some(4))] {
        let opts = ScenarioOptions {
            events: 100_000,
            seed: 17,
            workers,
            out_dir: dir.path().to_path_buf(),
            ..ScenarioOptions::default()
        };
        run_scenario(Scenario::KimShih, &ApparatusConfig::default(), &opts).unwrap();
    }
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    assert_eq!(fa.len(), 4);
    assert_eq!(fa, fb);

    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 17);
    assert_eq!(m["config_sha256"], config_hash(&ApparatusConfig::default()));
    assert_eq!(m["outputs"].as_array().unwrap().len(), 4);
}

#[test]
fn events_csv_round_trip_preserves_matching() {
    let app = Apparatus::validate(ApparatusConfig::default()).unwrap();
    let s = run_simulation(&app, 20_000, 2, &SimOptions { keep_branch_tags: true, ..SimOptions::default() }).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf, true).unwrap();
    let back = EventStreams::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.d0, s.d0);
    assert_eq!(back.idler, s.idler);
    assert_eq!(back.branch_tag(123), s.branch_tag(123));
    let off = nominal_offsets(&app);
    let w = app.config().coincidence_window;
    assert_eq!(match_coincidences(&back, w, &off).unwrap(), match_coincidences(&s, w, &off).unwrap());
}

#[test]
fn malformed_events_are_rejected() {
    let bad = "pair_id,channel,t,x\n0,D0,1e-9,1e-3\n0,D7,2e-9,\n";
    assert!(EventStreams::read_csv(bad.as_bytes()).is_err());
    let idler_with_x = "pair_id,channel,t,x\n0,D1,2e-9,1e-3\n";
    assert!(EventStreams::read_csv(idler_with_x.as_bytes()).is_err());
}

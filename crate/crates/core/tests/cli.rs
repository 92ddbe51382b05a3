mod common;

use std::fs;

use common::*;

#[test]
fn ingest_lists_retained_stations() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &STATIONS, 2001, 2003, 1);
    let cfg = write_config(dir.path(), 2001, 2003, "");
    run_ok(&cfg, "ingest", &[]);
    let manifest = fs::read_to_string(dir.path().join("out/manifest.csv")).unwrap();
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(lines[0], "station_id,path,lat,lon,first_year,last_year,missing_frac,status");
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.ends_with(",retained")));

    // A threshold below S002's 1-in-17 gap rate drops it.
    run_ok(&cfg, "ingest", &["--max-missing", "0.05"]);
    let manifest = fs::read_to_string(dir.path().join("out/manifest.csv")).unwrap();
    assert!(manifest.lines().any(|l| l.starts_with("S002,") && l.ends_with(",too_many_missing")));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &STATIONS[..1], 2001, 2002, 1);

    let cfg = write_config(dir.path(), 2001, 2002, "colour = red\n");
    let out = stqr(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let missing = dir.path().join("nowhere.cfg");
    let out = stqr(&["ingest", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.cfg"));

    let cfg = write_config(dir.path(), 2001, 2002, "");
    fs::write(&cfg, fs::read_to_string(&cfg).unwrap().replace("data_dir = data", "data_dir = no_such_dir")).unwrap();
    let out = stqr(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_dir"));

    assert_eq!(stqr(&["ingest"]).status.code(), Some(2));
    let cfg = write_config(dir.path(), 2001, 2002, "");
    let out = stqr(&["fit", "--config", cfg.to_str().unwrap(), "--season", "spring"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn no_station_surviving_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &STATIONS[1..2], 2001, 2002, 1);
    let cfg = write_config(dir.path(), 2001, 2002, "max_missing = 0.01\n");
    let out = stqr(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no station"));
}

#[test]
fn explore_writes_full_acf_tables() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &STATIONS[..2], 2001, 2003, 2);
    let cfg = write_config(dir.path(), 2001, 2003, "");
    run_ok(&cfg, "ingest", &[]);
    run_ok(&cfg, "explore", &[]);
    for id in ["S001", "S002"] {
        let acf = fs::read_to_string(dir.path().join(format!("out/explore/{id}_acf.csv"))).unwrap();
        assert_eq!(acf.lines().count(), 1 + 41);
        let days = fs::read_to_string(dir.path().join(format!("out/explore/{id}_day_stats.csv"))).unwrap();
        assert_eq!(days.lines().count(), 1 + 365);
        assert!(dir.path().join(format!("out/explore/{id}_mean_model.json")).exists());
    }
}

#[test]
fn seasonal_fit_uses_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &STATIONS[..2], 2001, 2003, 3);
    let cfg = write_config(dir.path(), 2001, 2003, "copula = false\n");
    run_ok(&cfg, "ingest", &[]);
    run_ok(&cfg, "fit-variance", &[]);
    run_ok(&cfg, "fit", &["--season", "djf", "--tau", "0.25,0.75"]);
    run_ok(&cfg, "report", &["--season", "djf"]);
    let run = fs::read_to_string(dir.path().join("out/fit_djf/run.json")).unwrap();
    assert!(run.contains("\"Djf\"") && run.contains("\"k\": 1"));
    let summary = fs::read_to_string(dir.path().join("out/fit_djf/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
    assert!(dir.path().join("out/report_djf/trends.geojson").exists());
    assert!(!dir.path().join("out/fit").exists());
}

//! Synthetic station files and configs shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct Station {
    pub id: &'static str,
    pub lat: f64,
    pub lon: f64,
    /// Warming over the whole record, °C.
    pub warming: f64,
    /// Every `gap`-th day is left blank; 0 for none.
    pub gap: usize,
}

pub const STATIONS: [Station; 3] = [
    Station { id: "S001", lat: -31.9, lon: 115.9, warming: 0.8, gap: 0 },
    Station { id: "S002", lat: -33.9, lon: 151.2, warming: 0.2, gap: 17 },
    Station { id: "S003", lat: -27.5, lon: 153.0, warming: 0.5, gap: 0 },
];

/// Writes one CSV per station on the real calendar (leap days included)
/// plus `stations.csv`, under `root/data`.
pub fn write_dataset(root: &Path, stations: &[Station], start: i32, end: i32, seed: u64) {
    let data = root.join("data");
    fs::create_dir_all(&data).unwrap();
    let mut meta = String::from("station_id,lat,lon,elevation,state\n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = NaiveDate::from_ymd_opt(start, 1, 1).unwrap();
    let last = NaiveDate::from_ymd_opt(end, 12, 31).unwrap();
    let span = (last - first).num_days() as f64;
    for st in stations {
        writeln!(meta, "{},{},{},,", st.id, st.lat, st.lon).unwrap();
        let mut text = String::from("station_id,date,value\n");
        for (i, date) in first.iter_days().take_while(|d| *d <= last).enumerate() {
            let t = i as f64 / span;
            let phase = 2.0 * std::f64::consts::PI * date.ordinal0() as f64 / 365.0;
            let sd = 2.0 + 0.8 * phase.cos();
            let z: f64 = rng.sample(StandardNormal);
            let value = 24.0 + 5.0 * phase.cos() + st.warming * t + sd * z;
            if st.gap > 0 && i % st.gap == 0 {
                writeln!(text, "{},{},", st.id, date).unwrap();
            } else {
                writeln!(text, "{},{},{:.2}", st.id, date, value).unwrap();
            }
        }
        fs::write(data.join(format!("{}.csv", st.id)), text).unwrap();
    }
    fs::write(root.join("stations.csv"), meta).unwrap();
}

/// Config for the dataset written by [`write_dataset`], with a short chain.
pub fn write_config(root: &Path, start: i32, end: i32, extra: &str) -> PathBuf {
    let text = format!(
        "# synthetic test run\n\
         data_dir = data\n\
         metadata = stations.csv\n\
         output_dir = out\n\
         variable = Dmx\n\
         start_year = {start}\n\
         end_year = {end}\n\
         k = 2\n\
         variance_k = 2\n\
         max_lag = 40\n\
         n_iter = 240\n\
         n_burn = 120\n\
         thin = 4\n\
         seed = 7\n\
         {extra}"
    );
    let path = root.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

pub fn stqr(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_stqr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

pub fn run_ok(config: &Path, cmd: &str, extra: &[&str]) {
    let mut args = vec![cmd, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = stqr(&args);
    assert!(
        out.status.success(),
        "{cmd} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Every file under `dir`, relative path and contents, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

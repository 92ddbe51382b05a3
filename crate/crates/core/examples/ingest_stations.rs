//! Load daily station files onto the 365-day calendar and apply the
//! missing-data selection rule.
use std::fmt::Write as _;

use stqr::data::{filter_stations, load_metadata_csv, load_station_csv, SelectionRules, StudyWindow, Variable};

fn main() -> stqr::Result<()> {
    let dir = std::env::temp_dir().join("stqr_ingest_example");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("stations.csv"), "station_id,lat,lon\nA,-31.9,115.9\nB,-33.9,151.2\n").unwrap();
    for (id, every) in [("A", 0), ("B", 3)] {
        let mut text = String::from("station_id,date,value\n");
        let start = chrono::NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        for (i, date) in start.iter_days().take(366 + 365).enumerate() {
            // Station B loses every third day.
            let value = if every > 0 && i % every == 0 { String::new() } else { format!("{:.1}", 20.0 + (i % 7) as f64) };
            writeln!(text, "{id},{date},{value}").unwrap();
        }
        std::fs::write(dir.join(format!("{id}.csv")), text).unwrap();
    }

    let meta = load_metadata_csv(&dir.join("stations.csv"))?;
    let mut series = Vec::new();
    for m in meta {
        let mut s = load_station_csv(&dir.join(format!("{}.csv", m.station_id)), Variable::Dmx)?;
        s.meta = m;
        println!("{}: {} cells, {} observed (Feb 29 dropped)", s.meta.station_id, s.n_cells(), s.n_observed());
        series.push(s);
    }
    let outcome = filter_stations(series, &SelectionRules::new(StudyWindow::new(2000, 2001)))?;
    for s in &outcome.retained {
        println!("retained {}", s.meta.station_id);
    }
    for (id, why) in &outcome.excluded {
        println!("excluded {id}: {why:?}");
    }
    Ok(())
}

//! Parse a run configuration and convert trends to °C per decade, as the
//! `stqr` binary does.
use std::path::Path;

use stqr::report::{from_per_decade, per_decade, RunConfig};

fn main() -> stqr::Result<()> {
    let text = "\
# two decades of maximum temperature, summer only
data_dir = data
metadata = stations.csv
output_dir = out
variable = Dmx
start_year = 2000
end_year = 2019
season = djf
tau = 0.1, 0.5, 0.9
";
    let cfg = RunConfig::parse(text, Path::new("/srv/run"))?;
    println!("output under {}, season {:?}, Fourier order in the fit {}", cfg.output_dir.display(), cfg.season, cfg.model_spec()?.k);
    let years = cfg.window.years();
    for g1 in [0.0, 0.44, 1.2] {
        let d = per_decade(g1, years);
        println!("g₁ = {g1:.2} over {years} years -> {d:.3} °C/decade (back: {:.2})", from_per_decade(d, years));
    }
    match RunConfig::parse("colour = red\n", Path::new(".")) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}

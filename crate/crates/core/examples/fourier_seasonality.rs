//! Truncated Fourier series in day of year: evaluation, design rows and
//! the extrema of a seasonal cycle.
use stqr::harmonics::{fs_design_row, fs_eval, fs_extrema, FourierCoeffs};

fn main() -> stqr::Result<()> {
    // A summer peak near 1 January with a weaker second harmonic.
    let c = FourierCoeffs::new(vec![0.4, 0.1], vec![5.0, -0.6])?;
    for d in [1, 91, 182, 274] {
        println!("day {d:>3}: {:+.3}", fs_eval(d, &c)?);
    }
    println!("design row at day 100: {:?}", fs_design_row(100, 2)?);
    let (lo, hi) = fs_extrema(&c.concat());
    println!("range over the year: [{lo:.3}, {hi:.3}]");
    Ok(())
}

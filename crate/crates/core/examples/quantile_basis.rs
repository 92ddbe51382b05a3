//! The piecewise-Gaussian quantile function: quantiles, the closed-form
//! density, and sampling by inversion.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stqr::quantile::{sample_one, KnotGrid, PiecewiseQuantile};

fn main() -> stqr::Result<()> {
    // Wide lower tail, narrow upper tail.
    let pq = PiecewiseQuantile::new(&KnotGrid::default_four(), 25.0, &[3.0, 2.0, 1.5, 1.0])?;
    for tau in [0.05, 0.25, 0.5, 0.75, 0.95] {
        let q = pq.quantile(tau);
        println!("q({tau:.2}) = {q:6.3}   f(q) = {:.4}   F(q) = {:.4}", pq.density(q), pq.cdf(q));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 100_000;
    let below = (0..n).filter(|_| sample_one(&pq, rng.random()) <= pq.quantile(0.25)).count();
    println!("fraction of draws below q(0.25): {:.4}", below as f64 / n as f64);
    Ok(())
}

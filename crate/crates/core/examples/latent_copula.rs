//! Latent AR(1) copula path: temporal memory with standard normal
//! marginals, mapped to quantile levels.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stqr::mcmc::simulate_latent;

fn main() -> stqr::Result<()> {
    let sites = [[-30.0, 140.0], [-31.0, 142.0]];
    let path = simulate_latent(0.7, 5.0, &sites, 20_000, &mut ChaCha8Rng::seed_from_u64(2))?;
    for (s, v) in path.v.iter().enumerate() {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
        let lag1 = v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (var * v.len() as f64);
        println!("site {s}: mean {m:+.3}, variance {var:.3}, lag-1 autocorrelation {lag1:.3}");
    }
    let a = &path.v[0];
    let b = &path.v[1];
    let cross = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64;
    println!("same-day correlation between sites: {cross:.3}");
    println!("levels of the first five days: {:?}", (0..5).map(|t| path.level(0, t)).collect::<Vec<_>>());
    Ok(())
}

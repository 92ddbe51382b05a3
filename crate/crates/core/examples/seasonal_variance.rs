//! Inter-annual day-of-year statistics and the seasonal log-variance model
//! that produces σ_d.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stqr::harmonics::FourierCoeffs;
use stqr::variance::{fit_variance_model, predict_sigma, simulate_stats, VarianceFitOptions, VarianceParams};

fn main() -> stqr::Result<()> {
    // A skewed seasonal mean; a pure low-order harmonic would be collinear
    // with the Fourier terms of the variance model.
    let mu: Vec<f64> = (1..=365)
        .map(|d| 22.0 + 6.0 * (2.0 * std::f64::consts::PI * d as f64 / 365.0).cos().powi(3))
        .collect();
    let truth = VarianceParams {
        beta0: -1.0,
        beta1: 0.1,
        beta2: 0.0,
        fourier: FourierCoeffs::new(vec![0.2, 0.05], vec![0.1, -0.1])?,
        rho1: 0.2,
    };
    let stats = simulate_stats(&truth, &mu, 30, 0.1, &mut ChaCha8Rng::seed_from_u64(1))?;
    let opts = VarianceFitOptions { k: 2, ..Default::default() };
    let fit = fit_variance_model(&stats, &opts)?;
    // β₀ and β₂ trade off because μ̂ sits far from zero.
    println!("fitted β = ({:.3}, {:.3}, {:.4}), ρ₁ = {:.3}; truth (-1, 0.1, 0), 0.2", fit.params.beta0, fit.params.beta1, fit.params.beta2, fit.params.rho1);
    let sigma = predict_sigma(&fit.params, &stats);
    println!("σ_d on days 1, 91, 182, 274: {:.2} {:.2} {:.2} {:.2}", sigma[0], sigma[90], sigma[181], sigma[273]);
    Ok(())
}

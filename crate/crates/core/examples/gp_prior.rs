//! Exponential-covariance Gaussian-process prior over station locations.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stqr::gp::{exp_cov_matrix, gp_logpdf, gp_sample, GPHyperParams, Location};

fn main() -> stqr::Result<()> {
    let locs: Vec<Location> = vec![[-31.9, 115.9], [-33.9, 151.2], [-27.5, 153.0], [-12.5, 130.8]];
    let hyper = GPHyperParams::new(0.3, 0.04, 20.0)?;
    println!("covariance:\n{:.4}", exp_cov_matrix(&locs, &hyper, 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let field = gp_sample(&hyper, &locs, &mut rng)?;
        let values: Vec<String> = field.values.iter().map(|v| format!("{v:+.3}")).collect();
        println!("draw [{}]  log density {:.3}", values.join(", "), gp_logpdf(&field, &locs)?);
    }
    Ok(())
}

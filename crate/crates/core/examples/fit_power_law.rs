//! Log-log least squares fit of y = a·x^β and regime classification.

use geoattract::scaling::{classify, fit_power_law_with};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pops: [f64; 6] = [2.0e5, 8.0e5, 3.1e6, 1.2e7, 4.5e7, 1.3e8];
    for beta in [0.6, 1.0, 1.4] {
        let pairs: Vec<(f64, f64)> = pops
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, 1e-6 * x.powf(beta) * (1.0 + 0.05 * (i as f64 - 2.5).sin())))
            .collect();
        let fit = fit_power_law_with(&pairs, 0.05)?;
        println!(
            "planted {beta}: beta {:.4} ln(a) {:.4} R2 {:.5} n {} {}",
            fit.beta, fit.log_intercept, fit.r_squared, fit.n_points, fit.regime
        );
    }
    for (beta, tol) in [(0.97, 0.05), (0.97, 0.0), (-0.3, 0.05)] {
        println!("classify({beta}, {tol}) = {}", classify(beta, tol));
    }
    match fit_power_law_with(&[(1.0, 1.0), (1.0, 2.0)], 0.05) {
        Ok(_) => unreachable!(),
        Err(e) => println!("degenerate input: {e}"),
    }
    Ok(())
}

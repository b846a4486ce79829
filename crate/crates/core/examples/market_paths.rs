//! Correlated stock and salary paths: sample moments against their targets.

use pension_risk::market::{simulate_paths, MarketParams};
use pension_risk::stats::{mean, variance};

fn main() -> pension_risk::Result<()> {
    let params = MarketParams::default();
    let paths = simulate_paths(&params, 60.0, 45, 20_000, 1)?;
    let log_s: Vec<f64> = paths.iter().map(|p| p.stock_gross[0].ln()).collect();
    let log_y: Vec<f64> = paths
        .iter()
        .map(|p| (p.income[1] / p.income[0]).ln())
        .collect();
    let (ms, my) = (mean(&log_s), mean(&log_y));
    let cov = log_s
        .iter()
        .zip(&log_y)
        .map(|(s, y)| (s - ms) * (y - my))
        .sum::<f64>()
        / (log_s.len() - 1) as f64;
    let corr = cov / (variance(&log_s) * variance(&log_y)).sqrt();
    println!(
        "stock log return sd {:.4} (sigma_s {})",
        variance(&log_s).sqrt(),
        params.sigma_s
    );
    println!(
        "salary log growth sd {:.4} (sigma_y {})",
        variance(&log_y).sqrt(),
        params.sigma_y
    );
    println!("correlation {corr:.4} (rho {})", params.rho_sy);
    let mut last: Vec<f64> = paths.iter().map(|p| p.income[45]).collect();
    last.sort_by(f64::total_cmp);
    println!("salary at 67: median {:.1} k$", last[last.len() / 2]);
    Ok(())
}

//! Bond, stock and labour-income dynamics and fair term-life pricing.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Annual log-dynamics. The bond earns `r` continuously compounded; stock and
/// income are geometric Brownian motions with correlated shocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketParams {
    pub r: f64,
    pub mu_s: f64,
    pub sigma_s: f64,
    pub mu_y: f64,
    pub sigma_y: f64,
    pub rho_sy: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            r: 0.02,
            mu_s: 0.15,
            sigma_s: 0.2,
            mu_y: 0.03,
            sigma_y: 0.05,
            rho_sy: 0.3755,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.r,
            self.mu_s,
            self.sigma_s,
            self.mu_y,
            self.sigma_y,
            self.rho_sy,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("market parameters must be finite".into()));
        }
        // zero volatilities are allowed as deterministic limits
        if self.sigma_s < 0.0 || self.sigma_y < 0.0 {
            return Err(Error::Domain("volatilities must be >= 0".into()));
        }
        if !(-1.0..=1.0).contains(&self.rho_sy) {
            return Err(Error::Domain(format!(
                "rho_sy = {} outside [-1, 1]",
                self.rho_sy
            )));
        }
        Ok(())
    }

    pub fn bond_gross(&self) -> f64 {
        self.r.exp()
    }

    pub fn stock_gross(&self, shocks: MarketShocks) -> f64 {
        (self.mu_s + self.sigma_s * shocks.z1).exp()
    }

    pub fn income_growth(&self, shocks: MarketShocks) -> f64 {
        (self.mu_y + self.sigma_y * shocks.z2).exp()
    }

    /// Draws one year of correlated shocks.
    pub fn shocks<R: Rng + ?Sized>(&self, rng: &mut R) -> MarketShocks {
        let z1: f64 = rng.sample(StandardNormal);
        let z3: f64 = rng.sample(StandardNormal);
        MarketShocks::correlate(z1, z3, self.rho_sy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketShocks {
    pub z1: f64,
    pub z2: f64,
}

impl MarketShocks {
    /// `z2 = rho z1 + sqrt(1 - rho^2) z3` for independent standard normals.
    pub fn correlate(z1: f64, z3: f64, rho: f64) -> Self {
        Self {
            z1,
            z2: rho * z1 + (1.0 - rho * rho).max(0.0).sqrt() * z3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    pub bond_gross: Vec<f64>,
    pub stock_gross: Vec<f64>,
    /// `horizon + 1` salary levels starting at `y0`.
    pub income: Vec<f64>,
}

pub fn simulate_paths(
    params: &MarketParams,
    y0: f64,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<MarketPath>> {
    params.validate()?;
    if horizon < 1 || n_paths < 1 {
        return Err(Error::Input(
            "horizon and n_paths must be at least 1".into(),
        ));
    }
    if !(y0 > 0.0) {
        return Err(Error::Domain(format!("y0 = {y0} must be > 0")));
    }
    Ok((0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[tag::MARKET, i as u64]);
            let mut path = MarketPath {
                bond_gross: vec![params.bond_gross(); horizon],
                stock_gross: Vec::with_capacity(horizon),
                income: Vec::with_capacity(horizon + 1),
            };
            let mut y = y0;
            path.income.push(y);
            for _ in 0..horizon {
                let s = params.shocks(&mut rng);
                path.stock_gross.push(params.stock_gross(s));
                y *= params.income_growth(s);
                path.income.push(y);
            }
            path
        })
        .collect())
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!(
            "death probability {q} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Actuarially fair premium `e^{-r} q B` for a one-year death benefit `B`.
pub fn fair_premium(benefit: f64, q: f64, r: f64) -> Result<f64> {
    check_q(q)?;
    if !(benefit >= 0.0) {
        return Err(Error::Domain(format!("benefit {benefit} must be >= 0")));
    }
    Ok((-r).exp() * q * benefit)
}

/// Death benefit bought by premium `I`, the inverse of [`fair_premium`].
pub fn benefit_from_premium(premium: f64, q: f64, r: f64) -> Result<f64> {
    check_q(q)?;
    Ok(premium * r.exp() / q)
}

/// `path_id,t,stock_gross,income` rows; `stock_gross` is empty at the last `t`.
pub fn write_paths_csv<W: std::io::Write>(paths: &[MarketPath], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path_id", "t", "stock_gross", "income_kusd"])?;
    for (i, p) in paths.iter().enumerate() {
        for (t, y) in p.income.iter().enumerate() {
            let s = p
                .stock_gross
                .get(t)
                .map(|v| v.to_string())
                .unwrap_or_default();
            w.write_record([i.to_string(), t.to_string(), s, y.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, variance};

    #[test]
    fn deterministic_limit() {
        let p = MarketParams {
            sigma_s: 0.0,
            sigma_y: 0.0,
            ..Default::default()
        };
        let paths = simulate_paths(&p, 60.0, 3, 2, 1).unwrap();
        for path in &paths {
            for s in &path.stock_gross {
                assert_eq!(*s, 0.15f64.exp());
            }
            for w in path.income.windows(2) {
                assert!((w[1] / w[0] - 0.03f64.exp()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn seed_reproducible() {
        let p = MarketParams::default();
        assert_eq!(
            simulate_paths(&p, 60.0, 5, 4, 3).unwrap(),
            simulate_paths(&p, 60.0, 5, 4, 3).unwrap()
        );
    }

    #[test]
    fn shock_correlation() {
        let p = MarketParams::default();
        let n = 100_000;
        let paths = simulate_paths(&p, 60.0, 1, n, 8).unwrap();
        let a: Vec<f64> = paths.iter().map(|x| x.stock_gross[0].ln()).collect();
        let b: Vec<f64> = paths
            .iter()
            .map(|x| (x.income[1] / x.income[0]).ln())
            .collect();
        let (ma, mb) = (mean(&a), mean(&b));
        let cov = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (n - 1) as f64;
        let corr = cov / (variance(&a) * variance(&b)).sqrt();
        // standard error of a sample correlation
        let se = (1.0 - p.rho_sy * p.rho_sy) / (n as f64).sqrt();
        assert!((corr - p.rho_sy).abs() < 3.0 * se, "{corr}");
        let se_mean = p.sigma_s / (n as f64).sqrt();
        assert!((ma - p.mu_s).abs() < 3.0 * se_mean);
    }

    #[test]
    fn premium_examples() {
        assert_eq!(fair_premium(0.0, 0.3, 0.02).unwrap(), 0.0);
        assert!((fair_premium(100.0, 0.01, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((fair_premium(1000.0, 0.001, 0.02).unwrap() - 0.980_199).abs() < 1e-6);
        assert!(fair_premium(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn invalid_params() {
        let p = MarketParams {
            rho_sy: 1.5,
            ..Default::default()
        };
        assert!(simulate_paths(&p, 60.0, 1, 1, 0).is_err());
    }
}

//! Synthetic period life tables with a known Lee-Carter structure, used when
//! observed data is not at hand and as a recovery benchmark.

use rand::Rng;
use rand_distr::StandardNormal;

use super::table::MortalityTable;
use crate::error::Result;
use crate::rng::{stream, tag};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub ages: (u32, u32),
    pub years: (i32, i32),
    /// Mean annual change of the period index.
    pub drift: f64,
    pub kappa_sd: f64,
    /// Level shifts of the period index from a given year onwards.
    pub shocks: Vec<(i32, f64)>,
    /// Standard deviation of i.i.d. noise on log rates.
    pub noise_sd: f64,
}

impl Default for SyntheticSpec {
    /// Roughly the shape of U.S. mortality since the 1930s, with a pandemic
    /// spike in 2020-2021 and a partial recovery in 2022.
    fn default() -> Self {
        Self {
            ages: (0, 100),
            years: (1933, 2022),
            drift: -1.3,
            kappa_sd: 0.6,
            shocks: vec![(2020, 15.0), (2021, 5.0), (2022, -9.0)],
            noise_sd: 0.01,
        }
    }
}

/// The generating parameters, normalised so that `sum(b) = 1` and
/// `sum(kappa) = 0`, together with the resulting table.
#[derive(Debug, Clone)]
pub struct SyntheticMortality {
    pub table: MortalityTable,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub kappa: Vec<f64>,
}

/// Log death rate at the midpoint of the series: infant mortality, an
/// accident hump in the early twenties and Gompertz growth after that.
fn base_log_rate(age: f64) -> f64 {
    let infant = 0.006 * (-1.2 * age).exp();
    let hump = 0.0006 * (-((age - 22.0) / 6.0).powi(2)).exp();
    let gompertz = 0.00003 * (0.093 * age).exp();
    (0.0005 + infant + hump + gompertz).ln()
}

pub fn synthetic_table(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticMortality> {
    let ages: Vec<u32> = (spec.ages.0..=spec.ages.1).collect();
    let years: Vec<i32> = (spec.years.0..=spec.years.1).collect();
    let mut rng = stream(seed, &[tag::SYNTHETIC]);

    // younger ages improved faster
    let raw_b: Vec<f64> = ages.iter().map(|&x| 1.6 - f64::from(x) / 90.0).collect();
    let sb: f64 = raw_b.iter().sum();
    let b: Vec<f64> = raw_b.iter().map(|v| v / sb).collect();

    let mut kappa = Vec::with_capacity(years.len());
    let mut k = 0.0;
    for &y in &years {
        if y > spec.years.0 {
            let z: f64 = rng.sample(StandardNormal);
            k += spec.drift + spec.kappa_sd * z;
        }
        let shift: f64 = spec
            .shocks
            .iter()
            .filter(|(sy, _)| y >= *sy)
            .map(|(_, s)| s)
            .sum();
        kappa.push(k + shift);
    }
    let mk = kappa.iter().sum::<f64>() / kappa.len() as f64;
    for v in &mut kappa {
        *v -= mk;
    }
    let a: Vec<f64> = ages.iter().map(|&x| base_log_rate(f64::from(x))).collect();

    let m = (0..ages.len())
        .map(|i| {
            (0..years.len())
                .map(|j| {
                    let eps: f64 = if spec.noise_sd > 0.0 {
                        spec.noise_sd * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    (a[i] + b[i] * kappa[j] + eps).exp()
                })
                .collect()
        })
        .collect();
    Ok(SyntheticMortality {
        table: MortalityTable::new(ages, years, m)?,
        a,
        b,
        kappa,
    })
}

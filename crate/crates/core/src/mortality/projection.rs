use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::jumps::JumpDiffusionParams;
use super::lee_carter::LeeCarterFit;
use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::stats::quantile_sorted;

/// Simulates `n_paths` trajectories of the period index over `horizon` years.
/// Row `i` is path `i`; column 0 is the starting level. Shock arrivals follow
/// the renewal process in continuous time and a jump landing in `(t, t+1]`
/// is added to the increment into year `t + 1`.
pub fn project_kappa(
    params: &JumpDiffusionParams,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if horizon < 1 || n_paths < 1 {
        return Err(Error::Input(
            "horizon and n_paths must be at least 1".into(),
        ));
    }
    if !(params.sigma >= 0.0) || !params.drift_h.is_finite() || !params.kappa0.is_finite() {
        return Err(Error::Domain("invalid diffusion parameters".into()));
    }
    let jumps = match params.interarrival {
        Some(family) if params.delta > 0.0 && params.theta_jump > 0.0 => Some((
            family,
            Exp::new(1.0 / params.theta_jump)
                .map_err(|e| Error::Domain(format!("jump size law: {e}")))?,
        )),
        _ => None,
    };
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[tag::KAPPA, i as u64]);
            let mut path = Vec::with_capacity(horizon + 1);
            let mut k = params.kappa0;
            path.push(k);
            let mut next_arrival = jumps.map(|(f, _)| f.sample(&mut rng));
            for t in 0..horizon {
                let z: f64 = rng.sample(StandardNormal);
                let mut inc = params.drift_h + params.sigma * z;
                if let (Some((family, size)), Some(arrival)) = (jumps, next_arrival.as_mut()) {
                    let end = (t + 1) as f64;
                    while *arrival <= end {
                        inc += rng.sample(size);
                        // zero-length gaps would never advance the clock
                        *arrival += family.sample(&mut rng).max(1e-9);
                    }
                }
                k += inc;
                path.push(k);
            }
            path
        })
        .collect();
    Ok(paths)
}

/// Pointwise mean over paths.
pub fn mean_path(paths: &[Vec<f64>]) -> Vec<f64> {
    let n = paths.len() as f64;
    let len = paths.first().map_or(0, Vec::len);
    (0..len)
        .map(|t| paths.iter().map(|p| p[t]).sum::<f64>() / n)
        .collect()
}

/// Pointwise empirical quantile bands `(lower, upper)` over paths.
pub fn quantile_bands(paths: &[Vec<f64>], lower: f64, upper: f64) -> Vec<(f64, f64)> {
    let len = paths.first().map_or(0, Vec::len);
    (0..len)
        .map(|t| {
            let mut col: Vec<f64> = paths.iter().map(|p| p[t]).collect();
            col.sort_by(f64::total_cmp);
            (quantile_sorted(&col, lower), quantile_sorted(&col, upper))
        })
        .collect()
}

/// `q = m / (1 + m/2)`, assuming deaths spread uniformly over the year.
/// Rates of 2 or more would give `q >= 1` and are clamped just below 1.
pub fn central_to_q(m: f64) -> Result<f64> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Domain(format!(
            "central death rate {m} must be positive and finite"
        )));
    }
    if m >= 2.0 {
        log::warn!("central death rate {m} >= 2; death probability clamped");
        return Ok(1.0 - 1e-12);
    }
    Ok(m / (1.0 + 0.5 * m))
}

/// Death and survival probability for one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRow {
    pub q: f64,
    pub p: f64,
}

impl SurvivalRow {
    /// Accepts the closed interval so that toy problems can model certain
    /// death or survival.
    pub fn new(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!(
                "death probability {q} outside [0, 1]"
            )));
        }
        Ok(Self { q, p: 1.0 - q })
    }
}

/// One-year death probabilities along a cohort diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRates {
    pub start_age: u32,
    pub start_year: i32,
    q: Vec<f64>,
    p: Vec<f64>,
}

impl CohortRates {
    pub fn new(start_age: u32, start_year: i32, q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Input("empty cohort".into()));
        }
        if let Some(bad) = q.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Domain(format!(
                "death probability {bad} outside (0, 1)"
            )));
        }
        let p = q.iter().map(|v| 1.0 - v).collect();
        Ok(Self {
            start_age,
            start_year,
            q,
            p,
        })
    }

    /// Cohort with the same death probability every year.
    pub fn flat(start_age: u32, start_year: i32, q: f64, horizon: usize) -> Result<Self> {
        Self::new(start_age, start_year, vec![q; horizon])
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn row(&self, t: usize) -> SurvivalRow {
        SurvivalRow {
            q: self.q[t],
            p: self.p[t],
        }
    }
}

/// Death probabilities for a cohort aged `start_age` at the first point of
/// `kappa_path`, reading `kappa_path[t]` at age `start_age + t`.
pub fn cohort_death_probs(
    fit: &LeeCarterFit,
    kappa_path: &[f64],
    start_age: u32,
    start_year: i32,
    horizon: usize,
) -> Result<CohortRates> {
    if kappa_path.len() < horizon {
        return Err(Error::Input(format!(
            "kappa path has {} points, horizon needs {horizon}",
            kappa_path.len()
        )));
    }
    let last_age = start_age as usize + horizon.saturating_sub(1);
    let first = fit.age_index(start_age);
    let last = u32::try_from(last_age).ok().and_then(|a| fit.age_index(a));
    let (Some(i0), Some(_)) = (first, last) else {
        return Err(Error::Range(format!(
            "ages {start_age}..={last_age} not inside fitted range {:?}..={:?}",
            fit.ages.first(),
            fit.ages.last()
        )));
    };
    let q = (0..horizon)
        .map(|t| central_to_q(fit.log_rate(i0 + t, kappa_path[t]).exp()))
        .collect::<Result<Vec<_>>>()?;
    CohortRates::new(start_age, start_year, q)
}

/// Cohort rates with the period index frozen at its last fitted value.
pub fn static_cohort(fit: &LeeCarterFit, start_age: u32, horizon: usize) -> Result<CohortRates> {
    let last = *fit
        .kappa
        .last()
        .ok_or_else(|| Error::Input("fit has no years".into()))?;
    let year = *fit.years.last().unwrap_or(&0);
    cohort_death_probs(fit, &vec![last; horizon], start_age, year, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mortality::jumps::InterArrival;

    fn params(
        sigma: f64,
        delta: f64,
        theta: f64,
        family: Option<InterArrival>,
    ) -> JumpDiffusionParams {
        JumpDiffusionParams {
            kappa0: 3.0,
            drift_h: -0.5,
            sigma,
            theta_jump: theta,
            delta,
            interarrival: family,
            bic: None,
            candidate_bics: vec![],
            shock_years: vec![],
            jump_sizes: vec![],
            degenerate: family.is_none(),
        }
    }

    #[test]
    fn deterministic_drift() {
        let p = params(0.0, 0.0, 1e-6, None);
        let paths = project_kappa(&p, 5, 3, 1).unwrap();
        for path in &paths {
            for (t, k) in path.iter().enumerate() {
                assert_eq!(*k, 3.0 + (0..t).fold(0.0, |acc, _| acc - 0.5));
            }
        }
    }

    #[test]
    fn same_seed_same_paths() {
        let p = params(
            0.6,
            0.2,
            5.0,
            Some(InterArrival::Gamma {
                shape: 1.0,
                scale: 5.0,
            }),
        );
        assert_eq!(
            project_kappa(&p, 10, 20, 4).unwrap(),
            project_kappa(&p, 10, 20, 4).unwrap()
        );
    }

    #[test]
    fn poisson_arrivals_add_delta_theta() {
        let (delta, theta) = (0.4, 2.0);
        let p = params(
            0.5,
            delta,
            theta,
            Some(InterArrival::Gamma {
                shape: 1.0,
                scale: 1.0 / delta,
            }),
        );
        let n = 100_000;
        let paths = project_kappa(&p, 1, n, 9).unwrap();
        let inc: Vec<f64> = paths.iter().map(|r| r[1] - r[0]).collect();
        let mean = inc.iter().sum::<f64>() / n as f64;
        let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - (-0.5 + delta * theta)).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn q_from_m() {
        assert!((central_to_q(0.01).unwrap() - 0.009_950_248_756).abs() < 1e-8);
        assert_eq!(central_to_q(2.0).unwrap(), 1.0 - 1e-12);
        assert!(central_to_q(1e-300).unwrap() < 1e-299);
        assert!(matches!(central_to_q(0.0), Err(Error::Domain(_))));
    }

    fn flat_fit(b: f64) -> LeeCarterFit {
        LeeCarterFit {
            ages: (20..30).collect(),
            years: vec![2020, 2021],
            a: vec![0.01f64.ln(); 10],
            b: vec![b; 10],
            kappa: vec![-1.0, 1.0],
            residuals: vec![],
            degenerate: false,
        }
    }

    #[test]
    fn zero_sensitivity_ignores_kappa() {
        let fit = flat_fit(0.0);
        let c = cohort_death_probs(&fit, &[5.0, -3.0, 100.0], 22, 2022, 3).unwrap();
        for q in c.q() {
            assert!((q - 0.009_950_248_756).abs() < 1e-12);
        }
        for t in 0..c.len() {
            assert_eq!(c.q()[t] + c.p()[t], 1.0);
        }
    }

    #[test]
    fn cohort_out_of_range() {
        let fit = flat_fit(0.1);
        assert!(matches!(
            cohort_death_probs(&fit, &[0.0; 20], 25, 2022, 10),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn static_cohort_uses_last_kappa() {
        let fit = flat_fit(0.1);
        let c = static_cohort(&fit, 20, 4).unwrap();
        let expected = central_to_q((0.01f64.ln() + 0.1).exp()).unwrap();
        assert!(c.q().iter().all(|q| (q - expected).abs() < 1e-15));
    }
}

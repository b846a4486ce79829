//! Shock detection on the period index and calibration of its jump-diffusion
//! dynamics: Gaussian increments with drift plus Exponential jumps whose
//! arrivals follow a renewal process.

use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Weibull};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Standardised-statistic cutoff for shock detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierConfig {
    threshold_c: f64,
}

impl OutlierConfig {
    pub fn new(threshold_c: f64) -> Result<Self> {
        if !(threshold_c > 0.0) {
            return Err(Error::Domain(format!(
                "threshold {threshold_c} must be > 0"
            )));
        }
        Ok(Self { threshold_c })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold_c
    }
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self { threshold_c: 2.0 }
    }
}

/// MAD scaled to the standard deviation of a normal sample.
const MAD_TO_SD: f64 = 1.482_602_218_505_602;

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn increments(kappa: &[f64]) -> Vec<f64> {
    kappa.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Years whose first difference of kappa has a robust z-score above the
/// cutoff. The z-score centres by the median difference and scales by the
/// normal-consistent MAD. The year of a difference is the later year.
pub fn detect_outliers(years: &[i32], kappa: &[f64], config: OutlierConfig) -> Result<Vec<i32>> {
    if years.len() != kappa.len() {
        return Err(Error::Input("years and kappa differ in length".into()));
    }
    if kappa.len() < 10 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: kappa.len(),
        });
    }
    let d = increments(kappa);
    let med = median(&d);
    let dev: Vec<f64> = d.iter().map(|x| (x - med).abs()).collect();
    let mad = median(&dev) * MAD_TO_SD;
    // an exactly linear series has zero spread; keep it from flagging rounding noise
    let floor = 1e-9 * med.abs().max(1.0);
    let scale = mad.max(floor);
    let mut out: Vec<i32> = d
        .iter()
        .enumerate()
        .filter(|(_, x)| ((*x - med) / scale).abs() > config.threshold())
        .map(|(i, _)| years[i + 1])
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Inter-arrival law of mortality shocks, with maximum-likelihood parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum InterArrival {
    Lognormal { mu: f64, sigma: f64 },
    Weibull { shape: f64, scale: f64 },
    Gamma { shape: f64, scale: f64 },
}

// Dispersion bounds for samples without spread (e.g. consecutive shock
// years); each corresponds to a coefficient of variation near 1e-3.
const LOGNORMAL_SIGMA_MIN: f64 = 1e-3;
const WEIBULL_SHAPE_MAX: f64 = 1283.0;
const GAMMA_SHAPE_MAX: f64 = 1e6;

impl InterArrival {
    pub fn name(&self) -> &'static str {
        match self {
            InterArrival::Lognormal { .. } => "lognormal",
            InterArrival::Weibull { .. } => "weibull",
            InterArrival::Gamma { .. } => "gamma",
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            InterArrival::Lognormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            InterArrival::Weibull { shape, scale } => scale * ln_gamma(1.0 + 1.0 / shape).exp(),
            InterArrival::Gamma { shape, scale } => shape * scale,
        }
    }

    pub fn log_likelihood(&self, xs: &[f64]) -> f64 {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        match *self {
            InterArrival::Lognormal { mu, sigma } => xs
                .iter()
                .map(|&x| {
                    let z = (x.ln() - mu) / sigma;
                    -x.ln() - sigma.ln() - 0.5 * ln2pi - 0.5 * z * z
                })
                .sum(),
            InterArrival::Weibull { shape, scale } => xs
                .iter()
                .map(|&x| {
                    shape.ln() - scale.ln() + (shape - 1.0) * (x / scale).ln()
                        - (x / scale).powf(shape)
                })
                .sum(),
            InterArrival::Gamma { shape, scale } => xs
                .iter()
                .map(|&x| (shape - 1.0) * x.ln() - x / scale - shape * scale.ln() - ln_gamma(shape))
                .sum(),
        }
    }

    /// `2 ln n - 2 lnL`; every family has two parameters.
    pub fn bic(&self, xs: &[f64]) -> f64 {
        2.0 * (xs.len() as f64).ln() - 2.0 * self.log_likelihood(xs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InterArrival::Lognormal { mu, sigma } => LogNormal::new(mu, sigma)
                .map(|d| d.sample(rng))
                .unwrap_or(mu.exp()),
            InterArrival::Weibull { shape, scale } => Weibull::new(scale, shape)
                .map(|d| d.sample(rng))
                .unwrap_or(scale),
            InterArrival::Gamma { shape, scale } => Gamma::new(shape, scale)
                .map(|d| d.sample(rng))
                .unwrap_or(shape * scale),
        }
    }

    pub fn fit_lognormal(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mu = xs.iter().map(|x| x.ln()).sum::<f64>() / n;
        let var = xs.iter().map(|x| (x.ln() - mu).powi(2)).sum::<f64>() / n;
        InterArrival::Lognormal {
            mu,
            sigma: var.sqrt().max(LOGNORMAL_SIGMA_MIN),
        }
    }

    pub fn fit_weibull(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean_ln = xs.iter().map(|x| x.ln()).sum::<f64>() / n;
        // profile score in the shape; decreasing in k, so bisect on a log grid
        let score = |k: f64| {
            let (mut s0, mut s1) = (0.0, 0.0);
            // scale by the largest observation to keep x^k finite
            let xmax = xs.iter().cloned().fold(f64::MIN, f64::max);
            for &x in xs {
                let w = (x / xmax).powf(k);
                s0 += w;
                s1 += w * x.ln();
            }
            s1 / s0 - 1.0 / k - mean_ln
        };
        let (mut lo, mut hi) = (1e-3_f64, WEIBULL_SHAPE_MAX);
        let shape = if score(hi) < 0.0 {
            hi
        } else {
            for _ in 0..200 {
                let mid = (lo * hi).sqrt();
                if score(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            (lo * hi).sqrt()
        };
        let xmax = xs.iter().cloned().fold(f64::MIN, f64::max);
        let mean_pow = xs.iter().map(|x| (x / xmax).powf(shape)).sum::<f64>() / n;
        InterArrival::Weibull {
            shape,
            scale: xmax * mean_pow.powf(1.0 / shape),
        }
    }

    pub fn fit_gamma(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let mean_ln = xs.iter().map(|x| x.ln()).sum::<f64>() / n;
        let c = mean.ln() - mean_ln;
        let shape = if c <= 1e-14 {
            GAMMA_SHAPE_MAX
        } else {
            let mut a = (3.0 - c + ((c - 3.0).powi(2) + 24.0 * c).sqrt()) / (12.0 * c);
            for _ in 0..100 {
                // Newton on ln a - digamma(a) = c
                let f = a.ln() - digamma(a) - c;
                let trigamma_approx = {
                    let h = 1e-5 * a.max(1e-3);
                    (digamma(a + h) - digamma(a - h)) / (2.0 * h)
                };
                let fp = 1.0 / a - trigamma_approx;
                let next = a - f / fp;
                let next = if next <= 0.0 { a / 2.0 } else { next };
                if (next - a).abs() < 1e-12 * a {
                    a = next;
                    break;
                }
                a = next;
            }
            a.min(GAMMA_SHAPE_MAX)
        };
        InterArrival::Gamma {
            shape,
            scale: mean / shape,
        }
    }
}

/// Calibrated `kappa` dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpDiffusionParams {
    pub kappa0: f64,
    /// Drift of the continuous part, `mu - sigma^2 / 2 - delta * theta`.
    pub drift_h: f64,
    pub sigma: f64,
    /// Mean Exponential jump size.
    pub theta_jump: f64,
    /// Shock arrival rate.
    pub delta: f64,
    pub interarrival: Option<InterArrival>,
    pub bic: Option<f64>,
    /// BIC of every candidate family, in the order lognormal, weibull, gamma.
    pub candidate_bics: Vec<(String, f64)>,
    pub shock_years: Vec<i32>,
    pub jump_sizes: Vec<f64>,
    pub degenerate: bool,
}

impl JumpDiffusionParams {
    /// Same dynamics started from another level (e.g. the last observed year).
    pub fn with_origin(&self, kappa0: f64) -> Self {
        Self {
            kappa0,
            ..self.clone()
        }
    }
}

/// Floor for the mean jump size when there is nothing to estimate it from.
pub const THETA_FLOOR: f64 = 1e-6;

/// Fits drift and volatility on the increments of non-shock years, jump sizes
/// at shock years (increment minus the median increment, floored at zero),
/// the arrival rate as the reciprocal mean gap between shock years, and the
/// inter-arrival family with the lowest BIC.
pub fn fit_jump_diffusion(
    years: &[i32],
    kappa: &[f64],
    outlier_years: &[i32],
) -> Result<JumpDiffusionParams> {
    if years.len() != kappa.len() {
        return Err(Error::Input("years and kappa differ in length".into()));
    }
    if kappa.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: kappa.len(),
        });
    }
    if let Some(y) = outlier_years.iter().find(|y| !years.contains(y)) {
        return Err(Error::Range(format!(
            "outlier year {y} not in the kappa series"
        )));
    }
    let mut shocks: Vec<i32> = outlier_years.to_vec();
    shocks.sort_unstable();
    shocks.dedup();

    let d = increments(kappa);
    let drift_robust = median(&d);
    let is_shock = |i: usize| shocks.contains(&years[i + 1]);

    let calm: Vec<f64> = (0..d.len())
        .filter(|&i| !is_shock(i))
        .map(|i| d[i])
        .collect();
    if calm.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let drift_h = calm.iter().sum::<f64>() / calm.len() as f64;
    let sigma =
        (calm.iter().map(|x| (x - drift_h).powi(2)).sum::<f64>() / calm.len() as f64).sqrt();

    let raw: Vec<f64> = (0..d.len())
        .filter(|&i| is_shock(i))
        .map(|i| d[i] - drift_robust)
        .collect();
    if !raw.is_empty() && raw.iter().sum::<f64>() < 0.0 {
        return Err(Error::Sign(format!(
            "mean estimated jump {} is negative; shocks must raise mortality",
            raw.iter().sum::<f64>() / raw.len() as f64
        )));
    }
    let jump_sizes: Vec<f64> = raw.iter().map(|r| r.max(0.0)).collect();

    let mut params = JumpDiffusionParams {
        kappa0: kappa[0],
        drift_h,
        sigma,
        theta_jump: THETA_FLOOR,
        delta: 0.0,
        interarrival: None,
        bic: None,
        candidate_bics: Vec::new(),
        shock_years: shocks.clone(),
        jump_sizes: jump_sizes.clone(),
        degenerate: true,
    };
    if shocks.len() < 2 {
        return Ok(params);
    }
    let theta = jump_sizes.iter().sum::<f64>() / jump_sizes.len() as f64;
    params.theta_jump = theta.max(THETA_FLOOR);

    let gaps: Vec<f64> = shocks.windows(2).map(|w| f64::from(w[1] - w[0])).collect();
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    params.delta = 1.0 / mean_gap;

    let candidates = [
        InterArrival::fit_lognormal(&gaps),
        InterArrival::fit_weibull(&gaps),
        InterArrival::fit_gamma(&gaps),
    ];
    let mut best: Option<(InterArrival, f64)> = None;
    for c in candidates {
        let bic = c.bic(&gaps);
        params.candidate_bics.push((c.name().to_string(), bic));
        if bic.is_finite() && best.is_none_or(|(_, b)| bic < b) {
            best = Some((c, bic));
        }
    }
    let (family, bic) =
        best.ok_or_else(|| Error::Numerical("no inter-arrival family has a finite BIC".into()))?;
    params.interarrival = Some(family);
    params.bic = Some(bic);
    params.degenerate = false;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::StandardNormal;

    fn noisy_line(n: usize, slope: f64, noise: f64, seed: u64) -> (Vec<i32>, Vec<f64>) {
        let mut rng = stream(seed, &[0]);
        let years: Vec<i32> = (0..n as i32).map(|i| 1950 + i).collect();
        let mut k = 10.0;
        let mut kappa = Vec::with_capacity(n);
        for _ in 0..n {
            kappa.push(k);
            let z: f64 = rng.sample(StandardNormal);
            k += slope + noise * z;
        }
        (years, kappa)
    }

    #[test]
    fn spike_is_flagged() {
        let s = 0.3;
        let (years, mut kappa) = noisy_line(60, -1.0, s, 3);
        let spike_idx = 30;
        for k in kappa.iter_mut().skip(spike_idx) {
            *k += 10.0 * s;
        }
        let out = detect_outliers(&years, &kappa, OutlierConfig::default()).unwrap();
        assert!(out.contains(&years[spike_idx]), "{out:?}");
    }

    #[test]
    fn exact_line_has_no_shocks() {
        let years: Vec<i32> = (1950..1980).collect();
        let kappa: Vec<f64> = (0..30).map(|i| 5.0 - 0.7 * f64::from(i)).collect();
        assert!(detect_outliers(&years, &kappa, OutlierConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn too_short_series() {
        let years: Vec<i32> = (1950..1959).collect();
        assert!(matches!(
            detect_outliers(&years, &[0.0; 9], OutlierConfig::default()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn arrival_rate_is_reciprocal_mean_gap() {
        let (years, mut kappa) = noisy_line(40, -0.5, 0.2, 11);
        for y in [1940 + 10, 1945 + 10, 1955 + 10] {
            let i = (y - 1950) as usize;
            for k in kappa.iter_mut().skip(i) {
                *k += 4.0;
            }
        }
        let p = fit_jump_diffusion(&years, &kappa, &[1950, 1955, 1965]).unwrap();
        assert!((p.delta - 1.0 / 7.5).abs() < 1e-12);
        assert!(p.theta_jump > 0.0);
        assert!(p.interarrival.is_some());
    }

    #[test]
    fn no_outliers_is_pure_diffusion() {
        let (years, kappa) = noisy_line(30, -0.5, 0.2, 5);
        let p = fit_jump_diffusion(&years, &kappa, &[]).unwrap();
        assert_eq!(p.delta, 0.0);
        assert!(p.degenerate);
        assert!(p.interarrival.is_none());
        assert_eq!(p.kappa0, kappa[0]);
    }

    #[test]
    fn downward_shocks_are_rejected() {
        let (years, mut kappa) = noisy_line(30, -0.5, 0.1, 5);
        for k in kappa.iter_mut().skip(10) {
            *k -= 5.0;
        }
        for k in kappa.iter_mut().skip(20) {
            *k -= 5.0;
        }
        assert!(matches!(
            fit_jump_diffusion(&years, &kappa, &[1960, 1970]),
            Err(Error::Sign(_))
        ));
    }

    #[test]
    fn mle_fits_recover_parameters() {
        let mut rng = stream(1, &[2]);
        let truth = InterArrival::Gamma {
            shape: 2.5,
            scale: 1.5,
        };
        let xs: Vec<f64> = (0..20_000).map(|_| truth.sample(&mut rng)).collect();
        match InterArrival::fit_gamma(&xs) {
            InterArrival::Gamma { shape, scale } => {
                assert!((shape - 2.5).abs() < 0.1, "{shape}");
                assert!((scale - 1.5).abs() < 0.1, "{scale}");
            }
            _ => unreachable!(),
        }
        let truth = InterArrival::Weibull {
            shape: 1.7,
            scale: 3.0,
        };
        let xs: Vec<f64> = (0..20_000).map(|_| truth.sample(&mut rng)).collect();
        match InterArrival::fit_weibull(&xs) {
            InterArrival::Weibull { shape, scale } => {
                assert!((shape - 1.7).abs() < 0.05, "{shape}");
                assert!((scale - 3.0).abs() < 0.05, "{scale}");
            }
            _ => unreachable!(),
        }
        let truth = InterArrival::Lognormal {
            mu: 0.3,
            sigma: 0.6,
        };
        let xs: Vec<f64> = (0..20_000).map(|_| truth.sample(&mut rng)).collect();
        let fit = InterArrival::fit_lognormal(&xs);
        // the generating family wins on its own data
        assert!(fit.bic(&xs) < InterArrival::fit_weibull(&xs).bic(&xs));
        assert!(fit.bic(&xs) < InterArrival::fit_gamma(&xs).bic(&xs));
    }

    #[test]
    fn constant_gaps_stay_finite() {
        let gaps = [1.0, 1.0];
        for f in [
            InterArrival::fit_lognormal(&gaps),
            InterArrival::fit_weibull(&gaps),
            InterArrival::fit_gamma(&gaps),
        ] {
            assert!(f.bic(&gaps).is_finite(), "{f:?}");
        }
    }
}

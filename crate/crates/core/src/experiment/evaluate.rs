use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actor_critic::{simulate_trajectory, Environment};
use crate::error::{Error, Result};
use crate::nn::ActionPolicy;
use crate::rng::{stream, tag};
use crate::stats::{mean, quantile_sorted};

/// One age row of a simulated strategy; money in thousands of dollars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub t: usize,
    pub age: u32,
    pub mean_wealth_kusd: f64,
    pub mean_income_kusd: f64,
    pub mu_alpha_kusd: f64,
    pub mu_premium_kusd: f64,
    pub sigma_alpha_kusd: f64,
    pub sigma_premium_kusd: f64,
    pub rho: f64,
    /// Mean of stock holding over budget.
    pub stock_fraction: f64,
    /// Mean of premium over budget.
    pub insurance_fraction: f64,
}

/// Per-age averages of a policy rolled forward over many paths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StrategySummary {
    pub rows: Vec<StrategyRow>,
}

impl StrategySummary {
    pub fn row_at_age(&self, age: u32) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.age == age)
    }
}

/// Empirical band of one variable at one age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub t: usize,
    pub age: u32,
    pub variable: String,
    pub mean: f64,
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower_kusd: f64,
    pub upper_kusd: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileMarker {
    pub level: f64,
    pub wealth_kusd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalWealth {
    pub path_id: usize,
    pub wealth_kusd: f64,
}

/// Result of rolling a policy forward.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySimulation {
    pub summary: StrategySummary,
    pub bands: Vec<BandRow>,
    /// `W_T` per path, in path order.
    pub terminal_wealth: Vec<f64>,
}

/// One executed step, with the policy law at the state.
#[derive(Debug, Clone, Copy)]
struct Step {
    wealth: f64,
    income: f64,
    alpha: f64,
    premium: f64,
    moments: [f64; 5],
}

type BandVariable = (&'static str, fn(&Step) -> f64);

fn band(t: usize, age: u32, variable: &str, values: &mut [f64]) -> BandRow {
    let m = mean(values);
    values.sort_by(f64::total_cmp);
    BandRow {
        t,
        age,
        variable: variable.into(),
        mean: m,
        p05: quantile_sorted(values, 0.05),
        p50: quantile_sorted(values, 0.5),
        p95: quantile_sorted(values, 0.95),
    }
}

/// Rolls `policy` forward along `n_paths` independent market scenarios for a
/// surviving member. Executed actions are the projected draws.
pub fn simulate_policy(
    policy: &dyn ActionPolicy,
    env: &Environment,
    n_paths: usize,
    seed: u64,
) -> Result<PolicySimulation> {
    if n_paths == 0 {
        return Err(Error::Input(
            "at least one evaluation path is required".into(),
        ));
    }
    let horizon = env.plan.horizon;
    let gamma = env.plan.gamma;
    let paths: Vec<(Vec<Step>, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let traj = simulate_trajectory(policy, env, &mut stream(seed, &[tag::EVAL, i as u64]))?;
            let mut steps = Vec::with_capacity(horizon);
            for (s, tr) in &traj[..horizon] {
                let tr = tr.expect("decision states carry a transition");
                let moments = match policy.moments(s)? {
                    Some(p) => [
                        p.mu_alpha,
                        p.mu_premium,
                        p.sigma_alpha,
                        p.sigma_premium,
                        p.rho,
                    ],
                    None => [tr.action.alpha, tr.action.premium, 0.0, 0.0, 0.0],
                };
                steps.push(Step {
                    wealth: s.wealth,
                    income: s.income,
                    alpha: tr.action.alpha,
                    premium: tr.action.premium,
                    moments,
                });
                let b = s.budget(gamma);
                if b > 0.0 && (tr.action.alpha + tr.action.premium) / b > 1.0 + 1e-9 {
                    return Err(Error::Contract(format!(
                        "executed action over budget at {s:?}"
                    )));
                }
            }
            Ok((steps, traj[horizon].0.wealth))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = n_paths as f64;
    let mut rows = Vec::with_capacity(horizon);
    let mut bands = Vec::with_capacity(4 * horizon);
    for t in 0..horizon {
        let age = env.plan.entry_age + t as u32;
        let col: Vec<Step> = paths.iter().map(|(s, _)| s[t]).collect();
        let avg = |f: &dyn Fn(&Step) -> f64| col.iter().map(f).sum::<f64>() / n;
        let frac = |x: f64, s: &Step| {
            let b = s.wealth + gamma * s.income;
            if b > 0.0 {
                (x / b).clamp(0.0, 1.0)
            } else {
                0.0
            }
        };
        rows.push(StrategyRow {
            t,
            age,
            mean_wealth_kusd: avg(&|s| s.wealth),
            mean_income_kusd: avg(&|s| s.income),
            mu_alpha_kusd: avg(&|s| s.moments[0]),
            mu_premium_kusd: avg(&|s| s.moments[1]),
            sigma_alpha_kusd: avg(&|s| s.moments[2]),
            sigma_premium_kusd: avg(&|s| s.moments[3]),
            rho: avg(&|s| s.moments[4]),
            stock_fraction: avg(&|s| frac(s.alpha, s)),
            insurance_fraction: avg(&|s| frac(s.premium, s)),
        });
        let vars: [BandVariable; 4] = [
            ("wealth_kusd", |s| s.wealth),
            ("income_kusd", |s| s.income),
            ("stock_kusd", |s| s.alpha),
            ("premium_kusd", |s| s.premium),
        ];
        for (name, f) in vars {
            let mut v: Vec<f64> = col.iter().map(f).collect();
            bands.push(band(t, age, name, &mut v));
        }
    }
    Ok(PolicySimulation {
        summary: StrategySummary { rows },
        bands,
        terminal_wealth: paths.into_iter().map(|(_, w)| w).collect(),
    })
}

/// Freedman-Diaconis histogram; a single bin when the spread is zero.
pub fn histogram(values: &[f64]) -> Result<Vec<HistogramBin>> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("histogram needs finite values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
    let width = 2.0 * iqr / (v.len() as f64).cbrt();
    const MAX_BINS: usize = 1000;
    let n_bins = if hi > lo && width > 0.0 {
        (((hi - lo) / width).ceil() as usize).clamp(1, MAX_BINS)
    } else {
        1
    };
    let step = if hi > lo {
        (hi - lo) / n_bins as f64
    } else {
        0.0
    };
    let mut counts = vec![0usize; n_bins];
    for x in &v {
        let k = if step > 0.0 {
            (((x - lo) / step) as usize).min(n_bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            lower_kusd: lo + k as f64 * step,
            upper_kusd: if k + 1 == n_bins {
                hi
            } else {
                lo + (k + 1) as f64 * step
            },
            count,
        })
        .collect())
}

/// The 5%, 50% and 95% quantiles.
pub fn quantile_markers(values: &[f64]) -> Vec<QuantileMarker> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    [0.05, 0.5, 0.95]
        .into_iter()
        .map(|level| QuantileMarker {
            level,
            wealth_kusd: quantile_sorted(&v, level),
        })
        .collect()
}

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::evaluate::{StrategyRow, TerminalWealth};
use super::io::{read_csv, seed_dirs, STRATEGY_SUMMARY, TERMINAL_WEALTH};
use crate::error::{Error, Result};
use crate::stats::{mean, quantile_sorted};

/// Difference `b - a` of one summary cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDelta {
    pub seed: u64,
    pub t: usize,
    pub age: u32,
    pub column: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalDelta {
    pub seed: u64,
    pub statistic: String,
    pub a_kusd: f64,
    pub b_kusd: f64,
    pub delta_kusd: f64,
}

/// One-sided sign test of `b > a` over paired seeds; ties are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub claim: String,
    pub positive: usize,
    pub negative: usize,
    pub ties: usize,
    pub p_value: f64,
}

impl SignTest {
    pub fn from_deltas(claim: &str, deltas: &[f64]) -> Self {
        let positive = deltas.iter().filter(|d| **d > 0.0).count();
        let negative = deltas.iter().filter(|d| **d < 0.0).count();
        Self {
            claim: claim.into(),
            positive,
            negative,
            ties: deltas.len() - positive - negative,
            p_value: binomial_upper_tail(positive, positive + negative),
        }
    }
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
fn binomial_upper_tail(k: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut coef = 1.0_f64;
    let mut total = 0.0;
    for i in 0..=n {
        if i >= k {
            total += coef;
        }
        coef = coef * (n - i) as f64 / (i + 1) as f64;
    }
    total / 2f64.powi(n as i32)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub summary: Vec<SummaryDelta>,
    pub terminal: Vec<TerminalDelta>,
    pub sign_tests: Vec<SignTest>,
}

impl Comparison {
    pub fn sign_test(&self, claim: &str) -> Option<&SignTest> {
        self.sign_tests.iter().find(|s| s.claim == claim)
    }

    pub fn terminal_delta(&self, seed: u64, statistic: &str) -> Option<f64> {
        self.terminal
            .iter()
            .find(|d| d.seed == seed && d.statistic == statistic)
            .map(|d| d.delta_kusd)
    }

    pub fn summary_delta(&self, seed: u64, t: usize, column: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|d| d.seed == seed && d.t == t && d.column == column)
            .map(|d| d.delta)
    }
}

pub const CLAIM_STOCK_AT_ENTRY: &str = "mu_alpha_at_entry_b_gt_a";
pub const CLAIM_TERMINAL_MEDIAN: &str = "terminal_median_b_gt_a";

fn summary_cells(r: &StrategyRow) -> [(&'static str, f64); 9] {
    [
        ("mean_wealth_kusd", r.mean_wealth_kusd),
        ("mean_income_kusd", r.mean_income_kusd),
        ("mu_alpha_kusd", r.mu_alpha_kusd),
        ("mu_premium_kusd", r.mu_premium_kusd),
        ("sigma_alpha_kusd", r.sigma_alpha_kusd),
        ("sigma_premium_kusd", r.sigma_premium_kusd),
        ("rho", r.rho),
        ("stock_fraction", r.stock_fraction),
        ("insurance_fraction", r.insurance_fraction),
    ]
}

fn terminal_stats(w: &[f64]) -> [(&'static str, f64); 4] {
    let mut v = w.to_vec();
    v.sort_by(f64::total_cmp);
    [
        ("mean", mean(&v)),
        ("p05", quantile_sorted(&v, 0.05)),
        ("p50", quantile_sorted(&v, 0.5)),
        ("p95", quantile_sorted(&v, 0.95)),
    ]
}

fn header(path: &Path) -> Result<csv::StringRecord> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Comparison(format!("cannot read {}: {e}", path.display())))?;
    Ok(rdr.headers()?.clone())
}

/// Pairs the seeds two bundles have in common and reports `b - a`.
pub fn compare_runs(a: &Path, b: &Path) -> Result<Comparison> {
    let sa: BTreeSet<u64> = seed_dirs(a)?.into_iter().map(|(s, _)| s).collect();
    let sb: BTreeSet<u64> = seed_dirs(b)?.into_iter().map(|(s, _)| s).collect();
    let seeds: Vec<u64> = sa.intersection(&sb).copied().collect();
    if seeds.is_empty() {
        return Err(Error::Comparison(format!(
            "bundles {} and {} share no seeds",
            a.display(),
            b.display()
        )));
    }
    let mut out = Comparison {
        seeds: seeds.clone(),
        ..Default::default()
    };
    let mut entry_deltas = Vec::new();
    let mut median_deltas = Vec::new();
    for &seed in &seeds {
        let sub = format!("seed_{seed}");
        let (pa, pb) = (a.join(&sub), b.join(&sub));
        let (ha, hb) = (
            header(&pa.join(STRATEGY_SUMMARY))?,
            header(&pb.join(STRATEGY_SUMMARY))?,
        );
        if ha != hb {
            return Err(Error::Comparison(format!(
                "summary columns differ for seed {seed}"
            )));
        }
        let ra: Vec<StrategyRow> = read_csv(&pa.join(STRATEGY_SUMMARY))?;
        let rb: Vec<StrategyRow> = read_csv(&pb.join(STRATEGY_SUMMARY))?;
        if ra.len() != rb.len()
            || ra
                .iter()
                .zip(&rb)
                .any(|(x, y)| x.t != y.t || x.age != y.age)
        {
            return Err(Error::Comparison(format!(
                "summary ages differ for seed {seed}"
            )));
        }
        if ra.is_empty() {
            return Err(Error::Comparison(format!("empty summary for seed {seed}")));
        }
        for (x, y) in ra.iter().zip(&rb) {
            for ((column, va), (_, vb)) in summary_cells(x).into_iter().zip(summary_cells(y)) {
                out.summary.push(SummaryDelta {
                    seed,
                    t: x.t,
                    age: x.age,
                    column: column.into(),
                    a: va,
                    b: vb,
                    delta: vb - va,
                });
            }
        }
        entry_deltas.push(rb[0].mu_alpha_kusd - ra[0].mu_alpha_kusd);

        let wa: Vec<TerminalWealth> = read_csv(&pa.join(TERMINAL_WEALTH))?;
        let wb: Vec<TerminalWealth> = read_csv(&pb.join(TERMINAL_WEALTH))?;
        if wa.is_empty() || wb.is_empty() {
            return Err(Error::Comparison(format!(
                "empty terminal wealth for seed {seed}"
            )));
        }
        let fa: Vec<f64> = wa.iter().map(|w| w.wealth_kusd).collect();
        let fb: Vec<f64> = wb.iter().map(|w| w.wealth_kusd).collect();
        for ((statistic, va), (_, vb)) in terminal_stats(&fa).into_iter().zip(terminal_stats(&fb)) {
            if statistic == "p50" {
                median_deltas.push(vb - va);
            }
            out.terminal.push(TerminalDelta {
                seed,
                statistic: statistic.into(),
                a_kusd: va,
                b_kusd: vb,
                delta_kusd: vb - va,
            });
        }
    }
    out.sign_tests = vec![
        SignTest::from_deltas(CLAIM_STOCK_AT_ENTRY, &entry_deltas),
        SignTest::from_deltas(CLAIM_TERMINAL_MEDIAN, &median_deltas),
    ];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_tail_values() {
        assert_eq!(binomial_upper_tail(0, 3), 1.0);
        assert_eq!(binomial_upper_tail(3, 3), 0.125);
        assert_eq!(binomial_upper_tail(2, 3), 0.5);
        assert_eq!(binomial_upper_tail(0, 0), 1.0);
    }

    #[test]
    fn sign_test_counts() {
        let s = SignTest::from_deltas("x", &[1.0, -2.0, 0.0, 3.0]);
        assert_eq!((s.positive, s.negative, s.ties), (2, 1, 1));
        assert_eq!(s.p_value, 0.5);
    }
}

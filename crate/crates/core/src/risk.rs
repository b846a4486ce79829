//! One-step coherent risk measures on discrete samples.
//!
//! Costs are "larger is worse". CVaR at tail level `alpha` is evaluated two
//! ways: the primal `q + E[(Z - q)+] / alpha` and the dual supremum over the
//! risk envelope `{xi : 0 <= xi <= 1/alpha, E[xi] = 1}`. The dual route also
//! returns the saddle point `(xi, lambda)` used by the policy gradient.

use crate::error::{Error, Result};

/// Slack used when locating the quantile atom so that accumulated
/// probabilities like `0.1 * 8` still count as reaching `0.8`.
const CUM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    outcomes: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(outcomes: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if outcomes.len() != probs.len() {
            return Err(Error::Input(format!(
                "{} outcomes but {} probabilities",
                outcomes.len(),
                probs.len()
            )));
        }
        if outcomes.is_empty() {
            return Err(Error::Input("empty distribution".into()));
        }
        if let Some(z) = outcomes.iter().find(|z| !z.is_finite()) {
            return Err(Error::Domain(format!("non-finite outcome {z}")));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Domain(
                "probabilities must be finite and >= 0".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() >= 1e-12 {
            return Err(Error::Domain(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { outcomes, probs })
    }

    /// Equally weighted empirical distribution of a sample.
    pub fn uniform(outcomes: Vec<f64>) -> Result<Self> {
        let n = outcomes.len();
        if n == 0 {
            return Err(Error::Input("empty sample".into()));
        }
        let p = 1.0 / n as f64;
        let mut probs = vec![p; n];
        // push the rounding residue onto the last weight so the sum is 1
        let residue = 1.0 - probs.iter().sum::<f64>();
        probs[n - 1] += residue;
        Self::new(outcomes, probs)
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.outcomes
            .iter()
            .zip(&self.probs)
            .map(|(z, p)| z * p)
            .sum()
    }

    /// Lower quantile `inf{z : P(Z <= z) >= level}`.
    pub fn lower_quantile(&self, level: f64) -> f64 {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| self.outcomes[i].total_cmp(&self.outcomes[j]));
        let mut cum = 0.0;
        let mut k = 0;
        while k < order.len() {
            let z = self.outcomes[order[k]];
            // walk the whole atom before testing the cumulative level
            while k < order.len() && self.outcomes[order[k]] == z {
                cum += self.probs[order[k]];
                k += 1;
            }
            if cum >= level - CUM_EPS {
                return z;
            }
        }
        self.outcomes[order[order.len() - 1]]
    }
}

/// Tail level of a CVaR; `alpha = 1` is the plain expectation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CvarSpec {
    alpha: f64,
}

impl CvarSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("CVaR level {alpha} outside (0, 1]")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Value and saddle point `(xi, lambda)` of a one-step risk evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CvarSaddle {
    pub value: f64,
    pub xi: Vec<f64>,
    pub lambda: f64,
}

/// Primal CVaR: `q + E[(Z - q)+] / alpha` with `q` the lower `(1-alpha)`-quantile.
pub fn cvar_primal(dist: &DiscreteDistribution, spec: CvarSpec) -> f64 {
    let alpha = spec.alpha();
    if alpha >= 1.0 {
        return dist.mean();
    }
    let q = dist.lower_quantile(1.0 - alpha);
    let excess: f64 = dist
        .outcomes
        .iter()
        .zip(&dist.probs)
        .map(|(&z, &p)| p * (z - q).max(0.0))
        .sum();
    q + excess / alpha
}

/// Dual CVaR with its maximising envelope point.
///
/// `lambda` is the lower `(1-alpha)`-quantile. Outcomes above it get
/// `xi = 1/alpha`, outcomes below get `0`, and every outcome tied at the
/// quantile shares the single fractional weight that makes `E[xi] = 1`.
pub fn cvar_dual(dist: &DiscreteDistribution, spec: CvarSpec) -> CvarSaddle {
    let alpha = spec.alpha();
    if alpha >= 1.0 {
        return expectation_measure(dist);
    }
    let cap = 1.0 / alpha;
    let lambda = dist.lower_quantile(1.0 - alpha);
    let mut upper_mass = 0.0;
    let mut atom_mass = 0.0;
    for (&z, &p) in dist.outcomes.iter().zip(&dist.probs) {
        if z > lambda {
            upper_mass += p;
        } else if z == lambda {
            atom_mass += p;
        }
    }
    let atom_xi = if atom_mass > 0.0 {
        ((1.0 - cap * upper_mass) / atom_mass).clamp(0.0, cap)
    } else {
        0.0
    };
    let xi: Vec<f64> = dist
        .outcomes
        .iter()
        .map(|&z| {
            if z > lambda {
                cap
            } else if z == lambda {
                atom_xi
            } else {
                0.0
            }
        })
        .collect();
    let value = xi
        .iter()
        .zip(&dist.outcomes)
        .zip(&dist.probs)
        .map(|((x, z), p)| x * z * p)
        .sum();
    CvarSaddle { value, xi, lambda }
}

/// Risk-envelope membership test with the tolerances used across the crate.
pub fn envelope_check(xi: &[f64], dist: &DiscreteDistribution, spec: CvarSpec) -> bool {
    if xi.len() != dist.len() {
        return false;
    }
    let cap = 1.0 / spec.alpha() + 1e-10;
    if xi.iter().any(|&x| !(x >= 0.0) || x > cap) {
        return false;
    }
    let mass: f64 = xi.iter().zip(&dist.probs).map(|(x, p)| x * p).sum();
    (mass - 1.0).abs() < 1e-8
}

/// The expectation as a (trivially) coherent measure: `xi = 1`, `lambda = mean`.
pub fn expectation_measure(dist: &DiscreteDistribution) -> CvarSaddle {
    let mean = dist.mean();
    CvarSaddle {
        value: mean,
        xi: vec![1.0; dist.len()],
        lambda: mean,
    }
}

/// Interface for one-step measures entering the dynamic programming equation.
///
/// `conjugate` is the penalty `rho*(xi)` of the dual representation and its
/// gradient slot; both are zero for coherent measures.
pub trait RiskMeasure {
    fn saddle(&self, dist: &DiscreteDistribution) -> CvarSaddle;

    fn primal(&self, dist: &DiscreteDistribution) -> f64;

    fn conjugate(&self, _xi: &[f64]) -> f64 {
        0.0
    }

    fn conjugate_gradient(&self, _xi: &[f64], n_params: usize) -> Vec<f64> {
        vec![0.0; n_params]
    }
}

impl RiskMeasure for CvarSpec {
    fn saddle(&self, dist: &DiscreteDistribution) -> CvarSaddle {
        cvar_dual(dist, *self)
    }

    fn primal(&self, dist: &DiscreteDistribution) -> f64 {
        cvar_primal(dist, *self)
    }
}

/// Marker for the risk-neutral measure.
#[derive(Debug, Clone, Copy, Default)]
pub struct Expectation;

impl RiskMeasure for Expectation {
    fn saddle(&self, dist: &DiscreteDistribution) -> CvarSaddle {
        expectation_measure(dist)
    }

    fn primal(&self, dist: &DiscreteDistribution) -> f64 {
        dist.mean()
    }
}

/// CVaR levels of the member (`a`) and the beneficiary (`b`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvarPair {
    pub a: CvarSpec,
    pub b: CvarSpec,
}

impl CvarPair {
    pub fn new(alpha_a: f64, alpha_b: f64) -> Result<Self> {
        Ok(Self {
            a: CvarSpec::new(alpha_a)?,
            b: CvarSpec::new(alpha_b)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_1_to_10() -> DiscreteDistribution {
        DiscreteDistribution::uniform((1..=10).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn primal_tail_of_uniform_ten() {
        let v = cvar_primal(&uniform_1_to_10(), CvarSpec::new(0.3).unwrap());
        assert!((v - 9.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn dual_atom_rule_on_uniform_ten() {
        let s = cvar_dual(&uniform_1_to_10(), CvarSpec::new(0.2).unwrap());
        assert_eq!(s.lambda, 8.0);
        for (i, &x) in s.xi.iter().enumerate() {
            let expect = if i >= 8 { 5.0 } else { 0.0 };
            assert!((x - expect).abs() < 1e-12, "xi[{i}] = {x}");
        }
        assert!((s.value - 9.5).abs() < 1e-12);
    }

    #[test]
    fn two_point_envelope() {
        let d = DiscreteDistribution::new(vec![0.0, 10.0], vec![0.5, 0.5]).unwrap();
        let s = cvar_dual(&d, CvarSpec::new(0.1).unwrap());
        assert_eq!(s.lambda, 10.0);
        assert_eq!(s.xi, vec![0.0, 2.0]);
        assert!((s.value - 10.0).abs() < 1e-12);
        assert!(envelope_check(&s.xi, &d, CvarSpec::new(0.1).unwrap()));
    }

    #[test]
    fn constant_sample_is_its_own_risk() {
        let d = DiscreteDistribution::uniform(vec![3.5; 7]).unwrap();
        for a in [0.05, 0.1, 0.5, 1.0] {
            let spec = CvarSpec::new(a).unwrap();
            assert!((cvar_primal(&d, spec) - 3.5).abs() < 1e-12);
            let s = cvar_dual(&d, spec);
            assert!((s.value - 3.5).abs() < 1e-12);
            assert!((s.lambda - 3.5).abs() < 1e-12);
            for x in &s.xi {
                assert!((x - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alpha_one_is_the_mean() {
        let d = DiscreteDistribution::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
        let s = expectation_measure(&d);
        assert_eq!(s.value, 2.0);
        assert_eq!(s.xi, vec![1.0, 1.0]);
        assert_eq!(cvar_primal(&d, CvarSpec::new(1.0).unwrap()), 2.0);
    }

    #[test]
    fn envelope_rejects_bound_violation() {
        let d = uniform_1_to_10();
        let spec = CvarSpec::new(0.25).unwrap();
        assert!(envelope_check(&[1.0; 10], &d, spec));
        let mut xi = vec![0.0; 10];
        xi[0] = 1.0 / 0.25 + 1.0;
        assert!(!envelope_check(&xi, &d, spec));
    }

    #[test]
    fn tied_atom_shares_weight() {
        // atom {5, 5} straddles the 0.5 level; both copies get the same xi
        let d = DiscreteDistribution::new(vec![5.0, 1.0, 5.0, 9.0], vec![0.25; 4]).unwrap();
        let spec = CvarSpec::new(0.5).unwrap();
        let s = cvar_dual(&d, spec);
        assert_eq!(s.lambda, 5.0);
        assert_eq!(s.xi[0], s.xi[2]);
        assert!((s.xi[3] - 2.0).abs() < 1e-12);
        assert!((s.value - cvar_primal(&d, spec)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(CvarSpec::new(0.0).is_err());
        assert!(CvarSpec::new(1.5).is_err());
        assert!(DiscreteDistribution::new(vec![1.0], vec![0.9]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }
}

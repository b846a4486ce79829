use serde::{Deserialize, Serialize};

use super::net::{sigmoid, FeedforwardNet};
use crate::error::{Error, Result};
use crate::mdp::PensionState;

/// Ratio bounding each standard deviation by its mean.
pub const SIGMA_RATIO: f64 = 0.2;
/// Standard deviations never fall below this, keeping the covariance regular.
pub const SIGMA_FLOOR: f64 = 1e-6;
const RHO_SHRINK: f64 = 1.0 - 1e-6;

/// Bivariate normal law of the stock holding and the insurance premium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiNormalPolicy {
    pub mu_alpha: f64,
    pub mu_premium: f64,
    pub sigma_alpha: f64,
    pub sigma_premium: f64,
    pub rho: f64,
}

/// Derivatives of the five policy moments with respect to the raw outputs,
/// `jac[k][j] = d moment_k / d raw_j` in the order
/// `(mu_alpha, mu_premium, sigma_alpha, sigma_premium, rho)`.
pub type HeadJacobian = [[f64; 5]; 5];

/// Maps five unconstrained outputs to a policy whose means respect the budget
/// and whose deviations respect the ratio bound.
pub fn squash(raw: &[f64], budget: f64) -> (BiNormalPolicy, HeadJacobian) {
    let s: Vec<f64> = raw[..4].iter().map(|&v| sigmoid(v)).collect();
    let ds: Vec<f64> = s.iter().map(|v| v * (1.0 - v)).collect();
    let th = raw[4].tanh();

    let mu_a = s[0] * budget;
    let mu_i = s[1] * (budget - mu_a);
    let p = BiNormalPolicy {
        mu_alpha: mu_a,
        mu_premium: mu_i,
        sigma_alpha: SIGMA_RATIO * mu_a * s[2] + SIGMA_FLOOR,
        sigma_premium: SIGMA_RATIO * mu_i * s[3] + SIGMA_FLOOR,
        rho: th * RHO_SHRINK,
    };

    let mut j = [[0.0; 5]; 5];
    j[0][0] = budget * ds[0];
    j[1][0] = -s[1] * budget * ds[0];
    j[1][1] = (budget - mu_a) * ds[1];
    j[2][0] = SIGMA_RATIO * s[2] * j[0][0];
    j[2][2] = SIGMA_RATIO * mu_a * ds[2];
    j[3][0] = SIGMA_RATIO * s[3] * j[1][0];
    j[3][1] = SIGMA_RATIO * s[3] * j[1][1];
    j[3][3] = SIGMA_RATIO * mu_i * ds[3];
    j[4][4] = RHO_SHRINK * (1.0 - th * th);
    (p, j)
}

impl BiNormalPolicy {
    /// `mu + L z` with `L` the Cholesky factor of the covariance.
    pub fn sample(&self, z: (f64, f64)) -> (f64, f64) {
        let a = self.mu_alpha + self.sigma_alpha * z.0;
        let c = (1.0 - self.rho * self.rho).max(0.0).sqrt();
        let i = self.mu_premium + self.sigma_premium * (self.rho * z.0 + c * z.1);
        (a, i)
    }

    fn check(&self) -> Result<f64> {
        let d = 1.0 - self.rho * self.rho;
        if !(self.sigma_alpha > 0.0 && self.sigma_premium > 0.0 && d > 1e-14) {
            return Err(Error::Conditioning(format!(
                "singular covariance in {self:?}"
            )));
        }
        Ok(d)
    }

    pub fn log_density(&self, a: (f64, f64)) -> Result<f64> {
        Ok(self.log_density_and_moment_score(a)?.0)
    }

    /// Log density and its gradient with respect to the five moments.
    pub fn log_density_and_moment_score(&self, a: (f64, f64)) -> Result<(f64, [f64; 5])> {
        let d = self.check()?;
        let (s1, s2, rho) = (self.sigma_alpha, self.sigma_premium, self.rho);
        let u = (a.0 - self.mu_alpha) / s1;
        let v = (a.1 - self.mu_premium) / s2;
        let q = (u * u - 2.0 * rho * u * v + v * v) / d;
        let logp = -(2.0 * std::f64::consts::PI * s1 * s2 * d.sqrt()).ln() - 0.5 * q;
        let g = [
            (u - rho * v) / (d * s1),
            (v - rho * u) / (d * s2),
            -1.0 / s1 + u * (u - rho * v) / (d * s1),
            -1.0 / s2 + v * (v - rho * u) / (d * s2),
            rho / d + u * v / d - rho * q / d,
        ];
        Ok((logp, g))
    }
}

/// Actor: a network from state features to the raw policy outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub net: FeedforwardNet,
    pub horizon: usize,
    pub gamma: f64,
}

/// Everything needed to turn an upstream gradient on the moments into a
/// parameter gradient for one state.
pub struct PolicyEval {
    pub policy: BiNormalPolicy,
    pub jacobian: HeadJacobian,
    cache: super::net::ForwardCache,
}

impl PolicyNet {
    pub fn new(net: FeedforwardNet, horizon: usize, gamma: f64) -> Result<Self> {
        if net.input_dim() != 3 || net.output_dim() != 5 {
            return Err(Error::Checkpoint(format!(
                "policy network must map 3 features to 5 outputs, got {:?}",
                net.sizes()
            )));
        }
        Ok(Self {
            net,
            horizon,
            gamma,
        })
    }

    pub fn evaluate(&self, state: &PensionState) -> Result<PolicyEval> {
        let cache = self.net.forward_cached(&state.features(self.horizon))?;
        let (policy, jacobian) = squash(cache.output(), state.budget(self.gamma));
        Ok(PolicyEval {
            policy,
            jacobian,
            cache,
        })
    }

    pub fn policy(&self, state: &PensionState) -> Result<BiNormalPolicy> {
        Ok(self.evaluate(state)?.policy)
    }

    /// Adds `sum_k upstream[k] d moment_k / d params` into `grad`.
    pub fn backward_moments(&self, eval: &PolicyEval, upstream: &[f64; 5], grad: &mut [f64]) {
        let mut raw = [0.0; 5];
        for (k, u) in upstream.iter().enumerate() {
            for (j, r) in raw.iter_mut().enumerate() {
                *r += u * eval.jacobian[k][j];
            }
        }
        self.net.backward(&eval.cache, &raw, grad);
    }

    /// Log density of `action` and its gradient in the network parameters.
    pub fn log_density_and_score(
        &self,
        state: &PensionState,
        action: (f64, f64),
    ) -> Result<(f64, Vec<f64>)> {
        let eval = self.evaluate(state)?;
        let (logp, g) = eval.policy.log_density_and_moment_score(action)?;
        let mut grad = vec![0.0; self.net.n_params()];
        self.backward_moments(&eval, &g, &mut grad);
        Ok((logp, grad))
    }
}

/// Critic: a network from state features to the value, in units of
/// `value_scale` thousand dollars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticNet {
    pub net: FeedforwardNet,
    pub horizon: usize,
    pub value_scale: f64,
}

impl CriticNet {
    pub fn new(net: FeedforwardNet, horizon: usize, value_scale: f64) -> Result<Self> {
        if net.input_dim() != 3 || net.output_dim() != 1 {
            return Err(Error::Checkpoint(format!(
                "critic network must map 3 features to 1 output, got {:?}",
                net.sizes()
            )));
        }
        if !(value_scale > 0.0) {
            return Err(Error::Config(format!(
                "value scale {value_scale} must be > 0"
            )));
        }
        Ok(Self {
            net,
            horizon,
            value_scale,
        })
    }

    pub fn value(&self, state: &PensionState) -> Result<f64> {
        Ok(self.value_scale * self.net.forward(&state.features(self.horizon))?[0])
    }

    /// Values of several states in one batched pass.
    pub fn values(&self, states: &[PensionState]) -> Result<Vec<f64>> {
        let xs: Vec<Vec<f64>> = states
            .iter()
            .map(|s| s.features(self.horizon).to_vec())
            .collect();
        Ok(self
            .net
            .forward_batch(&xs)?
            .into_iter()
            .map(|o| self.value_scale * o[0])
            .collect())
    }

    /// Adds the gradient of `0.5 * weight * (V(s) - target)^2` and returns the
    /// squared error.
    pub fn accumulate_loss_grad(
        &self,
        state: &PensionState,
        target: f64,
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let cache = self.net.forward_cached(&state.features(self.horizon))?;
        let v = self.value_scale * cache.output()[0];
        let err = v - target;
        self.net
            .backward(&cache, &[weight * err * self.value_scale], grad);
        Ok(err * err)
    }
}

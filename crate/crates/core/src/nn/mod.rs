//! Function approximators with hand-written gradients.

mod adam;
mod net;
mod policy;

pub use adam::AdamState;
pub use net::{sigmoid, silu, FeedforwardNet, ForwardCache, HIDDEN_LAYERS, HIDDEN_WIDTH};
pub use policy::{
    squash, BiNormalPolicy, CriticNet, HeadJacobian, PolicyEval, PolicyNet, SIGMA_FLOOR,
    SIGMA_RATIO,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::PensionState;

/// Anything that proposes a raw (pre-projection) action for a state.
pub trait ActionPolicy: Sync {
    /// Raw action for standard normal noise `z`.
    fn act(&self, state: &PensionState, z: (f64, f64)) -> Result<(f64, f64)>;

    /// The action law at `state`, if the policy is Gaussian.
    fn moments(&self, state: &PensionState) -> Result<Option<BiNormalPolicy>>;
}

impl ActionPolicy for PolicyNet {
    fn act(&self, state: &PensionState, z: (f64, f64)) -> Result<(f64, f64)> {
        Ok(self.policy(state)?.sample(z))
    }

    fn moments(&self, state: &PensionState) -> Result<Option<BiNormalPolicy>> {
        Ok(Some(self.policy(state)?))
    }
}

/// Deterministic rule investing fixed shares of the budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantFractions {
    pub stock: f64,
    pub premium: f64,
    pub gamma: f64,
}

impl ActionPolicy for ConstantFractions {
    fn act(&self, state: &PensionState, _z: (f64, f64)) -> Result<(f64, f64)> {
        let b = state.budget(self.gamma);
        Ok((self.stock * b, self.premium * b))
    }

    fn moments(&self, _state: &PensionState) -> Result<Option<BiNormalPolicy>> {
        Ok(None)
    }
}

/// Serialized network plus optimiser state, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Checkpoint {
    Policy {
        policy: PolicyNet,
        optimizer: Option<AdamState>,
    },
    Critic {
        critic: CriticNet,
        optimizer: Option<AdamState>,
    },
}

impl Checkpoint {
    fn validate(self) -> Result<Self> {
        let (net, opt) = match &self {
            Checkpoint::Policy { policy, optimizer } => (&policy.net, optimizer),
            Checkpoint::Critic { critic, optimizer } => (&critic.net, optimizer),
        };
        let rebuilt = FeedforwardNet::from_parts(net.sizes().to_vec(), net.params().to_vec())?;
        match &self {
            Checkpoint::Policy { policy, .. } => {
                PolicyNet::new(rebuilt, policy.horizon, policy.gamma)?;
            }
            Checkpoint::Critic { critic, .. } => {
                CriticNet::new(rebuilt, critic.horizon, critic.value_scale)?;
            }
        }
        if let Some(o) = opt {
            if o.m.len() != net.n_params() || o.v.len() != net.n_params() {
                return Err(Error::Checkpoint(
                    "optimiser state does not match the network".into(),
                ));
            }
        }
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)
            .map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        c.validate()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn into_policy(self) -> Result<PolicyNet> {
        match self {
            Checkpoint::Policy { policy, .. } => Ok(policy),
            Checkpoint::Critic { .. } => {
                Err(Error::Checkpoint("expected a policy checkpoint".into()))
            }
        }
    }

    pub fn into_critic(self) -> Result<CriticNet> {
        match self {
            Checkpoint::Critic { critic, .. } => Ok(critic),
            Checkpoint::Policy { .. } => {
                Err(Error::Checkpoint("expected a critic checkpoint".into()))
            }
        }
    }
}

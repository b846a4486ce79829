//! Nested-simulation actor-critic.
//!
//! Each outer epoch simulates `N` trajectories under the current policy. The
//! critic then fits one-step dual value targets estimated from `M` inner
//! transitions per visited state; the actor follows the likelihood-ratio
//! gradient built from the CVaR saddle points of those same one-step
//! evaluations, with the critic held fixed.

use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::mdp::{
    costs, is_feasible, project_action, step_wealth, terminal_value, value_dual_target, CostPair,
    PensionAction, PensionPlanSpec, PensionState, TargetSample,
};
use crate::mortality::{CohortRates, SurvivalRow};
use crate::nn::{ActionPolicy, AdamState, BiNormalPolicy, CriticNet, FeedforwardNet, PolicyNet};
use crate::risk::{cvar_dual, CvarPair, DiscreteDistribution};
use crate::rng::{stream, tag, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_outer: usize,
    pub m_inner: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub critic_epochs: usize,
    pub actor_epochs: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub lr_decay: f64,
    pub warmup_critic_epochs: usize,
    pub seed: u64,
    /// Critic outputs are multiplied by this many thousand dollars.
    pub value_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_outer: 750,
            m_inner: 500,
            epochs: 100,
            minibatch: 200,
            critic_epochs: 100,
            actor_epochs: 20,
            critic_lr: 1e-4,
            actor_lr: 5e-7,
            lr_decay: 0.9,
            warmup_critic_epochs: 100,
            seed: 0,
            value_scale: 100.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_outer", self.n_outer),
            ("m_inner", self.m_inner),
            ("epochs", self.epochs),
            ("minibatch", self.minibatch),
            ("critic_epochs", self.critic_epochs),
            ("actor_epochs", self.actor_epochs),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.minibatch > self.n_outer {
            return Err(Error::Config(format!(
                "minibatch {} exceeds the {} outer trajectories",
                self.minibatch, self.n_outer
            )));
        }
        if !(self.critic_lr > 0.0 && self.actor_lr > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay {} outside (0, 1]",
                self.lr_decay
            )));
        }
        if !(self.value_scale > 0.0) {
            return Err(Error::Config("value_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// The fixed parts of the decision problem.
#[derive(Debug, Clone)]
pub struct Environment {
    pub plan: PensionPlanSpec,
    pub market: MarketParams,
    pub cohort: CohortRates,
    pub specs: CvarPair,
}

impl Environment {
    pub fn new(
        plan: PensionPlanSpec,
        market: MarketParams,
        cohort: CohortRates,
        specs: CvarPair,
    ) -> Result<Self> {
        plan.validate()?;
        market.validate()?;
        if cohort.len() < plan.horizon {
            return Err(Error::Input(format!(
                "cohort covers {} years, the plan needs {}",
                cohort.len(),
                plan.horizon
            )));
        }
        Ok(Self {
            plan,
            market,
            cohort,
            specs,
        })
    }

    pub fn row(&self, t: usize) -> SurvivalRow {
        self.cohort.row(t)
    }
}

/// One sampled step out of a visited state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerTransition {
    /// Policy draw before projection onto the feasible set.
    pub raw: (f64, f64),
    pub action: PensionAction,
    pub next_state: PensionState,
    pub costs: CostPair,
    pub projected: bool,
}

/// Action law used while drawing transitions from one state.
enum ActionLaw<'a> {
    Gaussian(BiNormalPolicy),
    Other(&'a dyn ActionPolicy),
}

fn draw_transition(
    state: &PensionState,
    law: &ActionLaw,
    env: &Environment,
    rng: &mut StreamRng,
) -> Result<InnerTransition> {
    let z = (rng.sample(StandardNormal), rng.sample(StandardNormal));
    let raw = match law {
        ActionLaw::Gaussian(p) => p.sample(z),
        ActionLaw::Other(p) => p.act(state, z)?,
    };
    let gamma = env.plan.gamma;
    let action = project_action(raw, state, gamma);
    if !is_feasible(action, state, gamma) {
        return Err(Error::Contract(format!(
            "projected action {action:?} violates the budget at {state:?}"
        )));
    }
    let shocks = env.market.shocks(rng);
    let w_next = step_wealth(
        state,
        action,
        env.market.bond_gross(),
        env.market.stock_gross(shocks),
        gamma,
    )?;
    let next_state = PensionState {
        t: state.t + 1,
        wealth: w_next,
        income: state.income * env.market.income_growth(shocks),
    };
    let q = env.row(state.t).q;
    let c = costs(
        env.plan.evaluation_mode,
        state,
        action,
        w_next,
        q,
        env.market.r,
        gamma,
    )?;
    Ok(InnerTransition {
        raw,
        action,
        next_state,
        costs: c,
        projected: action.alpha != raw.0 || action.premium != raw.1,
    })
}

fn law_for<'a>(policy: &'a dyn ActionPolicy, state: &PensionState) -> Result<ActionLaw<'a>> {
    Ok(match policy.moments(state)? {
        Some(p) => ActionLaw::Gaussian(p),
        None => ActionLaw::Other(policy),
    })
}

/// `M` independent transitions from `state` under `policy`.
pub fn bootstrap_inner(
    state: &PensionState,
    policy: &dyn ActionPolicy,
    env: &Environment,
    m: usize,
    rng: &mut StreamRng,
) -> Result<Vec<InnerTransition>> {
    if m == 0 {
        return Err(Error::Input(
            "at least one inner transition is required".into(),
        ));
    }
    if state.t >= env.plan.horizon {
        return Err(Error::Input(format!(
            "state at t = {} has no transitions",
            state.t
        )));
    }
    let law = law_for(policy, state)?;
    (0..m)
        .map(|_| draw_transition(state, &law, env, rng))
        .collect()
}

/// Value of a next state: the exact terminal value at retirement, the critic before.
pub fn next_value(critic: &CriticNet, state: &PensionState, horizon: usize) -> Result<f64> {
    if state.t >= horizon {
        Ok(terminal_value(state.wealth))
    } else {
        critic.value(state)
    }
}

/// [`next_value`] for every transition, with the critic evaluated in one batch.
pub fn next_values(
    critic: &CriticNet,
    transitions: &[InnerTransition],
    horizon: usize,
) -> Result<Vec<f64>> {
    let next: Vec<PensionState> = transitions.iter().map(|t| t.next_state).collect();
    if next.iter().all(|s| s.t >= horizon) {
        return Ok(next.iter().map(|s| terminal_value(s.wealth)).collect());
    }
    let v = critic.values(&next)?;
    Ok(next
        .iter()
        .zip(v)
        .map(|(s, v)| {
            if s.t >= horizon {
                terminal_value(s.wealth)
            } else {
                v
            }
        })
        .collect())
}

fn target_samples(
    transitions: &[InnerTransition],
    critic: &CriticNet,
    horizon: usize,
) -> Result<Vec<TargetSample>> {
    let v = next_values(critic, transitions, horizon)?;
    Ok(transitions
        .iter()
        .zip(v)
        .map(|(tr, v_next)| TargetSample {
            costs: tr.costs,
            w_next: tr.next_state.wealth,
            v_next,
        })
        .collect())
}

/// Critic target for one visited state.
pub fn state_target(
    state: &PensionState,
    transitions: &[InnerTransition],
    critic: &CriticNet,
    env: &Environment,
) -> Result<f64> {
    if state.t >= env.plan.horizon {
        return Ok(terminal_value(state.wealth));
    }
    let samples = target_samples(transitions, critic, env.plan.horizon)?;
    value_dual_target(&samples, env.row(state.t), env.specs, env.market.r)
}

/// Per-transition weights `k_m` such that the policy gradient at the state
/// is `sum_m k_m * score_m`, with `score_m` the gradient of the log density
/// of the `m`-th raw draw.
pub fn saddle_coefficients(
    transitions: &[InnerTransition],
    v_next: &[f64],
    row: SurvivalRow,
    specs: CvarPair,
    r: f64,
) -> Result<Vec<f64>> {
    let m = transitions.len();
    if m == 0 || v_next.len() != m {
        return Err(Error::Input(
            "one next-state value per transition is required".into(),
        ));
    }
    let disc = (-r).exp();
    let ya: Vec<f64> = transitions
        .iter()
        .zip(v_next)
        .map(|(t, v)| t.costs.ca + disc * v)
        .collect();
    let cb: Vec<f64> = transitions.iter().map(|t| t.costs.cb).collect();
    let da = DiscreteDistribution::uniform(ya.clone())?;
    let probs = da.probs().to_vec();
    let db = DiscreteDistribution::new(cb.clone(), probs.clone())?;
    let sa = cvar_dual(&da, specs.a);
    let sb = cvar_dual(&db, specs.b);
    if m < 2 {
        log::warn!("single inner transition: the saddle point is degenerate");
    }
    Ok((0..m)
        .map(|i| {
            let mut k = 0.0;
            if row.p > 0.0 {
                k += row.p * probs[i] * sa.xi[i] * (ya[i] - sa.lambda);
            }
            if row.q > 0.0 {
                k += row.q * probs[i] * sb.xi[i] * (cb[i] - sb.lambda);
            }
            k
        })
        .collect())
}

/// Policy gradient contribution of one state, added into `grad`.
fn accumulate_actor_gradient(
    policy: &PolicyNet,
    state: &PensionState,
    transitions: &[InnerTransition],
    v_next: &[f64],
    env: &Environment,
    scale: f64,
    grad: &mut [f64],
) -> Result<()> {
    let eval = policy.evaluate(state)?;
    let k = saddle_coefficients(
        transitions,
        v_next,
        env.row(state.t),
        env.specs,
        env.market.r,
    )?;
    let mut upstream = [0.0; 5];
    for (tr, km) in transitions.iter().zip(&k) {
        if *km == 0.0 {
            continue;
        }
        let (_, g) = eval.policy.log_density_and_moment_score(tr.raw)?;
        for (u, gj) in upstream.iter_mut().zip(g) {
            *u += scale * km * gj;
        }
    }
    policy.backward_moments(&eval, &upstream, grad);
    Ok(())
}

/// Gradient of the one-step dual value at `state` with respect to the policy
/// parameters, the critic held fixed.
pub fn actor_gradient(
    policy: &PolicyNet,
    critic: &CriticNet,
    state: &PensionState,
    transitions: &[InnerTransition],
    env: &Environment,
) -> Result<Vec<f64>> {
    let v_next = next_values(critic, transitions, env.plan.horizon)?;
    let mut grad = vec![0.0; policy.net.n_params()];
    accumulate_actor_gradient(policy, state, transitions, &v_next, env, 1.0, &mut grad)?;
    Ok(grad)
}

/// Simulates one state path `s_0 .. s_T` under `policy` from `stream`.
pub fn simulate_trajectory(
    policy: &dyn ActionPolicy,
    env: &Environment,
    rng: &mut StreamRng,
) -> Result<Vec<(PensionState, Option<InnerTransition>)>> {
    let mut s = env.plan.initial_state();
    let mut out = Vec::with_capacity(env.plan.horizon + 1);
    for _ in 0..env.plan.horizon {
        let law = law_for(policy, &s)?;
        let tr = draw_transition(&s, &law, env, rng)?;
        out.push((s, Some(tr)));
        s = tr.next_state;
    }
    out.push((s, None));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub critic_loss: f64,
    pub actor_grad_norm: f64,
    pub lr_critic: f64,
    pub lr_actor: f64,
    /// Share of executed and inner actions that had to be projected.
    pub projection_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    /// Critic loss of every warm-up epoch.
    pub warmup_losses: Vec<f64>,
    pub records: Vec<EpochRecord>,
    /// Wall-clock seconds per outer epoch; kept apart so that logs compare
    /// byte for byte.
    pub seconds: Vec<f64>,
}

impl TrainLog {
    /// Loss after warm-up, or the first epoch's loss without warm-up.
    pub fn post_warmup_loss(&self) -> Option<f64> {
        self.warmup_losses
            .last()
            .copied()
            .or_else(|| self.records.first().map(|r| r.critic_loss))
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.critic_loss)
    }
}

/// States are processed in fixed-size chunks whose partial sums are reduced
/// in order, so results do not depend on the number of worker threads.
const CHUNK: usize = 16;

/// Sums `(gradient, scalar, count)` contributions of `items` deterministically.
fn reduce_chunks<T: Sync>(
    items: &[T],
    n_params: usize,
    f: impl Fn(&T, &mut [f64]) -> Result<(f64, f64)> + Sync,
) -> Result<(Vec<f64>, f64, f64)> {
    let partials: Vec<Result<(Vec<f64>, f64, f64)>> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n_params];
            let (mut a, mut b) = (0.0, 0.0);
            for it in chunk {
                let (x, y) = f(it, &mut g)?;
                a += x;
                b += y;
            }
            Ok((g, a, b))
        })
        .collect();
    let mut grad = vec![0.0; n_params];
    let (mut a, mut b) = (0.0, 0.0);
    for p in partials {
        let (g, x, y) = p?;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
        a += x;
        b += y;
    }
    Ok((grad, a, b))
}

fn finite_or_abort(v: &[f64], epoch: usize, what: &str) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Aborted {
            epoch,
            msg: format!("non-finite {what} at index {i}: {}", v[i]),
        });
    }
    Ok(())
}

/// Stateful trainer; [`train`] drives it to completion.
pub struct Trainer {
    pub config: TrainConfig,
    pub env: Environment,
    pub policy: PolicyNet,
    pub critic: CriticNet,
    pub policy_opt: AdamState,
    pub critic_opt: AdamState,
    pub log: TrainLog,
    /// Parameters after the last completed epoch.
    pub last_good: (PolicyNet, CriticNet),
    trajectories: Vec<Vec<(PensionState, Option<InnerTransition>)>>,
    critic_step: u64,
    actor_step: u64,
    epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, env: Environment) -> Result<Self> {
        config.validate()?;
        let h = env.plan.horizon;
        let pnet = FeedforwardNet::init(
            FeedforwardNet::standard_sizes(3, 5),
            &mut stream(config.seed, &[tag::INIT_POLICY]),
        )?;
        let cnet = FeedforwardNet::init(
            FeedforwardNet::standard_sizes(3, 1),
            &mut stream(config.seed, &[tag::INIT_CRITIC]),
        )?;
        let policy = PolicyNet::new(pnet, h, env.plan.gamma)?;
        let critic = CriticNet::new(cnet, h, config.value_scale)?;
        let policy_opt = AdamState::new(policy.net.n_params(), config.actor_lr, config.lr_decay)?;
        let critic_opt = AdamState::new(critic.net.n_params(), config.critic_lr, config.lr_decay)?;
        Ok(Self {
            log: TrainLog {
                seed: config.seed,
                ..Default::default()
            },
            last_good: (policy.clone(), critic.clone()),
            config,
            env,
            policy,
            critic,
            policy_opt,
            critic_opt,
            trajectories: Vec::new(),
            critic_step: 0,
            actor_step: 0,
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Re-simulates the outer trajectories under the current policy.
    pub fn simulate_outer(&mut self) -> Result<f64> {
        let seed = self.config.seed;
        let epoch = self.epoch as u64;
        let policy = &self.policy;
        let env = &self.env;
        self.trajectories = (0..self.config.n_outer)
            .into_par_iter()
            .map(|i| {
                simulate_trajectory(
                    policy,
                    env,
                    &mut stream(seed, &[tag::OUTER, epoch, i as u64]),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let projected = self
            .trajectories
            .iter()
            .flatten()
            .filter(|(_, tr)| tr.is_some_and(|t| t.projected))
            .count();
        Ok(projected as f64 / (self.config.n_outer * env.plan.horizon) as f64)
    }

    /// Decision states (t < T) of `minibatch` distinct outer trajectories.
    fn minibatch_states(&self, rng: &mut StreamRng) -> Vec<PensionState> {
        let picks = sample_indices(rng, self.trajectories.len(), self.config.minibatch);
        let mut idx: Vec<usize> = picks.into_iter().collect();
        idx.sort_unstable();
        let mut out = Vec::new();
        for i in idx {
            for (s, tr) in &self.trajectories[i] {
                if tr.is_some() {
                    out.push(*s);
                }
            }
        }
        out
    }

    /// One critic epoch: fresh inner transitions, dual targets from the frozen
    /// critic, one optimiser step on the mean squared error. Returns the loss
    /// before the step. Retirement states are left out since their value is
    /// known exactly.
    pub fn critic_epoch(&mut self, domain: u64) -> Result<f64> {
        let seed = self.config.seed;
        let step = self.critic_step;
        self.critic_step += 1;
        let states = self.minibatch_states(&mut stream(seed, &[domain, step]));
        let m = self.config.m_inner;
        let (policy, critic, env) = (&self.policy, &self.critic, &self.env);
        let n = states.len() as f64;
        let indexed: Vec<(usize, PensionState)> = states.into_iter().enumerate().collect();
        let (grad, loss_sum, bad) = reduce_chunks(&indexed, critic.net.n_params(), |(k, s), g| {
            let mut rng = stream(seed, &[domain, step, *k as u64]);
            let trs = bootstrap_inner(s, policy, env, m, &mut rng)?;
            let target = state_target(s, &trs, critic, env)?;
            if !target.is_finite() {
                return Ok((0.0, 1.0));
            }
            Ok((critic.accumulate_loss_grad(s, target, 2.0 / n, g)?, 0.0))
        })?;
        let loss = loss_sum / n;
        if bad > 0.0 || !loss.is_finite() {
            return Err(Error::Aborted {
                epoch: self.epoch,
                msg: format!("critic loss {loss} with {bad} non-finite targets"),
            });
        }
        finite_or_abort(&grad, self.epoch, "critic gradient")?;
        self.critic_opt.step(self.critic.net.params_mut(), &grad)?;
        finite_or_abort(self.critic.net.params(), self.epoch, "critic parameter")?;
        Ok(loss)
    }

    /// One actor epoch: fresh inner transitions, saddle-point coefficients,
    /// one descent step on the averaged gradient. Returns the gradient norm.
    pub fn actor_epoch(&mut self) -> Result<f64> {
        let seed = self.config.seed;
        let step = self.actor_step;
        self.actor_step += 1;
        let states = self.minibatch_states(&mut stream(seed, &[tag::ACTOR, step]));
        let m = self.config.m_inner;
        let (policy, critic, env) = (&self.policy, &self.critic, &self.env);
        let n = states.len() as f64;
        let indexed: Vec<(usize, PensionState)> = states.into_iter().enumerate().collect();
        let (grad, _, _) = reduce_chunks(&indexed, policy.net.n_params(), |(k, s), g| {
            let mut rng = stream(seed, &[tag::ACTOR, step, *k as u64]);
            let trs = bootstrap_inner(s, policy, env, m, &mut rng)?;
            let v_next = next_values(critic, &trs, env.plan.horizon)?;
            accumulate_actor_gradient(policy, s, &trs, &v_next, env, 1.0 / n, g)?;
            Ok((0.0, 0.0))
        })?;
        finite_or_abort(&grad, self.epoch, "actor gradient")?;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        self.policy_opt.step(self.policy.net.params_mut(), &grad)?;
        finite_or_abort(self.policy.net.params(), self.epoch, "policy parameter")?;
        Ok(norm)
    }

    pub fn warmup(&mut self) -> Result<()> {
        if self.config.warmup_critic_epochs == 0 {
            return Ok(());
        }
        self.simulate_outer()?;
        for _ in 0..self.config.warmup_critic_epochs {
            let loss = self.critic_epoch(tag::WARMUP)?;
            self.log.warmup_losses.push(loss);
        }
        self.last_good = (self.policy.clone(), self.critic.clone());
        Ok(())
    }

    /// One outer epoch of simulation, critic phase and actor phase.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let start = Instant::now();
        self.epoch += 1;
        let proj = self.simulate_outer()?;
        let lr_critic = self.critic_opt.learning_rate;
        let lr_actor = self.policy_opt.learning_rate;
        let mut loss = f64::NAN;
        for _ in 0..self.config.critic_epochs {
            loss = self.critic_epoch(tag::CRITIC)?;
        }
        let mut norm = 0.0;
        for _ in 0..self.config.actor_epochs {
            norm = self.actor_epoch()?;
        }
        self.critic_opt.end_epoch();
        self.policy_opt.end_epoch();
        self.last_good = (self.policy.clone(), self.critic.clone());
        self.log.records.push(EpochRecord {
            epoch: self.epoch,
            critic_loss: loss,
            actor_grad_norm: norm,
            lr_critic,
            lr_actor,
            projection_rate: proj,
        });
        self.log.seconds.push(start.elapsed().as_secs_f64());
        log::info!(
            "epoch {} critic loss {:.6e} actor grad {:.3e}",
            self.epoch,
            loss,
            norm
        );
        Ok(self.log.records.last().expect("record just pushed"))
    }
}

pub struct TrainOutcome {
    pub policy: PolicyNet,
    pub critic: CriticNet,
    pub policy_opt: AdamState,
    pub critic_opt: AdamState,
    pub log: TrainLog,
}

/// Warm-up followed by `epochs` outer epochs.
pub fn train(config: TrainConfig, env: Environment) -> Result<TrainOutcome> {
    let mut t = Trainer::new(config, env)?;
    t.warmup()?;
    for _ in 0..t.config.epochs {
        t.run_epoch()?;
    }
    Ok(TrainOutcome {
        policy: t.policy,
        critic: t.critic,
        policy_opt: t.policy_opt,
        critic_opt: t.critic_opt,
        log: t.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::EvaluationMode;
    use crate::nn::ConstantFractions;

    fn env(alpha: f64) -> Environment {
        let plan = PensionPlanSpec {
            horizon: 5,
            ..Default::default()
        };
        let cohort = CohortRates::flat(22, 2022, 0.01, 5).unwrap();
        Environment::new(
            plan,
            MarketParams::default(),
            cohort,
            CvarPair::new(alpha, alpha).unwrap(),
        )
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            n_outer: 2,
            m_inner: 2,
            epochs: 1,
            minibatch: 2,
            critic_epochs: 1,
            actor_epochs: 1,
            warmup_critic_epochs: 1,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let e = env(0.1);
        let pol = Trainer::new(small_config(), e.clone()).unwrap().policy;
        let s = e.plan.initial_state();
        let a = bootstrap_inner(&s, &pol, &e, 1, &mut stream(1, &[])).unwrap();
        let b = bootstrap_inner(&s, &pol, &e, 1, &mut stream(1, &[])).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_randomness_gives_identical_transitions() {
        let mut e = env(0.1);
        e.market.sigma_s = 0.0;
        e.market.sigma_y = 0.0;
        let pol = ConstantFractions {
            stock: 0.3,
            premium: 0.1,
            gamma: e.plan.gamma,
        };
        let s = e.plan.initial_state();
        let trs = bootstrap_inner(&s, &pol, &e, 10, &mut stream(2, &[])).unwrap();
        assert!(trs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn expectation_reduction_is_baselined_score_gradient() {
        let e = env(1.0);
        let t = Trainer::new(small_config(), e.clone()).unwrap();
        let s = PensionState {
            t: 2,
            wealth: 30.0,
            income: 62.0,
        };
        let trs = bootstrap_inner(&s, &t.policy, &e, 50, &mut stream(4, &[])).unwrap();
        let g = actor_gradient(&t.policy, &t.critic, &s, &trs, &e).unwrap();

        let disc = (-e.market.r).exp();
        let v = next_values(&t.critic, &trs, e.plan.horizon).unwrap();
        let ya: Vec<f64> = trs
            .iter()
            .zip(&v)
            .map(|(tr, v)| tr.costs.ca + disc * v)
            .collect();
        let cb: Vec<f64> = trs.iter().map(|tr| tr.costs.cb).collect();
        let (ma, mb) = (crate::stats::mean(&ya), crate::stats::mean(&cb));
        let row = e.row(2);
        let mut expected = vec![0.0; t.policy.net.n_params()];
        for (m, tr) in trs.iter().enumerate() {
            let (_, sc) = t.policy.log_density_and_score(&s, tr.raw).unwrap();
            let w = (row.p * (ya[m] - ma) + row.q * (cb[m] - mb)) / trs.len() as f64;
            for (x, v) in expected.iter_mut().zip(sc) {
                *x += w * v;
            }
        }
        let scale = expected.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in g.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-10 * scale.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn null_problem_has_zero_gradient() {
        let e = env(0.1);
        let t = Trainer::new(small_config(), e.clone()).unwrap();
        let s = e.plan.initial_state();
        let mut trs = bootstrap_inner(&s, &t.policy, &e, 8, &mut stream(5, &[])).unwrap();
        for tr in &mut trs {
            tr.costs = CostPair { ca: 0.0, cb: 0.0 };
        }
        let k = saddle_coefficients(&trs, &[0.0; 8], e.row(0), e.specs, e.market.r).unwrap();
        assert!(k.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn smoke_training_run() {
        let mut e = env(0.1);
        e.plan.evaluation_mode = EvaluationMode::Nonperiodic;
        let out = train(small_config(), e.clone()).unwrap();
        assert_eq!(out.log.records.len(), 1);
        let again = train(small_config(), e).unwrap();
        assert_eq!(out.policy, again.policy);
        assert_eq!(out.critic, again.critic);
        assert_eq!(out.log.records, again.log.records);
    }
}

//! Small pension problems with finitely many actions and market outcomes,
//! solved exactly by enumerating the whole scenario tree.
//!
//! A toy problem is read from JSON:
//!
//! ```json
//! {
//!   "name": "two-period",
//!   "horizon": 2, "gamma": 0.1, "r": 0.02, "mode": "periodic",
//!   "alpha_a": 0.3, "alpha_b": 0.5,
//!   "death_probs": [0.1, 0.2],
//!   "initial_states": [{"wealth": 10.0, "income": 20.0}],
//!   "actions": [{"stock_frac": 0.5, "premium_frac": 0.1}],
//!   "outcomes": [{"prob": 1.0, "bond_gross": 1.02, "stock_gross": 1.1, "income_growth": 1.03}],
//!   "policy": [[1.0], [1.0]]
//! }
//! ```
//!
//! Actions are fractions of the budget `W + gamma Y`. `policy[t][k]` is the
//! probability of action `k` in every state of period `t`.

use serde::{Deserialize, Serialize};

use super::{
    costs, evaluate_target, step_wealth, EvaluationMode, PensionAction, PensionState, TargetSample,
};
use crate::error::{Error, Result};
use crate::mortality::SurvivalRow;
use crate::risk::{cvar_dual, cvar_primal, CvarPair, DiscreteDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyState {
    pub wealth: f64,
    pub income: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyAction {
    pub stock_frac: f64,
    pub premium_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyOutcome {
    pub prob: f64,
    pub bond_gross: f64,
    pub stock_gross: f64,
    pub income_growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteToyMdp {
    pub name: String,
    pub horizon: usize,
    pub gamma: f64,
    pub r: f64,
    pub mode: EvaluationMode,
    pub alpha_a: f64,
    pub alpha_b: f64,
    pub death_probs: Vec<f64>,
    pub initial_states: Vec<ToyState>,
    pub actions: Vec<ToyAction>,
    pub outcomes: Vec<ToyOutcome>,
    pub policy: Vec<Vec<f64>>,
}

/// Action probabilities per period.
pub type ToyPolicy = Vec<Vec<f64>>;

/// Values of every node of the scenario tree, level by level in traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub levels: Vec<Vec<(PensionState, f64)>>,
}

impl ValueTable {
    fn new(horizon: usize) -> Self {
        Self {
            levels: vec![Vec::new(); horizon + 1],
        }
    }

    /// Mean value over the initial states.
    pub fn initial_mean(&self) -> f64 {
        let l = &self.levels[0];
        l.iter().map(|(_, v)| v).sum::<f64>() / l.len() as f64
    }
}

struct Branch {
    action_idx: usize,
    weight: f64,
    next: PensionState,
    costs: super::CostPair,
}

impl DiscreteToyMdp {
    pub fn from_json(text: &str) -> Result<Self> {
        let toy: Self = serde_json::from_str(text)?;
        toy.validate()?;
        Ok(toy)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(format!("toy problem {:?}: {m}", self.name)));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.death_probs.len() != self.horizon {
            return bad("one death probability per period is required".into());
        }
        for &q in &self.death_probs {
            SurvivalRow::new(q)?;
        }
        if self.initial_states.is_empty() || self.actions.is_empty() || self.outcomes.is_empty() {
            return bad("states, actions and outcomes must be non-empty".into());
        }
        for a in &self.actions {
            if a.stock_frac < 0.0 || a.premium_frac < 0.0 || a.stock_frac + a.premium_frac > 1.0 {
                return bad(format!("action {a:?} is not a feasible budget split"));
            }
        }
        let total: f64 = self.outcomes.iter().map(|o| o.prob).sum();
        if (total - 1.0).abs() > 1e-12 || self.outcomes.iter().any(|o| o.prob < 0.0) {
            return bad("outcome probabilities must form a distribution".into());
        }
        for o in &self.outcomes {
            if !(o.bond_gross > 0.0 && o.stock_gross > 0.0 && o.income_growth > 0.0) {
                return bad("gross returns must be positive".into());
            }
        }
        for s in &self.initial_states {
            if !(s.wealth >= 0.0 && s.income > 0.0) {
                return bad(format!("initial state {s:?} invalid"));
            }
        }
        self.check_policy(&self.policy)?;
        self.specs()?;
        Ok(())
    }

    pub fn specs(&self) -> Result<CvarPair> {
        CvarPair::new(self.alpha_a, self.alpha_b)
    }

    pub fn row(&self, t: usize) -> SurvivalRow {
        let q = self.death_probs[t];
        SurvivalRow { q, p: 1.0 - q }
    }

    pub fn check_policy(&self, policy: &ToyPolicy) -> Result<()> {
        if policy.len() != self.horizon {
            return Err(Error::Input("policy needs one row per period".into()));
        }
        for (t, row) in policy.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if row.len() != self.actions.len()
                || row.iter().any(|p| !(*p >= 0.0))
                || (total - 1.0).abs() > 1e-12
            {
                return Err(Error::Input(format!(
                    "policy row {t} is not a distribution over {} actions",
                    self.actions.len()
                )));
            }
        }
        Ok(())
    }

    fn roots(&self) -> Vec<PensionState> {
        self.initial_states
            .iter()
            .map(|s| PensionState {
                t: 0,
                wealth: s.wealth,
                income: s.income,
            })
            .collect()
    }

    /// Every (action, outcome) pair out of `state` with its probability.
    fn branches(&self, state: &PensionState, action_probs: &[f64]) -> Result<Vec<Branch>> {
        let budget = state.budget(self.gamma);
        let q = self.death_probs[state.t];
        let mut out = Vec::with_capacity(self.actions.len() * self.outcomes.len());
        for (k, a) in self.actions.iter().enumerate() {
            let action = PensionAction {
                alpha: a.stock_frac * budget,
                premium: a.premium_frac * budget,
            };
            for o in &self.outcomes {
                let w_next = step_wealth(state, action, o.bond_gross, o.stock_gross, self.gamma)?;
                let c = costs(self.mode, state, action, w_next, q, self.r, self.gamma)?;
                out.push(Branch {
                    action_idx: k,
                    weight: action_probs[k] * o.prob,
                    next: PensionState {
                        t: state.t + 1,
                        wealth: w_next,
                        income: state.income * o.income_growth,
                    },
                    costs: c,
                });
            }
        }
        Ok(out)
    }
}

fn normalise(weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Exact backward recursion with every one-step CVaR taken by the primal
/// formula on the enumerated outcome distribution.
pub fn dpe_value_bruteforce(toy: &DiscreteToyMdp, policy: &ToyPolicy) -> Result<ValueTable> {
    toy.check_policy(policy)?;
    let specs = toy.specs()?;
    let mut table = ValueTable::new(toy.horizon);

    fn node(
        toy: &DiscreteToyMdp,
        policy: &ToyPolicy,
        specs: CvarPair,
        state: PensionState,
        table: &mut ValueTable,
    ) -> Result<f64> {
        let slot = table.levels[state.t].len();
        table.levels[state.t].push((state, f64::NAN));
        let value = if state.t == toy.horizon {
            -state.wealth
        } else {
            let row = toy.row(state.t);
            let branches = toy.branches(&state, &policy[state.t])?;
            let probs = normalise(branches.iter().map(|b| b.weight).collect());
            let mut member = Vec::with_capacity(branches.len());
            for b in &branches {
                let v_next = node(toy, policy, specs, b.next, table)?;
                member.push(b.costs.ca + (-toy.r).exp() * v_next);
            }
            let mut v = 0.0;
            if row.p > 0.0 {
                v += row.p
                    * cvar_primal(&DiscreteDistribution::new(member, probs.clone())?, specs.a);
            }
            if row.q > 0.0 {
                let ben = branches.iter().map(|b| b.costs.cb).collect();
                v += row.q * cvar_primal(&DiscreteDistribution::new(ben, probs)?, specs.b);
            }
            v
        };
        table.levels[state.t][slot].1 = value;
        Ok(value)
    }

    for root in toy.roots() {
        node(toy, policy, specs, root, &mut table)?;
    }
    Ok(table)
}

/// Same recursion, but each node's value is the dual value target computed
/// from the fully enumerated transitions and their exact probabilities.
pub fn dpe_value_dual(toy: &DiscreteToyMdp, policy: &ToyPolicy) -> Result<ValueTable> {
    toy.check_policy(policy)?;
    let specs = toy.specs()?;
    let mut table = ValueTable::new(toy.horizon);

    fn node(
        toy: &DiscreteToyMdp,
        policy: &ToyPolicy,
        specs: CvarPair,
        state: PensionState,
        table: &mut ValueTable,
    ) -> Result<f64> {
        let slot = table.levels[state.t].len();
        table.levels[state.t].push((state, f64::NAN));
        let value = if state.t == toy.horizon {
            super::terminal_value(state.wealth)
        } else {
            let branches = toy.branches(&state, &policy[state.t])?;
            let probs = normalise(branches.iter().map(|b| b.weight).collect());
            let mut samples = Vec::with_capacity(branches.len());
            for b in &branches {
                let v_next = node(toy, policy, specs, b.next, table)?;
                samples.push(TargetSample {
                    costs: b.costs,
                    w_next: b.next.wealth,
                    v_next,
                });
            }
            evaluate_target(&samples, &probs, toy.row(state.t), specs, toy.r)?.value
        };
        table.levels[state.t][slot].1 = value;
        Ok(value)
    }

    for root in toy.roots() {
        node(toy, policy, specs, root, &mut table)?;
    }
    Ok(table)
}

/// Stationary softmax policy with logits `theta . (stock_frac, premium_frac)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxToyPolicy {
    pub theta: [f64; 2],
}

impl SoftmaxToyPolicy {
    pub fn probs(&self, toy: &DiscreteToyMdp) -> Vec<f64> {
        let logits: Vec<f64> = toy
            .actions
            .iter()
            .map(|a| self.theta[0] * a.stock_frac + self.theta[1] * a.premium_frac)
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        normalise(logits.iter().map(|l| (l - m).exp()).collect())
    }

    /// `d log pi(k) / d theta` for every action.
    pub fn scores(&self, toy: &DiscreteToyMdp) -> Vec<[f64; 2]> {
        let p = self.probs(toy);
        let mean = toy.actions.iter().zip(&p).fold([0.0, 0.0], |acc, (a, pk)| {
            [acc[0] + pk * a.stock_frac, acc[1] + pk * a.premium_frac]
        });
        toy.actions
            .iter()
            .map(|a| [a.stock_frac - mean[0], a.premium_frac - mean[1]])
            .collect()
    }

    pub fn table(&self, toy: &DiscreteToyMdp) -> ToyPolicy {
        vec![self.probs(toy); toy.horizon]
    }
}

/// Value, gradient and the tail pattern of every one-step evaluation. Two
/// parameter points with equal `tail_pattern` share every quantile atom.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyGradient {
    pub value: f64,
    pub grad: [f64; 2],
    pub tail_pattern: Vec<i8>,
}

/// Exact policy gradient of the mean initial value from the saddle points of
/// every node, including the propagated gradient of the next-period value.
pub fn toy_policy_gradient(toy: &DiscreteToyMdp, policy: SoftmaxToyPolicy) -> Result<ToyGradient> {
    let specs = toy.specs()?;
    let probs = policy.probs(toy);
    let scores = policy.scores(toy);
    let disc = (-toy.r).exp();

    fn node(
        toy: &DiscreteToyMdp,
        specs: CvarPair,
        probs: &[f64],
        scores: &[[f64; 2]],
        disc: f64,
        state: PensionState,
        pattern: &mut Vec<i8>,
    ) -> Result<(f64, [f64; 2])> {
        if state.t == toy.horizon {
            return Ok((-state.wealth, [0.0, 0.0]));
        }
        let row = toy.row(state.t);
        let branches = toy.branches(&state, probs)?;
        let w = normalise(branches.iter().map(|b| b.weight).collect());
        let mut ya = Vec::with_capacity(branches.len());
        let mut child_grads = Vec::with_capacity(branches.len());
        for b in &branches {
            let (v, g) = node(toy, specs, probs, scores, disc, b.next, pattern)?;
            ya.push(b.costs.ca + disc * v);
            child_grads.push(g);
        }
        let cb: Vec<f64> = branches.iter().map(|b| b.costs.cb).collect();
        let sa = cvar_dual(&DiscreteDistribution::new(ya.clone(), w.clone())?, specs.a);
        let sb = cvar_dual(&DiscreteDistribution::new(cb.clone(), w.clone())?, specs.b);
        let mut value = 0.0;
        let mut grad = [0.0, 0.0];
        for (m, b) in branches.iter().enumerate() {
            let s = scores[b.action_idx];
            for j in 0..2 {
                if row.p > 0.0 {
                    grad[j] += row.p
                        * w[m]
                        * sa.xi[m]
                        * ((ya[m] - sa.lambda) * s[j] + disc * child_grads[m][j]);
                }
                if row.q > 0.0 {
                    grad[j] += row.q * w[m] * sb.xi[m] * (cb[m] - sb.lambda) * s[j];
                }
            }
            pattern.push((ya[m] - sa.lambda).signum() as i8);
            pattern.push((cb[m] - sb.lambda).signum() as i8);
        }
        if row.p > 0.0 {
            value += row.p * sa.value;
        }
        if row.q > 0.0 {
            value += row.q * sb.value;
        }
        Ok((value, grad))
    }

    let roots = toy.roots();
    let n = roots.len() as f64;
    let mut out = ToyGradient {
        value: 0.0,
        grad: [0.0, 0.0],
        tail_pattern: Vec::new(),
    };
    for root in roots {
        let (v, g) = node(
            toy,
            specs,
            &probs,
            &scores,
            disc,
            root,
            &mut out.tail_pattern,
        )?;
        out.value += v / n;
        out.grad[0] += g[0] / n;
        out.grad[1] += g[1] / n;
    }
    Ok(out)
}

/// Risk-neutral objective and its likelihood-ratio gradient by enumerating
/// complete life paths: a death at period `t` costs `e^{-rt} cB_t`, survival
/// adds `e^{-rt} cA_t`, and reaching retirement adds `-e^{-rT} W_T`.
pub fn score_function_gradient(
    toy: &DiscreteToyMdp,
    policy: SoftmaxToyPolicy,
) -> Result<(f64, [f64; 2])> {
    let probs = policy.probs(toy);
    let scores = policy.scores(toy);

    struct Walk<'a> {
        toy: &'a DiscreteToyMdp,
        probs: &'a [f64],
        scores: &'a [[f64; 2]],
        value: f64,
        grad: [f64; 2],
    }

    impl Walk<'_> {
        fn visit(
            &mut self,
            state: PensionState,
            prob: f64,
            cost: f64,
            score: [f64; 2],
        ) -> Result<()> {
            let disc = (-self.toy.r * state.t as f64).exp();
            if state.t == self.toy.horizon {
                self.finish(prob, cost - disc * state.wealth, score);
                return Ok(());
            }
            let row = self.toy.row(state.t);
            for b in self.toy.branches(&state, self.probs)? {
                if b.weight == 0.0 {
                    continue;
                }
                let s = self.scores[b.action_idx];
                let sc = [score[0] + s[0], score[1] + s[1]];
                if row.q > 0.0 {
                    self.finish(prob * b.weight * row.q, cost + disc * b.costs.cb, sc);
                }
                if row.p > 0.0 {
                    self.visit(
                        b.next,
                        prob * b.weight * row.p,
                        cost + disc * b.costs.ca,
                        sc,
                    )?;
                }
            }
            Ok(())
        }

        fn finish(&mut self, prob: f64, cost: f64, score: [f64; 2]) {
            self.value += prob * cost;
            self.grad[0] += prob * cost * score[0];
            self.grad[1] += prob * cost * score[1];
        }
    }

    let roots = toy.roots();
    let n = roots.len() as f64;
    let mut walk = Walk {
        toy,
        probs: &probs,
        scores: &scores,
        value: 0.0,
        grad: [0.0, 0.0],
    };
    for root in roots {
        walk.visit(root, 1.0 / n, 0.0, [0.0, 0.0])?;
    }
    Ok((walk.value, walk.grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_period(q: f64) -> DiscreteToyMdp {
        DiscreteToyMdp {
            name: "one".into(),
            horizon: 1,
            gamma: 0.1,
            r: 0.03,
            mode: EvaluationMode::Periodic,
            alpha_a: 0.5,
            alpha_b: 0.5,
            death_probs: vec![q],
            initial_states: vec![ToyState {
                wealth: 10.0,
                income: 20.0,
            }],
            actions: vec![ToyAction {
                stock_frac: 0.5,
                premium_frac: 0.2,
            }],
            outcomes: vec![
                ToyOutcome {
                    prob: 0.5,
                    bond_gross: 1.0,
                    stock_gross: 0.8,
                    income_growth: 1.0,
                },
                ToyOutcome {
                    prob: 0.5,
                    bond_gross: 1.0,
                    stock_gross: 1.4,
                    income_growth: 1.0,
                },
            ],
            policy: vec![vec![1.0]],
        }
    }

    #[test]
    fn certain_survival_is_member_term_only() {
        let toy = one_period(0.0);
        let v = dpe_value_bruteforce(&toy, &toy.policy).unwrap();
        // budget 12: stock 6, premium 2.4, bond 3.6 -> W' in {8.4, 12.0}
        // member outcomes cA - e^{-r} W' = 12 - 2 W' e^0... computed directly
        let disc = (-0.03f64).exp();
        let ya = [12.0 - 8.4 + disc * -8.4, 12.0 - 12.0 + disc * -12.0];
        let expected = ya[0].max(ya[1]);
        assert!((v.levels[0][0].1 - expected).abs() < 1e-12);
    }

    #[test]
    fn certain_death_is_beneficiary_term_only() {
        let toy = one_period(1.0);
        let v = dpe_value_bruteforce(&toy, &toy.policy).unwrap();
        // cB = -W' - e^r I / 1, worst half is the low-wealth outcome
        let expected = -8.4 - 0.03f64.exp() * 2.4;
        assert!((v.levels[0][0].1 - expected).abs() < 1e-12);
    }

    #[test]
    fn bad_policy_row() {
        let toy = one_period(0.1);
        assert!(matches!(
            dpe_value_bruteforce(&toy, &vec![vec![0.7]]),
            Err(Error::Input(_))
        ));
    }
}
